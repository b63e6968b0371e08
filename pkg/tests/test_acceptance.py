"""Acceptance criteria 1-9.

Each test records ``(passed, detail)`` in ``RESULTS``; ``conftest.py``
prints one line per criterion at the end of the run.
"""

import itertools
import math
import time

import numpy as np
import pytest

from spectra_index.elliptic import elliptic_index, interval_as_sturm_liouville
from spectra_index.galerkin import galerkin_count
from spectra_index.index import index_first_order, index_sweep, relative_index
from spectra_index.nonlinear import (
    CERTIFIED,
    REFUTED,
    certify,
    cross_validate,
    solve_bvp,
)
from spectra_index.nonlinear.models import pinched, saturating
from spectra_index.oracles import (
    ANTIPERIODIC,
    PERIODIC,
    ConstantSpectrum,
    calibrate_scalar,
    dirichlet_constant,
    periodic_constant,
    rectangle_constant,
    rectangle_threshold,
)
from spectra_index.problems import (
    Bolza,
    EllipticProblem,
    FirstOrderProblem,
    GeneralizedPeriodic,
    Interval,
    MatrixFunction,
    Rectangle,
    ScalarField,
    SecondOrderProblem,
    SturmLiouville,
)
from spectra_index.spectral import DEFECT_TOL

from conftest import PI, random_symmetric

RESULTS = {}
# every engine result produced below, checked again by criterion 6
CORPUS = []


def record(key, ok, detail):
    RESULTS[key] = (bool(ok), detail)
    return ok


def sweep(p):
    r = index_sweep(p)
    CORPUS.append(r)
    return r


def constant_problem(lam, B, bc):
    n = B.shape[0]
    return SecondOrderProblem(MatrixFunction.constant(lam * np.eye(n)), MatrixFunction.constant(B), bc).validate()


def rotated(rng, alphas):
    n = len(alphas)
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    return Q @ np.diag(alphas) @ Q.T


# 1 -------------------------------------------------------------------------------


def test_criterion_1_periodic_oracle_equivalence():
    rng = np.random.default_rng(101)
    per_case = 50
    mismatches = []
    start = time.perf_counter()
    for case, make in ((PERIODIC, GeneralizedPeriodic.periodic), (ANTIPERIODIC, GeneralizedPeriodic.antiperiodic)):
        for _ in range(per_case):
            n = int(rng.integers(1, 4))
            lam = float(rng.choice([0.5, 1.0, 2.0]))
            spec = ConstantSpectrum(tuple(rng.uniform(-30.0, 150.0, n)), lam)
            r = sweep(constant_problem(lam, rotated(rng, spec.eigenvalues), make(n)))
            want = periodic_constant(case, spec)
            if (r.i, r.nu) != want:
                mismatches.append((case, spec, (r.i, r.nu), want))
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed <= 60.0
    record(1, ok, f"{2 * per_case} spectra, {len(mismatches)} mismatches, {elapsed:.1f} s (limit 60 s)")
    assert not mismatches, mismatches[:3]
    assert elapsed <= 60.0


# 2 -------------------------------------------------------------------------------


def test_criterion_2_dirichlet_oracle():
    rng = np.random.default_rng(202)
    mismatches = []
    count = 50
    for k in range(count):
        n = int(rng.integers(1, 4))
        alphas = rng.uniform(-30.0, 200.0, n)
        if k % 10 == 0:
            alphas[0] = (int(rng.integers(1, 4)) * PI) ** 2  # exact kernel
        spec = ConstantSpectrum(tuple(alphas))
        r = sweep(constant_problem(1.0, rotated(rng, spec.eigenvalues), SturmLiouville(0.0, PI)))
        want = dirichlet_constant(spec)
        if (r.i, r.nu) != want:
            mismatches.append((spec, (r.i, r.nu), want))
    record(2, not mismatches, f"{count} spectra, {len(mismatches)} mismatches")
    assert not mismatches, mismatches[:3]


# 3 -------------------------------------------------------------------------------

ANGLES = [(0.0, PI), (PI / 4, 3 * PI / 4), (0.0, PI / 2), (PI / 3, PI / 6), (1.0, 2.5)]


def test_criterion_3_cross_system_identity():
    rng = np.random.default_rng(303)
    mismatches = []
    total = 0
    for k in range(20):
        n = 1 if k < 14 else 2
        B = random_symmetric(rng, n, -20.0, 60.0)
        Bf = np.zeros((2 * n, 2 * n))
        Bf[:n, :n] = B
        Bf[n:, n:] = np.eye(n)
        for alpha, beta in ANGLES[:4] if k % 2 else ANGLES[1:]:
            rf = index_first_order(FirstOrderProblem(MatrixFunction.constant(Bf), Bolza(alpha, beta)).validate())
            rs = sweep(constant_problem(1.0, B, SturmLiouville(alpha, beta)))
            total += 1
            CORPUS.append(rf)
            if (rf.i, rf.nu) != (rs.i, rs.nu):
                mismatches.append((B.tolist(), alpha, beta, (rf.i, rf.nu), (rs.i, rs.nu)))
    record(3, not mismatches, f"20 matrices x 4 angle pairs = {total} comparisons, {len(mismatches)} mismatches")
    assert not mismatches, mismatches[:3]


# 4 -------------------------------------------------------------------------------


def chain_pairs(values):
    """All ordered pairs (lower, upper) of an increasing chain."""
    return list(itertools.combinations(range(len(values)), 2))


def bump(rng, n):
    """Nonnegative piecewise-constant increment, positive on one random piece."""
    a = float(rng.uniform(0.05, 0.6))
    b = float(min(a + rng.uniform(0.1, 0.4), 0.95))
    P = random_symmetric(rng, n, 1.0, 25.0)
    Z = np.zeros((n, n))
    return MatrixFunction.piecewise([a, b], [Z, P, Z])


def monotone_chain_violations(indices, pairs):
    bad = []
    for lo, hi in pairs:
        i1, n1 = indices[lo]
        i2, _ = indices[hi]
        if i1 + n1 > i2:
            bad.append((lo, hi, indices[lo], indices[hi]))
    return bad


def _class_general(rng):
    # variable Lambda, random angles, increments supported on subintervals
    pairs = bad = 0
    for _ in range(2):
        n = int(rng.integers(1, 3))
        Lam = MatrixFunction.sampled([np.eye(n) * s for s in rng.uniform(0.5, 2.0, 4)])
        bc = SturmLiouville(float(rng.uniform(0, 3.0)), float(rng.uniform(0.2, PI)))
        B = MatrixFunction.sampled([random_symmetric(rng, n, -20, 20) for _ in range(3)])
        chain = [B]
        for _ in range(10):
            chain.append(chain[-1] + bump(rng, n))
        idx = [tuple(sweep(SecondOrderProblem(Lam, Bk, bc).validate())) for Bk in chain]
        pp = chain_pairs(chain)
        pairs += len(pp)
        bad += len(monotone_chain_violations(idx, pp))
    return pairs, bad


def _constant_chain(rng, n, bc, lo, hi, start=None, lam=1.0, length=15):
    B = random_symmetric(rng, n, lo, hi) if start is None else start
    chain = [B]
    for _ in range(length - 1):
        chain.append(chain[-1] + random_symmetric(rng, n, 0.5, 15.0))
    idx = [tuple(sweep(constant_problem(lam, Bk, bc))) for Bk in chain]
    pp = chain_pairs(chain)
    return len(pp), len(monotone_chain_violations(idx, pp))


def _class_sturm_liouville(rng):
    a = _constant_chain(rng, 1, SturmLiouville(0.0, PI), 0, 0, start=np.array([[PI**2]]))
    b = _constant_chain(rng, 2, SturmLiouville(PI / 4, 2.0), -10, 10)
    return a[0] + b[0], a[1] + b[1]


def _class_periodic(rng):
    a = _constant_chain(rng, 1, GeneralizedPeriodic.periodic(1), -5, 5, start=np.array([[0.0]]))
    b = _constant_chain(rng, 2, GeneralizedPeriodic.antiperiodic(2), -10, 10, lam=0.5)
    c = _constant_chain(rng, 1, GeneralizedPeriodic.scalar(1, 2.0), -10, 10)
    return a[0] + b[0] + c[0], a[1] + b[1] + c[1]


def _class_bolza(rng):
    pairs = bad = 0
    for alpha, beta in ((0.0, PI), (0.7, 2.2)):
        n = 1
        chain = [random_symmetric(rng, 2 * n, -10, 10)]
        for _ in range(14):
            chain.append(chain[-1] + random_symmetric(rng, 2 * n, 0.5, 10.0))
        idx = []
        for Bk in chain:
            r = index_first_order(FirstOrderProblem(MatrixFunction.constant(Bk), Bolza(alpha, beta)).validate())
            CORPUS.append(r)
            idx.append((r.i, r.nu))
        pp = chain_pairs(chain)
        pairs += len(pp)
        bad += len(monotone_chain_violations(idx, pp))
    return pairs, bad


def _class_elliptic(rng):
    pairs = bad = 0
    for L1, L2 in ((1.0, 1.0), (1.3, 0.8)):
        bs = np.sort(rng.uniform(-10, 250, 15))
        bs[3] = rectangle_threshold(1, 1, L1, L2)
        bs = np.sort(bs)
        idx = [tuple(elliptic_index(EllipticProblem(Rectangle(L1, L2), ScalarField.constant(b)))) for b in bs]
        pp = chain_pairs(bs)
        pairs += len(pp)
        bad += len(monotone_chain_violations(idx, pp))
    # smooth potentials on a rectangle and an interval
    base = np.outer(np.linspace(0, 1, 5), np.linspace(1, 0, 5))
    chain = [ScalarField.sampled(base * 10 + c) for c in np.linspace(0, 120, 15)]
    idx = [tuple(elliptic_index(EllipticProblem(Rectangle(1.0, 1.0), b))) for b in chain]
    pp = chain_pairs(chain)
    pairs += len(pp)
    bad += len(monotone_chain_violations(idx, pp))
    return pairs, bad


def test_criterion_4_monotonicity():
    rng = np.random.default_rng(404)
    classes = {
        "general (variable coefficients)": _class_general(rng),
        "Sturm-Liouville": _class_sturm_liouville(rng),
        "generalized periodic in B": _class_periodic(rng),
        "Bolza first order": _class_bolza(rng),
        "Dirichlet Laplacian": _class_elliptic(rng),
    }
    detail = "; ".join(f"{k}: {p} pairs, {v} violations" for k, (p, v) in classes.items())
    ok = all(p >= 100 and v == 0 for p, v in classes.values())
    record(4, ok, detail)
    assert ok, detail


def _lambda_chain(rng, reverse):
    """Pairs Lambda1 < Lambda2 (constant, so Lambda(1) = Lambda(0)) at fixed B."""
    pairs = bad = 0
    witnesses = []
    for n, bc_make, B in (
        (1, GeneralizedPeriodic.periodic, np.array([[5.0]])),
        (1, GeneralizedPeriodic.antiperiodic, np.array([[60.0]])),
        (2, GeneralizedPeriodic.periodic, np.diag([20.0, 90.0])),
    ):
        scales = np.sort(rng.uniform(0.05, 3.0, 12))
        res = [tuple(sweep(constant_problem(float(s), B, bc_make(n)))) for s in scales]
        for lo, hi in chain_pairs(scales):
            pairs += 1
            (i1, n1), (i2, n2) = res[lo], res[hi]
            violated = (i2 + n2 > i1) if reverse else (i1 + n1 > i2)
            if violated:
                bad += 1
                if len(witnesses) < 2:
                    witnesses.append(f"n={n}, B={np.diag(B).tolist()}, scales {scales[lo]:.3g} < {scales[hi]:.3g}: "
                                     f"(i, nu) {res[lo]} vs {res[hi]}")
    return pairs, bad, witnesses


@pytest.mark.xfail(strict=True, reason="the stated Lambda-monotonicity has the inequality reversed; see the ledger")
def test_criterion_4b_lambda_monotonicity_as_stated():
    rng = np.random.default_rng(405)
    pairs, bad, witnesses = _lambda_chain(rng, reverse=False)
    record("4b", bad == 0, f"as stated (Lambda1 < Lambda2 => i1 + nu1 <= i2): {pairs} pairs, {bad} violations; "
                           f"e.g. {'; '.join(witnesses)}")
    assert bad == 0


def test_criterion_4c_lambda_monotonicity_reversed():
    rng = np.random.default_rng(405)
    pairs, bad, _ = _lambda_chain(rng, reverse=True)
    record("4c", bad == 0 and pairs >= 100,
           f"reversed (Lambda1 < Lambda2 => i2 + nu2 <= i1): {pairs} pairs, {bad} violations")
    assert bad == 0 and pairs >= 100


# 5 -------------------------------------------------------------------------------


def test_criterion_5_additivity_and_k_independence():
    rng = np.random.default_rng(505)
    templates = [
        constant_problem(1.0, np.zeros((1, 1)), SturmLiouville(0.0, PI)),
        constant_problem(1.0, np.zeros((1, 1)), SturmLiouville(0.6, 2.0)),
        constant_problem(1.0, np.zeros((2, 2)), GeneralizedPeriodic.periodic(2)),
        constant_problem(0.5, np.zeros((1, 1)), GeneralizedPeriodic.antiperiodic(1)),
    ]
    triples = 100
    add_bad = k_bad = 0
    for k in range(triples):
        tp = templates[k % len(templates)]
        n = tp.n
        if k % 5 == 4:
            Bs = [MatrixFunction.piecewise([0.4], [random_symmetric(rng, n, -20, 60), random_symmetric(rng, n, -20, 60)])
                  for _ in range(3)]
        else:
            Bs = [MatrixFunction.constant(random_symmetric(rng, n, -20, 60)) for _ in range(3)]
        B1, B2, B3 = Bs
        a = relative_index(tp, B1, B2)
        b = relative_index(tp, B2, B3)
        c = relative_index(tp, B1, B3)
        if a + b != c:
            add_bad += 1
        kk = 1.0 + max(B.sup_norm() for B in (B1, B2))
        if relative_index(tp, B1, B2, k=kk) != relative_index(tp, B1, B2, k=kk + 5.0):
            k_bad += 1
    ok = add_bad == 0 and k_bad == 0
    record(5, ok, f"{triples} triples: {add_bad} additivity failures, {k_bad} k-dependence failures")
    assert ok


# 6 -------------------------------------------------------------------------------


def test_criterion_6_validator_agreement():
    rng = np.random.default_rng(606)
    disagreements = []
    checked = 0
    # dual route: the sweep without its built-in validation against the discrete count
    for k in range(24):
        n = int(rng.integers(1, 3))
        Lam = MatrixFunction.sampled([np.eye(n) * s for s in rng.uniform(0.5, 2.0, 3)])
        B = MatrixFunction.piecewise([float(rng.uniform(0.2, 0.8))],
                                     [random_symmetric(rng, n, -20, 80), random_symmetric(rng, n, -20, 80)])
        if k % 3 == 0:
            bc = SturmLiouville(float(rng.uniform(0, 3.0)), float(rng.uniform(0.2, PI)))
        elif k % 3 == 1:
            bc = GeneralizedPeriodic.antiperiodic(n)
            Lam = MatrixFunction.constant(np.eye(n) * float(rng.uniform(0.5, 2.0)))
        else:
            bc = GeneralizedPeriodic.periodic(n)
            Lam = MatrixFunction.constant(np.eye(n) * float(rng.uniform(0.5, 2.0)))
        p = SecondOrderProblem(Lam, B, bc).validate()
        r = index_sweep(p, validate=False)
        g = galerkin_count(p)
        checked += 1
        if (r.i, r.nu) != (g.i, g.nu):
            disagreements.append((k, (r.i, r.nu), (g.i, g.nu)))
        CORPUS.append(r)
    flagged = [r for r in CORPUS if r.validation.get("agree") is False]
    defects = [r.defect for r in CORPUS]
    worst = max(defects) if defects else 0.0
    ok = not disagreements and not flagged and worst <= DEFECT_TOL
    record(6, ok, f"{checked} independent sweep/discrete comparisons, {len(disagreements)} disagreements; "
                  f"{len(CORPUS)} accepted results, max symplectic defect {worst:.2e}")
    assert ok, disagreements[:3]


# 7 -------------------------------------------------------------------------------


def test_criterion_7_elliptic():
    rng = np.random.default_rng(707)
    mismatches = []
    cases = []
    for _ in range(27):
        L1, L2 = rng.uniform(0.4, 2.5, 2)
        cases.append((float(rng.uniform(-20, 400)), float(L1), float(L2)))
    for j, k, L1, L2 in ((1, 1, 1.0, 1.0), (2, 1, 1.0, 2.0), (2, 3, 1.5, 0.7)):
        cases.append((rectangle_threshold(j, k, L1, L2), L1, L2))
    kernels = 0
    for b, L1, L2 in cases:
        got = tuple(elliptic_index(EllipticProblem(Rectangle(L1, L2), ScalarField.constant(b))))
        want = rectangle_constant(b, L1, L2)
        kernels += want[1] > 0
        if got != want:
            mismatches.append((b, L1, L2, got, want))
    interval_bad = []
    intervals = [ScalarField.constant(float(b)) for b in rng.uniform(-10, 150, 6)]
    intervals += [ScalarField.constant(PI**2 / 4.0), ScalarField.sampled(np.linspace(0, 1, 9) ** 2 * 40),
                  ScalarField.function(lambda x: 30 * np.sin(x) ** 2)]
    for b in intervals:
        p = EllipticProblem(Interval(2.0), b)
        got = tuple(elliptic_index(p, engine="galerkin"))
        want = tuple(sweep(interval_as_sturm_liouville(p)))
        if got != want:
            interval_bad.append((b, got, want))
    ok = not mismatches and not interval_bad and len(cases) >= 30 and kernels >= 3
    record(7, ok, f"{len(cases)} rectangles ({kernels} with nu > 0), {len(mismatches)} mismatches; "
                  f"{len(intervals)} intervals, {len(interval_bad)} disagreements with the sweep")
    assert ok, (mismatches[:3], interval_bad[:3])


# 8 -------------------------------------------------------------------------------


def test_criterion_8_nonlinear_pipeline():
    eps = 0.1
    B1, B2 = PI**2 + eps, 9 * PI**2 - eps
    flags = ["pinching", "sublinear-remainder"]
    notes = []
    tp = constant_problem(1.0, np.zeros((1, 1)), GeneralizedPeriodic.antiperiodic(1))
    p = pinched(tp, {"B1": B1, "B2": B2, "forcing": 5.0})
    cert = certify("3.10", tp, {"B1": B1, "B2": B2}, asserted=flags, problem=p)
    mutated = certify("3.10", tp, {"B1": B1, "B2": 9 * PI**2}, asserted=flags, problem=p)
    cert_ok = cert.verdict == CERTIFIED and mutated.verdict == REFUTED
    notes.append(f"certify {cert.verdict}/{mutated.verdict}")

    solve_ok = True
    for n, forcing in ((1, 5.0), (1, 50.0), (2, [3.0, -20.0])):
        tpn = constant_problem(1.0, np.zeros((n, n)), GeneralizedPeriodic.antiperiodic(n))
        pn = pinched(tpn, {"B1": B1, "B2": B2, "forcing": forcing})
        c = certify("3.10", tpn, {"B1": B1, "B2": B2}, asserted=flags, problem=pn)
        sol = solve_bvp(pn, certificate=c, multistart=0)
        good = sol.residuals[-2] <= 1e-8 and sol.residuals[-1] <= 1e-8 and sol.richardson_error <= 1e-6
        solve_ok &= good
    notes.append(f"solve_bvp residual/Richardson {'ok' if solve_ok else 'FAILED'}")

    convex = [
        (SturmLiouville(0.0, PI), 5.0, 2.0, 3.0, 1.0),
        (SturmLiouville(0.0, PI), 15.0, 3.0, 1.0, 1.0),
        (SturmLiouville(PI / 4, 3 * PI / 4), 20.0, 2.0, 2.0, 1.0),
        (SturmLiouville(0.0, PI / 2), 1.0, 1.0, 5.0, 0.5),
        (SturmLiouville(PI / 3, PI), 30.0, 4.0, -2.0, 1.0),
        (SturmLiouville(0.0, PI), 50.0, 5.0, 4.0, 2.0),
    ]
    worst_distance = worst_gap = 0.0
    dual_ok = True
    for bc, b, delta, f, c in convex:
        tpc = constant_problem(1.0, np.zeros((1, 1)), bc)
        pc = saturating(tpc, {"b": b, "delta": delta, "forcing": f})
        # Hessian lies in [b, b + delta]: B1 = b - c, B2 = b + delta
        cert9 = certify("1.9", tpc, {"B1": b - c, "B2": b + delta},
                        asserted=["convex-after-shift", "quadratic-upper-bound"], problem=pc)
        if cert9.verdict != CERTIFIED:
            dual_ok = False
            notes.append(f"1.9 not certified for b={b}")
            continue
        out = cross_validate(pc, b - c)
        gap = max(abs(g) for g in out["dual"].diagnostics["fenchel_gap"])
        worst_distance = max(worst_distance, out["distance"])
        worst_gap = max(worst_gap, gap)
        dual_ok &= out["distance"] <= 1e-5 and gap <= 1e-8 and out["dual"].residual <= 1e-6
    notes.append(f"{len(convex)} convex instances: max distance {worst_distance:.2e}, max Fenchel gap {worst_gap:.2e}")
    ok = cert_ok and solve_ok and dual_ok
    record(8, ok, "; ".join(notes))
    assert ok


# 9 -------------------------------------------------------------------------------


def test_criterion_9_scalar_calibration():
    rng = np.random.default_rng(909)
    instances = []
    for a in (2.0, -2.0, 3.0, -0.5, 0.25):
        for _ in range(4):
            n = int(rng.integers(1, 3))
            instances.append((a, ConstantSpectrum(tuple(rng.uniform(-20.0, 150.0, n)), float(rng.choice([0.5, 1.0, 2.0])))))
    report = calibrate_scalar(instances)
    if report.j_start is not None:
        ok = report.matches[report.j_start] == len(instances)
        detail = f"{len(instances)} instances; j-range starts at {report.j_start} and reproduces every engine result"
    else:
        ok = bool(report.discrepancies)
        detail = f"{len(instances)} instances; no j-range matches, {len(report.discrepancies)} discrepancies reported"
    record(9, ok, detail)
    assert ok
