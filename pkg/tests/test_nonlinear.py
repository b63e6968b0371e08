import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectra_index.errors import ConfigError, DomainError, NotStronglyConvex, NumericalError
from spectra_index.nonlinear import (
    CERTIFIED,
    INCONCLUSIVE,
    REFUTED,
    ConvexFunction,
    NonlinearProblem,
    certify,
    cross_validate,
    dual_solve,
    fenchel_conjugate,
    l2_norm,
    nonlinearity,
    solve_bvp,
)
from spectra_index.nonlinear.models import linear, pinched, saturating, zero
from spectra_index.problems import (
    EllipticProblem,
    GeneralizedPeriodic,
    Interval,
    Rectangle,
    ScalarField,
    SturmLiouville,
)

from conftest import PI, second_order

EPS = 0.1
B1_311 = PI**2 + EPS
B2_311 = 9 * PI**2 - EPS


def antiperiodic(n=1):
    return second_order(np.zeros((n, n)), bc=GeneralizedPeriodic.antiperiodic(n))


def dirichlet():
    return second_order([[0.0]])


# models -------------------------------------------------------------------


def test_registry_and_errors():
    tp = dirichlet()
    assert nonlinearity(tp, {"name": "zero"}).name == "zero"
    with pytest.raises(ConfigError):
        nonlinearity(tp, {"name": "cubic"})
    with pytest.raises(ConfigError):
        nonlinearity(tp, {"name": "pinched", "params": {"B1": 1.0}})


def test_inconsistent_split_is_rejected():
    tp = dirichlet()
    bad = NonlinearProblem(tp, force=lambda t, x: 2.0 * x, slope=lambda t, x: np.ones((x.shape[0], 1, 1)))
    with pytest.raises(ConfigError):
        bad.validate()


@given(st.integers(0, 10**6))
def test_pinched_force_split_and_jacobian(seed):
    p = pinched(antiperiodic(2), {"B1": B1_311, "B2": B2_311, "forcing": [1.0, -2.0]})
    rng = np.random.default_rng(seed)
    t = rng.random(20)
    x = rng.uniform(-3, 3, (20, 2))
    split = np.einsum("mij,mj->mi", p.slope(t, x), x) + p.remainder(t, x)
    assert np.allclose(p.F(t, x), split, atol=1e-10)
    fd = NonlinearProblem(p.template, force=p.force).dF(t, x)
    assert np.allclose(p.dF(t, x), fd, atol=1e-5 * (1 + np.abs(fd).max()))


def test_pinched_slope_stays_between_bounds():
    p = pinched(antiperiodic(), {"B1": B1_311, "B2": B2_311})
    t, x = p.sample(radius=50.0)
    s = p.slope(t, x)[:, 0, 0]
    assert np.all(s >= B1_311 - 1e-9) and np.all(s <= B2_311 + 1e-9)


# solve_bvp ------------------------------------------------------------------


def test_linear_problem_matches_closed_form():
    # x'' + 5 x + 1 = 0, x(0) = x(1) = 0
    p = linear(dirichlet(), {"B": 5.0, "h": 1.0})
    sol = solve_bvp(p, start=5.0, waive=True, multistart=0)
    r = math.sqrt(5.0)
    A = 0.2
    Bc = 0.2 * (1 - math.cos(r)) / math.sin(r)
    t = sol.grid
    exact = A * np.cos(r * t) + Bc * np.sin(r * t) - 0.2
    assert np.max(np.abs(sol.values[:, 0] - exact)) <= 1e-8
    assert sol.residual <= 1e-8


def test_zero_nonlinearity_gives_zero():
    sol = solve_bvp(zero(dirichlet()), start=1.0, waive=True, multistart=0)
    assert np.max(np.abs(sol.values)) == 0.0


@pytest.mark.parametrize("n, forcing", [(1, 5.0), (1, 50.0), (2, [3.0, -20.0])])
def test_example_instance_converges(n, forcing):
    tp = antiperiodic(n)
    p = pinched(tp, {"B1": B1_311, "B2": B2_311, "forcing": forcing})
    cert = certify("3.10", tp, {"B1": B1_311, "B2": B2_311}, asserted=["pinching", "sublinear-remainder"], problem=p)
    assert cert.verdict == CERTIFIED
    sol = solve_bvp(p, certificate=cert, multistart=0)
    assert sol.residuals[-2] <= 1e-8 and sol.residuals[-1] <= 1e-8
    assert sol.richardson_error <= 1e-6
    assert sol.boundary_residual <= 1e-8
    assert l2_norm(sol.grid, sol.values) > 0.0
    # antiperiodic ends
    assert np.allclose(sol.values[-1], -sol.values[0], atol=1e-8)


def test_certificate_requirements():
    tp = antiperiodic()
    p = pinched(tp, {"B1": B1_311, "B2": B2_311})
    with pytest.raises(ConfigError):
        solve_bvp(p)
    refuted = certify("3.10", tp, {"B1": B1_311, "B2": 9 * PI**2}, asserted=["pinching", "sublinear-remainder"])
    assert refuted.verdict == REFUTED
    with pytest.raises(ConfigError):
        solve_bvp(p, certificate=refuted)


def test_resonant_problem_fails_loudly():
    p = linear(dirichlet(), {"B": PI**2, "h": 1.0})
    with pytest.raises(NumericalError):
        solve_bvp(p, start=PI**2, waive=True, multistart=0)


def test_start_shift_recorded_when_start_is_degenerate():
    p = linear(dirichlet(), {"B": 5.0, "h": 1.0})
    sol = solve_bvp(p, start=PI**2, waive=True, multistart=0)
    assert sol.homotopy["start_shift"] > 0.0


def test_interval_and_rectangle_solves():
    iv = EllipticProblem(Interval(2.0), ScalarField.constant(0.0))
    sol = solve_bvp(saturating(iv, {"b": 1.0, "delta": 2.0, "forcing": 3.0}), start=1.0, waive=True, multistart=0)
    assert sol.residual <= 1e-8
    rect = EllipticProblem(Rectangle(1.0, 1.0), ScalarField.constant(0.0))
    sol = solve_bvp(saturating(rect, {"b": 5.0, "delta": 2.0, "forcing": 3.0}), start=4.0, waive=True, multistart=0)
    assert sol.residual <= 1e-8
    assert sol.method == "sine-Galerkin"
    assert np.allclose(sol.values[0], 0.0) and np.allclose(sol.values[:, -1], 0.0)


def test_multistart_reports_extra_solutions_on_symmetric_problem():
    # x'' + 50 x - x^3-like saturation: the odd nonlinearity admits +/- pairs
    tp = dirichlet()
    p = saturating(tp, {"b": 50.0, "delta": -45.0})
    sol = solve_bvp(p, start=5.0, waive=True, multistart=8, seed=1)
    assert sol.residual <= 1e-8
    assert len(sol.others) >= 1


# Fenchel conjugate ---------------------------------------------------------------


def quartic():
    return ConvexFunction(
        lambda t, y: y[:, 0] ** 4 / 4 + y[:, 0] ** 2 / 2,
        lambda t, y: y**3 + y,
        lambda t, y: (3 * y**2 + 1)[:, :, None],
    )


def test_conjugate_examples():
    c = fenchel_conjugate(ConvexFunction.quadratic(np.eye(2)), [1.0, -2.0])
    assert c.value == pytest.approx(2.5) and np.allclose(c.y, [1.0, -2.0])
    c = fenchel_conjugate(ConvexFunction.quadratic(3.0), [2.0])
    assert c.value == pytest.approx(4.0 / 6.0)
    c = fenchel_conjugate(quartic(), [2.0])
    assert c.y[0] == pytest.approx(1.0, abs=1e-12)
    assert c.value == pytest.approx(1.25, abs=1e-12)


def test_quartic_conjugate_against_grid_search():
    y = np.linspace(-3, 3, 600001)
    brute = np.max(2.0 * y - (y**4 / 4 + y**2 / 2))
    assert fenchel_conjugate(quartic(), [2.0]).value == pytest.approx(brute, abs=1e-9)


@given(st.floats(-50, 50))
def test_conjugate_gap_invariant(u):
    c = fenchel_conjugate(quartic(), [u])
    N = quartic().value(0.0, c.y[None, :])[0]
    assert abs(c.value + N - u * c.y[0]) <= 1e-10
    assert c.gap <= 1e-10


def test_conjugate_rejects_concave():
    with pytest.raises(NotStronglyConvex):
        fenchel_conjugate(ConvexFunction.quadratic(-1.0), [1.0])


# dual_solve ----------------------------------------------------------------------


def test_dual_quadratic_gives_trivial_solution():
    p = saturating(dirichlet(), {"b": 20.0})
    sol = dual_solve(p, 19.0)
    assert np.max(np.abs(sol.values)) <= 1e-12
    assert sol.residual <= 1e-6


@pytest.mark.parametrize(
    "bc, b, delta, f, c",
    [
        (SturmLiouville(0.0, PI), 5.0, 2.0, 3.0, 1.0),
        (SturmLiouville(PI / 4, 3 * PI / 4), 20.0, 2.0, 2.0, 1.0),
        (SturmLiouville(PI / 3, PI), 30.0, 4.0, -2.0, 1.0),
    ],
)
def test_dual_agrees_with_collocation(bc, b, delta, f, c):
    tp = second_order([[0.0]], bc=bc)
    p = saturating(tp, {"b": b, "delta": delta, "forcing": f})
    out = cross_validate(p, b - c)
    assert out["agree"] and out["distance"] <= 1e-5
    d = out["dual"]
    assert d.residual <= 1e-6
    assert max(abs(g) for g in d.diagnostics["fenchel_gap"]) <= 1e-8
    psi = d.diagnostics["psi_history"]
    assert all(b_ <= a_ for a_, b_ in zip(psi, psi[1:]))


def test_dual_domain_errors():
    p = saturating(antiperiodic(), {"b": 5.0})
    with pytest.raises(DomainError):
        dual_solve(p, 4.0)
    q = saturating(dirichlet(), {"b": 12.0, "delta": 1.0})
    with pytest.raises(DomainError):
        dual_solve(q, PI**2)


# certify -------------------------------------------------------------------------


def test_certify_example_and_mutation():
    tp = antiperiodic()
    ok = certify("3.10", tp, {"B1": B1_311, "B2": B2_311}, asserted=["pinching", "sublinear-remainder"])
    assert ok.verdict == CERTIFIED
    assert ok.indices["B1"] == [2, 0] and ok.indices["B2"] == [2, 0]
    bad = certify("3.10", tp, {"B1": B1_311, "B2": 9 * PI**2}, asserted=["pinching", "sublinear-remainder"])
    assert bad.verdict == REFUTED
    assert bad.indices["B2"] == [2, 2]
    assert certify("3.10", tp, {"B1": B1_311, "B2": B2_311}).verdict == INCONCLUSIVE


@settings(max_examples=6)
@given(st.integers(1, 3), st.integers(1, 2))
def test_certify_refutes_every_crossing(k, n):
    tp = antiperiodic(n)
    B1 = ((2 * k - 1) * PI) ** 2 + EPS
    B2 = ((2 * k + 1) * PI) ** 2
    rep = certify("3.10", tp, {"B1": B1, "B2": B2}, asserted=["pinching", "sublinear-remainder"])
    assert rep.verdict == REFUTED


def test_certify_convex_families():
    tp = dirichlet()
    rep = certify("1.9", tp, {"B1": 4.0, "B2": 4.0}, asserted=["convex-after-shift", "quadratic-upper-bound"])
    assert rep.verdict == CERTIFIED
    q = saturating(tp, {"b": 5.0, "delta": 2.0, "forcing": 3.0})
    rep = certify("1.9", tp, {"B1": 4.0, "B2": 7.0}, asserted=["convex-after-shift", "quadratic-upper-bound"], problem=q)
    assert rep.verdict == CERTIFIED
    # sampled evidence refutes a false convexity claim
    rep = certify("1.9", tp, {"B1": 8.0, "B2": 8.0}, asserted=["convex-after-shift", "quadratic-upper-bound"], problem=q)
    assert rep.verdict == REFUTED


def test_certify_nontrivial_and_two_solution_clauses():
    tp = dirichlet()
    rep = certify("3.5", tp, {"B1": 50.0, "B2": 80.0, "Bbar": 5.0}, asserted=["pinching", "zero-equilibrium"])
    assert rep.verdict == CERTIFIED
    assert rep.clauses["second-solution"]["status"] == "pass"
    rep = certify("1.8", tp, {"B1": 4.0, "B2": 9.0, "B3": 9.0, "Bbar": 15.0},
                  asserted=["pinching", "zero-equilibrium", "quadratic-upper-bound"])
    assert rep.verdict == CERTIFIED


def test_certify_config_errors():
    with pytest.raises(ConfigError):
        certify("9.9", dirichlet(), {"B1": 1.0, "B2": 2.0})
    with pytest.raises(ConfigError):
        certify("3.10", dirichlet(), {"B1": 1.0, "B2": 2.0})
    with pytest.raises(ConfigError):
        certify("3.5", dirichlet(), {"B1": 1.0, "B2": 2.0})
    with pytest.raises(ConfigError):
        certify("3.4", dirichlet(), {"B1": 1.0, "B2": 2.0}, asserted=["wishful-thinking"])
