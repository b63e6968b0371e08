"""Command line interface: ``spectra-index <command> [config] [options]``.

Every command writes one JSON report (see :class:`~spectra_index.report.RunReport`).
Exit status: 0 success, 1 refuted certificate or self-test mismatch,
2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import __version__
from .errors import ConfigError, NumericalError
from .report import RunReport, crossings_csv, digest

EXIT_OK = 0
EXIT_REFUTED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

SELFTEST_SEED = 20240611


# ---------------------------------------------------------------------------
# config handling


def _load(path: str) -> tuple[dict, str]:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg, digest(raw)


def _problem(cfg: dict):
    from .problems import validate

    return validate(cfg["problem"] if "problem" in cfg else cfg)


def _threads(args) -> int:
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
        return args.threads
    from .index import default_threads

    return default_threads()


def _floats(text: str, name: str) -> list[float]:
    from .problems import parse_number

    try:
        return [parse_number(s.strip()) for s in text.split(",") if s.strip()]
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{name} must be a comma separated list of numbers") from exc


# ---------------------------------------------------------------------------
# commands; each returns (results, tolerances, exit code, crossings or None)


def _index_of(p, threads):
    from .index import index_first_order, index_sweep
    from .problems import EllipticProblem, FirstOrderProblem
    from .elliptic import elliptic_index

    if isinstance(p, EllipticProblem):
        return elliptic_index(p)
    if isinstance(p, FirstOrderProblem):
        return index_first_order(p, threads=threads)
    return index_sweep(p, threads=threads)


def cmd_index(args, cfg):
    res = _index_of(_problem(cfg), _threads(args))
    return res.to_json(), res.tolerances, EXIT_OK, res.crossings


def cmd_nullity(args, cfg):
    from .index import TOLERANCES
    from .problems import EllipticProblem
    from .spectral import nullity

    p = _problem(cfg)
    if isinstance(p, EllipticProblem):
        res = _index_of(p, 1)
        return {"nu": res.nu}, res.tolerances, EXIT_OK, None
    r = nullity(p)
    out = {"nu": r.nu, "kernel_initial_states": r.kernel, "singular_values": r.singular_values,
           "symplectic_defect": r.defect}
    return out, TOLERANCES, EXIT_OK, None


def cmd_rel_index(args, cfg):
    from .index import TOLERANCES, default_k, relative_index
    from .nonlinear.models import constant_coefficient

    p = _problem(cfg)
    if "B1" not in cfg or "B2" not in cfg:
        raise ConfigError("rel-index needs coefficients B1 and B2 next to the problem")
    B1 = constant_coefficient(p, cfg["B1"])
    B2 = constant_coefficient(p, cfg["B2"])
    k = cfg.get("k")
    k = default_k(B1, B2) if k is None else float(k)
    value = relative_index(p, B1, B2, k=k, threads=_threads(args))
    return {"relative_index": value, "k": k}, TOLERANCES, EXIT_OK, None


def cmd_oracle(args, cfg):
    from . import oracles

    case = args.case
    if case in ("rectangle", "interval"):
        if args.b is None or args.lengths is None:
            raise ConfigError(f"--case {case} needs --b and --lengths")
        lengths = _floats(args.lengths, "--lengths")
        if case == "rectangle":
            if len(lengths) != 2:
                raise ConfigError("--lengths needs L1,L2 for a rectangle")
            i, nu = oracles.rectangle_constant(args.b, *lengths)
        else:
            if len(lengths) != 1:
                raise ConfigError("--lengths needs one length for an interval")
            i, nu = oracles.interval_constant(args.b, lengths[0])
        return {"case": case, "b": args.b, "lengths": lengths, "i": i, "nu": nu}, {}, EXIT_OK, None
    if args.alphas is None:
        raise ConfigError(f"--case {case} needs --alphas")
    spec = oracles.ConstantSpectrum(tuple(_floats(args.alphas, "--alphas")), args.scale)
    out = {"case": case, "eigenvalues": list(spec.eigenvalues), "scale": spec.scale}
    if case == "dirichlet":
        i, nu = oracles.dirichlet_constant(spec)
    elif case == "scalar":
        if args.a is None:
            raise ConfigError("--case scalar needs --a")
        i, nu = oracles.periodic_constant(oracles.Scalar(args.a), spec)
        out.update(a=args.a, j_start=oracles.SCALAR_J_START)
    else:
        i, nu = oracles.periodic_constant(case, spec)
    out.update(i=i, nu=nu)
    return out, {}, EXIT_OK, None


def _certify_section(cfg, args, p, problem):
    from .nonlinear.certify import certify

    sec = dict(cfg.get("certify", {}))
    theorem = getattr(args, "theorem", None) or sec.get("theorem")
    if theorem is None:
        raise ConfigError("no theorem given (use --theorem or certify.theorem)")
    asserted = list(sec.get("assert", [])) + list(getattr(args, "assert_", None) or [])
    data = {k: sec[k] for k in ("B0", "B1", "B2", "B3", "Bbar") if k in sec}
    return certify(str(theorem), p, data, asserted=asserted, problem=problem,
                   radius=float(sec.get("radius", 0.0)), threads=_threads(args))


def _nonlinear(cfg, p):
    from .nonlinear.models import nonlinearity

    if "nonlinearity" not in cfg:
        return None
    return nonlinearity(p, cfg["nonlinearity"])


def cmd_certify(args, cfg):
    from .index import TOLERANCES

    p = _problem(cfg)
    rep = _certify_section(cfg, args, p, _nonlinear(cfg, p))
    code = EXIT_REFUTED if rep.verdict == "refuted" else EXIT_OK
    return rep.to_json(), TOLERANCES, code, None


def cmd_solve(args, cfg):
    from .nonlinear import collocation
    from .nonlinear.models import constant_coefficient

    p = _problem(cfg)
    problem = _nonlinear(cfg, p)
    if problem is None:
        raise ConfigError("solve needs a nonlinearity")
    opts = dict(cfg.get("solve", {}))
    cert = _certify_section(cfg, args, p, problem) if ("certify" in cfg or args.theorem) else None
    waive = bool(opts.get("waive", False)) or args.waive
    start = opts.get("start")
    sol = collocation.solve_bvp(
        problem,
        start=None if start is None else constant_coefficient(p, start),
        certificate=cert,
        waive=waive,
        grid=int(opts.get("grid", collocation.DEFAULT_GRID)),
        tol=float(opts.get("tol", collocation.DEFAULT_TOL)),
        homotopy_steps=int(opts.get("homotopy_steps", collocation.HOMOTOPY_STEPS)),
        multistart=int(opts.get("multistart", collocation.MULTISTART)),
        amplitude=float(opts.get("amplitude", 5.0)),
        seed=int(opts.get("seed", 0)),
    )
    out = sol.to_json()
    if cert is not None:
        out["certificate"] = cert.to_json()
    tol = {"residual_tol": float(opts.get("tol", collocation.DEFAULT_TOL)),
           "richardson_tol": collocation.CONSISTENCY_TOL, "distinct_tol": collocation.DISTINCT_TOL}
    return out, tol, EXIT_OK, None


def cmd_dual_solve(args, cfg):
    from .nonlinear import duality
    from .nonlinear.models import constant_coefficient

    p = _problem(cfg)
    problem = _nonlinear(cfg, p)
    if problem is None:
        raise ConfigError("dual-solve needs a nonlinearity")
    opts = dict(cfg.get("dual", {}))
    B1 = opts.get("B1", cfg.get("certify", {}).get("B1"))
    if B1 is None:
        raise ConfigError("dual-solve needs dual.B1 (or certify.B1)")
    cert = _certify_section(cfg, args, p, problem) if ("certify" in cfg or args.theorem) else None
    if cert is not None and cert.verdict == "refuted" and not args.waive:
        raise ConfigError("the certificate is refuted; pass --waive to solve anyway")
    sol = duality.dual_solve(problem, constant_coefficient(p, B1),
                             grid=int(opts.get("grid", duality.DEFAULT_DUAL_GRID)),
                             tol=float(opts.get("tol", duality.GRADIENT_TOL)),
                             certificate=cert)
    out = sol.to_json()
    if cert is not None:
        out["certificate"] = cert.to_json()
    tol = {"gradient_tol": float(opts.get("tol", duality.GRADIENT_TOL)), "primal_tol": duality.PRIMAL_TOL,
           "conjugate_tol": duality.CONJUGATE_TOL}
    return out, tol, EXIT_OK, None


def selftest_corpus(seed: int = SELFTEST_SEED):
    """Deterministic list of ``(label, engine thunk, oracle value)`` cases."""
    from . import oracles
    from .elliptic import elliptic_index
    from .index import index_sweep
    from .problems import (EllipticProblem, GeneralizedPeriodic, MatrixFunction, Rectangle,
                           ScalarField, SecondOrderProblem, SturmLiouville)

    rng = np.random.default_rng(seed)
    cases = []

    def second(spec, bc):
        n = spec.n
        return SecondOrderProblem(MatrixFunction.constant(spec.scale * np.eye(n)),
                                  MatrixFunction.constant(np.diag(spec.eigenvalues)), bc)

    for case, make in (("periodic", GeneralizedPeriodic.periodic), ("antiperiodic", GeneralizedPeriodic.antiperiodic),
                       ("dirichlet", lambda n: SturmLiouville(0.0, math.pi))):
        for _ in range(6):
            n = int(rng.integers(1, 4))
            lam = 1.0 if case == "dirichlet" else float(rng.choice([0.5, 1.0, 2.0]))
            spec = oracles.ConstantSpectrum(tuple(rng.uniform(-20.0, 120.0, n)), lam)
            p = second(spec, make(n))
            want = oracles.dirichlet_constant(spec) if case == "dirichlet" else oracles.periodic_constant(case, spec)
            label = f"{case} lam={lam} alphas={[round(a, 6) for a in spec.eigenvalues]}"
            cases.append((label, lambda p=p: tuple(index_sweep(p)), want))
    for L1, L2, b in ((1.0, 1.0, 2.5 * math.pi**2), (1.0, 2.0, 30.0), (2.0, 1.5, 5.0 * math.pi**2 / 4.0), (1.0, 1.0, 0.0)):
        p = EllipticProblem(Rectangle(L1, L2), ScalarField.constant(b))
        cases.append((f"rectangle {L1}x{L2} b={b:.6g}", lambda p=p: tuple(elliptic_index(p)),
                      oracles.rectangle_constant(b, L1, L2)))
    return cases


def cmd_selftest(args, cfg):
    from .index import TOLERANCES

    rows = []
    for label, run, want in selftest_corpus():
        try:
            got = tuple(int(v) for v in run())
        except NumericalError as exc:
            got = f"{type(exc).__name__}: {exc}"
        rows.append({"case": label, "expected": list(want), "got": list(got) if isinstance(got, tuple) else got,
                     "match": got == tuple(want)})
    failed = sum(1 for r in rows if not r["match"])
    out = {"cases": rows, "total": len(rows), "mismatches": failed}
    return out, TOLERANCES, EXIT_REFUTED if failed else EXIT_OK, None


COMMANDS = {
    "index": (cmd_index, True, "index and nullity of a linear problem"),
    "rel-index": (cmd_rel_index, True, "relative index I(B1, B2) on a template"),
    "nullity": (cmd_nullity, True, "nullity and kernel basis"),
    "oracle": (cmd_oracle, False, "closed-form counts for constant coefficients"),
    "certify": (cmd_certify, True, "check the hypotheses of an existence theorem"),
    "solve": (cmd_solve, True, "homotopy-Newton collocation solve"),
    "dual-solve": (cmd_dual_solve, True, "dual variational solve of a convex problem"),
    "selftest": (cmd_selftest, False, "engine versus closed-form oracles"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectra-index", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, needs_config, text) in COMMANDS.items():
        sp = sub.add_parser(name, help=text)
        if needs_config:
            sp.add_argument("config", help="JSON problem or run description")
        sp.add_argument("--out", help="write the report here instead of stdout")
        sp.add_argument("--no-timing", action="store_true", help="omit wall-clock timings")
        sp.add_argument("--threads", type=int, help="worker threads (default: SPECTRA_INDEX_THREADS or 1)")
        if name == "index":
            sp.add_argument("--csv", help="also write the crossing table to this CSV file")
        if name in ("certify", "solve", "dual-solve"):
            sp.add_argument("--theorem", help="theorem id, e.g. 3.10 (overrides certify.theorem)")
            sp.add_argument("--assert", dest="assert_", action="append", metavar="FLAG",
                            help="vouch for an analytic hypothesis (repeatable)")
        if name in ("solve", "dual-solve"):
            sp.add_argument("--waive", action="store_true", help="run without a passing certificate")
        if name == "oracle":
            sp.add_argument("--case", required=True,
                            choices=["periodic", "antiperiodic", "scalar", "dirichlet", "rectangle", "interval"])
            sp.add_argument("--alphas", help="eigenvalues of the constant B, comma separated")
            sp.add_argument("--scale", type=float, default=1.0, help="Lambda = scale * I")
            sp.add_argument("--a", type=float, help="coupling of the scalar case")
            sp.add_argument("--b", type=float, help="constant potential (rectangle, interval)")
            sp.add_argument("--lengths", help="L or L1,L2")
    return parser


def _write(path, text):
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _args_digest(args) -> str:
    keys = sorted(k for k in vars(args) if k not in ("out", "no_timing", "threads", "csv"))
    return digest(json.dumps({k: getattr(args, k) for k in keys}, sort_keys=True).encode())


def run(argv=None) -> int:
    """Parse ``argv``, run the command and write its report; returns the exit status."""
    args = build_parser().parse_args(argv)
    fn, needs_config, _ = COMMANDS[args.command]
    started = time.perf_counter()
    crossings = None
    input_digest = None
    try:
        cfg = {}
        if needs_config:
            cfg, input_digest = _load(args.config)
        else:
            input_digest = _args_digest(args)
        results, tolerances, code, crossings = fn(args, cfg)
    except ConfigError as exc:
        results, tolerances, code = {"error": type(exc).__name__, "message": str(exc)}, {}, EXIT_CONFIG
    except NumericalError as exc:
        results, tolerances, code = {"error": type(exc).__name__, "message": str(exc)}, {}, EXIT_NUMERICAL
    timing = None if args.no_timing else {"seconds": time.perf_counter() - started}
    report = RunReport(args.command, input_digest, results, dict(tolerances), timing)
    _write(args.out, report.dumps())
    if getattr(args, "csv", None) and crossings is not None:
        _write(args.csv, crossings_csv(crossings))
    if code in (EXIT_CONFIG, EXIT_NUMERICAL):
        print(f"spectra-index: {results['error']}: {results['message']}", file=sys.stderr)
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
