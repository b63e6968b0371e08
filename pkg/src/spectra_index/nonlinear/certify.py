"""Hypothesis checks for the existence and multiplicity theorems.

Each theorem id maps to a family of hypotheses.  Index conditions and
pointwise orderings are computed; analytic conditions (boundedness of the
remainder, convexity, growth bounds) cannot be decided numerically and are
echoed as user-asserted flags.  When a nonlinearity is supplied, sampled
evidence can refute (never establish) the pinching and equilibrium flags.

Flags by family:

* existence (1.6, 3.4, 3.10, 4.3, 4.7, 5.3): ``pinching`` plus
  ``bounded-remainder`` (``sublinear-remainder`` for 3.10; none for 5.3).
* nontrivial solution (1.7, 3.5, 3.12, 4.4, 4.8, 5.4): ``pinching`` and
  ``zero-equilibrium`` (1.7 also ``bounded-hessian``); the two-solution
  clause is reported separately.
* two nontrivial solutions (1.8, 5.5): ``pinching``,
  ``quadratic-upper-bound``, ``zero-equilibrium``.
* convex (1.9, 5.6): ``convex-after-shift``, ``quadratic-upper-bound``; the
  nontrivial clause (data ``B0``) also needs ``zero-equilibrium``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..problems import (
    Bolza,
    EllipticProblem,
    FirstOrderProblem,
    ScalarField,
    SecondOrderProblem,
    SturmLiouville,
    pointwise_leq,
)
from .models import NonlinearProblem, constant_coefficient

CERTIFIED = "certified"
REFUTED = "refuted"
INCONCLUSIVE = "inconclusive"

PASS = "pass"
FAIL = "fail"
ASSERTED = "user-asserted"
NOT_ASSERTED = "not-asserted"

SAMPLE_TOL = 1e-9

# theorem id -> (family, template kind, two-solution threshold in units of n)
THEOREMS = {
    "1.6": ("existence", None, None),
    "3.4": ("existence", "sturm-liouville", None),
    "3.10": ("existence", "periodic", None),
    "4.3": ("existence", "bolza", None),
    "4.7": ("existence", "symplectic", None),
    "5.3": ("existence", "elliptic", None),
    "1.7": ("nontrivial", None, "nullity"),
    "3.5": ("nontrivial", "sturm-liouville", 1),
    "3.12": ("nontrivial", "periodic", 2),
    "4.4": ("nontrivial", "bolza", 1),
    "4.8": ("nontrivial", "symplectic", 2),
    "5.4": ("nontrivial", "elliptic", None),
    "1.8": ("two-solutions", None, None),
    "5.5": ("two-solutions", "elliptic", None),
    "1.9": ("convex", None, None),
    "5.6": ("convex", "elliptic", None),
}

FLAG_TEXT = {
    "pinching": "the slope (or Hessian) of the nonlinearity lies between B1 and B2 (outside a ball)",
    "bounded-remainder": "force minus slope times x is bounded",
    "sublinear-remainder": "remainder h(t, x) = o(|x|) as |x| -> infinity",
    "bounded-hessian": "the Hessian of the potential is continuous and bounded",
    "zero-equilibrium": "the force vanishes at x = 0 and its derivative there is Bbar",
    "quadratic-upper-bound": "potential <= (B_upper x, x) / 2 + c",
    "convex-after-shift": "potential minus (B1 x, x) / 2 is convex",
}


def _kind(template) -> str:
    if isinstance(template, SecondOrderProblem):
        return "sturm-liouville" if isinstance(template.bc, SturmLiouville) else "periodic"
    if isinstance(template, FirstOrderProblem):
        return "bolza" if isinstance(template.bc, Bolza) else "symplectic"
    if isinstance(template, EllipticProblem):
        return "elliptic"
    raise ConfigError(f"unsupported template {type(template).__name__}")


def _half_dim(template) -> int:
    if isinstance(template, EllipticProblem):
        return 1
    return template.n


def _max_nullity(template):
    if isinstance(template, SecondOrderProblem):
        return template.n if isinstance(template.bc, SturmLiouville) else 2 * template.n
    if isinstance(template, FirstOrderProblem):
        return template.n if isinstance(template.bc, Bolza) else 2 * template.n
    if isinstance(template, EllipticProblem) and len(template.lengths) == 1:
        return 1
    return None


@dataclass
class CertificateReport:
    """Outcome of a certification run.

    ``hypotheses`` holds one record per hypothesis with keys ``name``,
    ``description``, ``status`` (pass / fail / user-asserted / not-asserted)
    and ``quantities``; ``clauses`` holds the optional further conclusions
    (second solution, nontrivial solution) with their own records.
    """

    theorem: str
    hypotheses: list
    verdict: str
    clauses: dict = field(default_factory=dict)
    indices: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict, repr=False)

    @property
    def certified(self) -> bool:
        return self.verdict == CERTIFIED

    def to_json(self) -> dict:
        return {
            "theorem": self.theorem,
            "verdict": self.verdict,
            "hypotheses": self.hypotheses,
            "clauses": self.clauses,
            "indices": self.indices,
        }


def _verdict(records) -> str:
    statuses = [r["status"] for r in records]
    if FAIL in statuses:
        return REFUTED
    if NOT_ASSERTED in statuses:
        return INCONCLUSIVE
    return CERTIFIED


class _Checker:
    def __init__(self, template, threads=None):
        self.template = template
        self.threads = threads
        self.cache = {}

    def index(self, name, coef) -> tuple[int, int]:
        if name in self.cache:
            return self.cache[name]
        tp = self.template
        if isinstance(tp, EllipticProblem):
            from ..elliptic import elliptic_index

            r = elliptic_index(tp.with_b(coef))
        elif isinstance(tp, FirstOrderProblem):
            from ..index import index_first_order

            r = index_first_order(tp.with_B(coef), threads=self.threads)
        else:
            from ..index import index_sweep

            r = index_sweep(tp.with_B(coef), threads=self.threads)
        self.cache[name] = (int(r.i), int(r.nu))
        return self.cache[name]

    def leq(self, A, B) -> bool:
        if isinstance(A, ScalarField):
            grids = np.meshgrid(*[np.linspace(0.0, L, 129) for L in self.template.lengths], indexing="ij")
            a = A(self.template.lengths, *grids)
            b = B(self.template.lengths, *grids)
            return bool(np.all(a <= b + 1e-12 * max(1.0, float(np.max(np.abs(b))))))
        return pointwise_leq(A, B)

    def equal(self, A, B) -> bool:
        return self.leq(A, B) and self.leq(B, A)


def _record(name, description, status, **quantities):
    return {"name": name, "description": description, "status": status, "quantities": quantities}


def _flag(name, asserted, evidence=None):
    """Analytic hypothesis: sampled evidence may refute it, only the user can assert it."""
    q = {}
    if evidence is not None:
        q["sampled"] = evidence
        if not evidence["ok"]:
            return _record(name, FLAG_TEXT[name], FAIL, **q)
    return _record(name, FLAG_TEXT[name], ASSERTED if name in asserted else NOT_ASSERTED, **q)


# sampled evidence --------------------------------------------------------


def _coef_at(template, coef, t):
    if isinstance(coef, ScalarField):
        pts = np.atleast_2d(t)
        return coef(template.lengths, *pts.T)[:, None, None]
    return coef(t)


def _pinching_evidence(problem, lower, upper, hessian: bool, radius: float):
    t, x = problem.sample()
    norms = np.linalg.norm(x, axis=1)
    keep = norms >= radius
    if not np.any(keep):
        return None
    t, x = t[keep], x[keep]
    if hessian:
        S = problem.dF(t, x)
    elif problem.slope is not None:
        S = problem.slope(t, x)
    else:
        return None
    S = 0.5 * (S + np.swapaxes(S, 1, 2))
    lo = np.linalg.eigvalsh(S - _coef_at(problem.template, lower, t))[:, 0]
    hi = np.linalg.eigvalsh(_coef_at(problem.template, upper, t) - S)[:, 0]
    scale = 1.0 + float(np.max(np.abs(S)))
    margin = float(min(lo.min(), hi.min()))
    return {"points": int(keep.sum()), "margin": margin, "ok": margin >= -SAMPLE_TOL * scale}


def _equilibrium_evidence(problem, Bbar=None):
    t, x = problem.sample()
    zero = np.zeros_like(x)
    err_f = float(np.max(np.abs(problem.F(t, zero))))
    if Bbar is None:
        return {"points": int(t.shape[0]), "force_at_zero": err_f, "ok": err_f <= SAMPLE_TOL}
    ref = _coef_at(problem.template, Bbar, t)
    err_d = float(np.max(np.abs(problem.dF(t, zero) - ref)))
    scale = 1.0 + float(np.max(np.abs(ref)))
    return {"points": int(t.shape[0]), "force_at_zero": err_f, "slope_error": err_d,
            "ok": err_f <= SAMPLE_TOL * scale and err_d <= 1e-6 * scale}


# main ----------------------------------------------------------------------


def certify(theorem: str, template, data: dict, *, asserted=(), problem: NonlinearProblem | None = None,
            radius: float = 0.0, threads: int | None = None) -> CertificateReport:
    """Check the hypotheses of ``theorem`` for ``template`` and the coefficients in ``data``.

    Args:
        theorem: theorem id, e.g. ``"3.10"``.
        template: linear problem fixing ``Lambda`` and the boundary conditions.
        data: coefficients ``B1``, ``B2`` and, depending on the theorem,
            ``Bbar`` (derivative at zero), ``B0`` or ``B3``.
        asserted: analytic hypotheses the user vouches for.
        problem: optional nonlinearity for sampled evidence.
        radius: sampled pinching is checked for ``|x| >= radius``.

    Raises:
        ConfigError: unknown theorem, wrong template kind or missing data.
    """
    theorem = str(theorem)
    if theorem not in THEOREMS:
        raise ConfigError(f"unknown theorem {theorem!r}; known: {sorted(THEOREMS, key=lambda s: tuple(map(int, s.split('.'))))}")
    family, kind, multiple = THEOREMS[theorem]
    template = template.validate()
    if kind is not None and _kind(template) != kind:
        raise ConfigError(f"theorem {theorem} needs a {kind} template, got {_kind(template)}")
    asserted = set(asserted)
    unknown = asserted - set(FLAG_TEXT)
    if unknown:
        raise ConfigError(f"unknown hypothesis flags {sorted(unknown)}")
    coefs = {}
    for key, value in data.items():
        if value is not None and key in ("B0", "B1", "B2", "B3", "Bbar"):
            coefs[key] = constant_coefficient(template, value)
    needed = {"existence": ["B1", "B2"], "nontrivial": ["B1", "B2", "Bbar"],
              "two-solutions": ["B1", "B2", "B3", "Bbar"], "convex": ["B1", "B2"]}[family]
    missing = [k for k in needed if k not in coefs]
    if missing:
        raise ConfigError(f"theorem {theorem} needs coefficients {missing}")
    chk = _Checker(template, threads)
    hyps = []
    clauses = {}
    B1, B2 = coefs["B1"], coefs["B2"]
    order = chk.leq(B1, B2)
    hyps.append(_record("ordering", "B1 <= B2 pointwise", PASS if order else FAIL))
    i1, n1 = chk.index("B1", B1)
    i2, n2 = chk.index("B2", B2)
    if family == "convex":
        ok = i1 + n1 == i2
        hyps.append(_record("index-window", "i(B1) + nu(B1) = i(B2)", PASS if ok else FAIL,
                            i_B1=i1, nu_B1=n1, i_B2=i2))
    elif family == "two-solutions":
        hyps.append(_record("anchor-nondegenerate", "nu(B1) = 0", PASS if n1 == 0 else FAIL, nu_B1=n1))
    else:
        hyps.append(_record("index-equality", "i(B1) = i(B2)", PASS if i1 == i2 else FAIL, i_B1=i1, i_B2=i2))
    if family != "two-solutions":
        hyps.append(_record("nondegenerate-upper", "nu(B2) = 0", PASS if n2 == 0 else FAIL, nu_B2=n2))

    def evidence_pinch(hessian, lower="B1", upper="B2"):
        if problem is None:
            return None
        return _pinching_evidence(problem, coefs[lower], coefs[upper], hessian, radius)

    if family == "existence":
        hyps.append(_flag("pinching", asserted, evidence_pinch(False)))
        if theorem == "3.10":
            hyps.append(_flag("sublinear-remainder", asserted))
        elif theorem != "5.3":
            hyps.append(_flag("bounded-remainder", asserted))
    elif family == "nontrivial":
        Bbar = coefs["Bbar"]
        ib, nb = chk.index("Bbar", Bbar)
        outside = not (ib <= i1 <= ib + nb)
        hyps.append(_record("interval-exclusion", "i(B1) not in [i(Bbar), i(Bbar) + nu(Bbar)]",
                            PASS if outside else FAIL, i_B1=i1, i_Bbar=ib, nu_Bbar=nb))
        if theorem == "1.7":
            hyps.append(_flag("bounded-hessian", asserted))
        hyps.append(_flag("pinching", asserted, evidence_pinch(True)))
        hyps.append(_flag("zero-equilibrium", asserted, None if problem is None else _equilibrium_evidence(problem, Bbar)))
        if multiple is not None:
            need = _max_nullity(template) if multiple == "nullity" else multiple * _half_dim(template)
            if need is None:
                clauses["second-solution"] = _record("second-solution", "no nullity bound for this template", NOT_ASSERTED)
            else:
                ok = nb == 0 and abs(i1 - ib) >= need
                clauses["second-solution"] = _record(
                    "second-solution", f"nu(Bbar) = 0 and |i(B1) - i(Bbar)| >= {need}", PASS if ok else FAIL,
                    nu_Bbar=nb, gap=abs(i1 - ib), required=need)
    elif family == "two-solutions":
        B3, Bbar = coefs["B3"], coefs["Bbar"]
        i3, n3 = chk.index("B3", B3)
        ib, nb = chk.index("Bbar", Bbar)
        strict3 = chk.leq(B1, B3) and not chk.equal(B1, B3)
        hyps.append(_record("upper-ordering", "B1 < B3", PASS if strict3 else FAIL))
        hyps.append(_record("upper-window", "i(B1) = i(B3) and nu(B3) = 0", PASS if (i3 == i1 and n3 == 0) else FAIL,
                            i_B1=i1, i_B3=i3, nu_B3=n3))
        strictb = chk.leq(B1, Bbar) and not chk.equal(B1, Bbar)
        hyps.append(_record("equilibrium-ordering", "Bbar > B1", PASS if strictb else FAIL))
        hyps.append(_record("equilibrium-index", "nu(Bbar) = 0 and i(Bbar) > i(B1)", PASS if (nb == 0 and ib > i1) else FAIL,
                            i_Bbar=ib, nu_Bbar=nb, i_B1=i1))
        hyps.append(_flag("pinching", asserted, evidence_pinch(True)))
        hyps.append(_flag("quadratic-upper-bound", asserted))
        hyps.append(_flag("zero-equilibrium", asserted, None if problem is None else _equilibrium_evidence(problem, Bbar)))
    else:
        hyps.append(_flag("convex-after-shift", asserted, None if problem is None else _convexity_evidence(problem, B1)))
        hyps.append(_flag("quadratic-upper-bound", asserted))
        if "B0" in coefs:
            B0 = coefs["B0"]
            i0, n0 = chk.index("B0", B0)
            recs = [
                _record("lower-ordering", "B0 >= B1", PASS if chk.leq(B1, B0) else FAIL),
                _record("index-jump", "i(B0) > i(B1) + nu(B1)", PASS if i0 > i1 + n1 else FAIL, i_B0=i0, i_B1=i1, nu_B1=n1),
                _flag("zero-equilibrium", asserted, None if problem is None else _equilibrium_evidence(problem)),
            ]
            clauses["nontrivial-solution"] = {"hypotheses": recs, "verdict": _verdict(recs)}
    indices = {k: list(v) for k, v in chk.cache.items()}
    return CertificateReport(theorem, hyps, _verdict(hyps), clauses, indices, coefs)


def _convexity_evidence(problem, B1):
    if problem.jacobian is None and problem.force is None:
        return None
    t, x = problem.sample()
    H = problem.dF(t, x) - _coef_at(problem.template, B1, t)
    H = 0.5 * (H + np.swapaxes(H, 1, 2))
    low = float(np.min(np.linalg.eigvalsh(H)[:, 0]))
    return {"points": int(t.shape[0]), "min_curvature": low, "ok": low >= -SAMPLE_TOL * (1.0 + float(np.max(np.abs(H))))}
