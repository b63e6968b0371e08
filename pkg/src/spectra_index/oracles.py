"""Closed-form index formulas for constant coefficients.

These are independent of the numerical engines and serve as ground truth in
the test corpus.  Counting formulas compare the user's eigenvalues against
mode thresholds with exact float comparison; the ``*_threshold`` helpers
produce the thresholds with the very same expression, so deliberate equality
cases can be built without rounding surprises.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import DomainError

PERIODIC = "periodic"
ANTIPERIODIC = "antiperiodic"

SCALAR_J_START = 0


@dataclass(frozen=True)
class ConstantSpectrum:
    """Eigenvalues of a constant symmetric matrix and the scale ``lam > 0``
    of ``Lambda = lam * I``."""

    eigenvalues: tuple[float, ...]
    scale: float = 1.0

    def __post_init__(self):
        vals = tuple(sorted(float(a) for a in self.eigenvalues))
        if not all(math.isfinite(a) for a in vals):
            raise DomainError("eigenvalues must be finite")
        if not self.scale > 0:
            raise DomainError("scale must be positive")
        object.__setattr__(self, "eigenvalues", vals)

    @property
    def n(self) -> int:
        return len(self.eigenvalues)


@dataclass(frozen=True)
class Scalar:
    """End coupling ``x(1) = a x(0)``, ``x'(1) = a^{-1} x'(0)``."""

    a: float


def _count(values: Iterable[float], alphas) -> tuple[int, int]:
    less = equal = 0
    for v in values:
        for a in alphas:
            if v < a:
                less += 1
            elif v == a:
                equal += 1
    return less, equal


def periodic_threshold(j: int, lam: float) -> float:
    return 4.0 * lam * j * j * math.pi**2


def antiperiodic_threshold(j: int, lam: float) -> float:
    return lam * (2 * j - 1) ** 2 * math.pi**2


def scalar_mu0(a: float) -> float:
    if a == 0.0:
        raise DomainError("a must be nonzero")
    c = 2.0 / (1.0 / a + a)
    if abs(c) > 1.0:
        raise DomainError(f"|2/(1/a + a)| = {abs(c)!r} > 1")
    return math.acos(c)


def scalar_thresholds(j: int, lam: float, a: float) -> tuple[float, float]:
    mu0 = scalar_mu0(a)
    return lam * (2 * j * math.pi + mu0) ** 2, lam * (2 * math.pi - mu0 + 2 * j * math.pi) ** 2


def _j_limit(alphas, lam: float, base: float) -> int:
    top = max(alphas, default=0.0)
    if top <= 0:
        return 1
    return int(math.sqrt(top / lam) / base) + 2


def periodic_constant(case, spec: ConstantSpectrum, *, j_start: int | None = None) -> tuple[int, int]:
    """Index and nullity for constant ``Lambda = lam*I`` and constant ``B``.

    ``case`` is ``"periodic"``, ``"antiperiodic"`` or :class:`Scalar`.  For
    the periodic cases ``j`` runs over ``1, 2, ...`` (the periodic formula
    accounts for the constant mode separately).  For :class:`Scalar` the two
    root families are counted from ``j_start`` (default
    :data:`SCALAR_J_START`, fixed by :func:`calibrate_scalar`).

    Raises:
        DomainError: for ``Scalar(a)`` with ``a`` in ``{0, 1, -1}`` or
            ``|2/(1/a + a)| > 1``.
    """
    alphas = spec.eigenvalues
    lam = spec.scale
    if case == PERIODIC:
        jmax = _j_limit(alphas, lam, 2.0 * math.pi)
        less, equal = _count((periodic_threshold(j, lam) for j in range(1, jmax + 1)), alphas)
        pos = sum(1 for a in alphas if a > 0)
        zero = sum(1 for a in alphas if a == 0)
        return pos + 2 * less, zero + 2 * equal
    if case == ANTIPERIODIC:
        jmax = _j_limit(alphas, lam, 2.0 * math.pi)
        less, equal = _count((antiperiodic_threshold(j, lam) for j in range(1, jmax + 1)), alphas)
        return 2 * less, 2 * equal
    if isinstance(case, Scalar):
        if case.a in (0.0, 1.0, -1.0):
            raise DomainError("Scalar(a) needs a not in {0, 1, -1}")
        start = SCALAR_J_START if j_start is None else j_start
        jmax = _j_limit(alphas, lam, 2.0 * math.pi)
        thresholds = [t for j in range(start, jmax + 1) for t in scalar_thresholds(j, lam, case.a)]
        return _count(thresholds, alphas)
    raise DomainError(f"unknown case {case!r}")


# name used by the operation table of the interface contract
example38 = periodic_constant


def dirichlet_threshold(j: int) -> float:
    return j * j * math.pi**2


def dirichlet_constant(spec: ConstantSpectrum) -> tuple[int, int]:
    """``x'' + B x = 0``, ``x(0) = x(1) = 0`` with constant ``B`` (``Lambda = I``).

    Raises:
        DomainError: if ``spec.scale != 1``.
    """
    if spec.scale != 1.0:
        raise DomainError("the Dirichlet oracle assumes Lambda = I")
    alphas = spec.eigenvalues
    jmax = _j_limit(alphas, 1.0, math.pi)
    return _count((dirichlet_threshold(j) for j in range(1, jmax + 1)), alphas)


def rectangle_threshold(j: int, k: int, L1: float, L2: float) -> float:
    return math.pi**2 * (j * j / L1**2 + k * k / L2**2)


def rectangle_constant(b: float, L1: float, L2: float) -> tuple[int, int]:
    """Dirichlet Laplacian on ``(0, L1) x (0, L2)`` plus constant ``b``."""
    if not (L1 > 0 and L2 > 0):
        raise DomainError("lengths must be positive")
    if b <= 0:
        return 0, 0
    jmax = int(L1 * math.sqrt(b) / math.pi) + 2
    kmax = int(L2 * math.sqrt(b) / math.pi) + 2
    less = equal = 0
    for j in range(1, jmax + 1):
        for k in range(1, kmax + 1):
            t = rectangle_threshold(j, k, L1, L2)
            if t < b:
                less += 1
            elif t == b:
                equal += 1
    return less, equal


def interval_constant(b: float, L: float) -> tuple[int, int]:
    """Dirichlet Laplacian on ``(0, L)`` plus constant ``b``."""
    if not L > 0:
        raise DomainError("length must be positive")
    jmax = int(L * math.sqrt(max(b, 0.0)) / math.pi) + 2
    return _count(((j * math.pi / L) ** 2 for j in range(1, jmax + 1)), [b])


# ---------------------------------------------------------------------------
# calibration of the Scalar(a) j-range


@dataclass
class CalibrationReport:
    """Outcome of comparing the Scalar(a) formula with the shooting engine.

    ``j_start`` is the convention that reproduces every engine result, or
    ``None`` when neither does; ``discrepancies`` then lists the instances
    that no convention matches.
    """

    instances: int
    matches: dict = field(default_factory=dict)
    j_start: int | None = None
    discrepancies: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "instances": self.instances,
            "matches": {str(k): v for k, v in self.matches.items()},
            "j_start": self.j_start,
            "discrepancies": self.discrepancies,
        }


def calibrate_scalar(instances, engine=None) -> CalibrationReport:
    """Fix the ``j`` range of the Scalar(a) formula against the engine.

    ``instances`` is an iterable of ``(a, ConstantSpectrum)``.  ``engine``
    maps ``(a, spec)`` to ``(i, nu)`` and defaults to the shooting sweep on
    ``Lambda = lam*I``, ``B = diag(alpha)``, ``M = a I``, ``N = I / a``.
    """
    if engine is None:
        engine = _engine_scalar
    rows = []
    for a, spec in instances:
        got = tuple(engine(a, spec))
        rows.append((a, spec, got, {s: periodic_constant(Scalar(a), spec, j_start=s) for s in (0, 1)}))
    report = CalibrationReport(len(rows))
    for s in (0, 1):
        report.matches[s] = sum(1 for _, _, got, pred in rows if pred[s] == got)
    good = [s for s in (0, 1) if report.matches[s] == len(rows)]
    report.j_start = good[0] if good else None
    if report.j_start is None:
        report.discrepancies = [
            {"a": a, "eigenvalues": list(spec.eigenvalues), "scale": spec.scale, "engine": list(got),
             "formula_j0": list(pred[0]), "formula_j1": list(pred[1])}
            for a, spec, got, pred in rows
            if got not in pred.values()
        ]
    return report


def _engine_scalar(a: float, spec: ConstantSpectrum):
    from .index import index_sweep
    from .problems import GeneralizedPeriodic, MatrixFunction, SecondOrderProblem

    n = spec.n
    p = SecondOrderProblem(
        MatrixFunction.constant(spec.scale * np.eye(n)),
        MatrixFunction.constant(np.diag(spec.eigenvalues)),
        GeneralizedPeriodic.scalar(n, a),
    ).validate()
    return tuple(index_sweep(p))
