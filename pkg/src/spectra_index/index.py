"""Index computations.

* :func:`index_sweep` counts the parameters ``lam < 0`` at which ``B + lam*id``
  is degenerate, weighted by nullity; this equals the number of positive
  eigenvalues of ``(Lambda x')' + B``.
* :func:`relative_index_monotone` sums nullities along ``(1 - s) B0 + s B1`` for
  ``s`` in ``[0, 1)``; :func:`relative_index` extends it to arbitrary pairs by
  differencing against ``k * id``.
* :func:`index_first_order` anchors first-order problems and adds a relative
  index; :func:`ekeland_index` is the relative index minus the base nullity.

Degenerate parameters are located by scanning the smallest singular value of
the scale-free matching matrix (see :mod:`spectral`) and zooming into every
local minimum; the multiplicity is the singular-value deficiency at the
minimizer.  Second-order sweeps are always checked against the finite-element
counter in :mod:`galerkin`.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InternalError, NotMonotone, ResolutionExceeded, ValidatorDisagreement, VerificationFailed
from .galerkin import galerkin_count, largest_eigenvalue
from .numerics import RANK_TOL, _deficiency
from .problems import (
    Bolza,
    EllipticProblem,
    FirstOrderProblem,
    MatrixFunction,
    SecondOrderProblem,
    SturmLiouville,
    path as make_path,
)
from .spectral import (
    DEFECT_TOL,
    Coefficient,
    Family,
    embed_lower,
    family_of,
    linear_form,
    second_order_coefficient,
    symplectic_defect,
)

SCAN_POINTS = 512
SCAN_DENSITY = 16.0
ZOOM_POINTS = 65
ZOOM_WIDTH = 1e-12
ENDPOINT_TOL = 1e-8
REFINEMENTS = 3


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("SPECTRA_INDEX_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class Crossing:
    parameter: float
    multiplicity: int


@dataclass(frozen=True)
class CrossingSet:
    """Degenerate parameters in ``[lo, hi]`` with multiplicities."""

    lo: float
    hi: float
    crossings: tuple[Crossing, ...]
    width: float
    defect: float = 0.0
    rotations: int | None = None
    rank_agree: bool = True

    @property
    def total(self) -> int:
        return sum(c.multiplicity for c in self.crossings)

    def inside(self, lo_open: bool, hi_open: bool, tol: float) -> "CrossingSet":
        keep = tuple(
            c
            for c in self.crossings
            if (c.parameter > self.lo + tol if lo_open else True) and (c.parameter < self.hi - tol if hi_open else True)
        )
        return CrossingSet(self.lo, self.hi, keep, self.width, self.defect, self.rotations, self.rank_agree)

    @property
    def consistent(self) -> bool:
        """Winding resolved and every crossing confirmed by the matching rank."""
        return self.rotations is not None and self.rank_agree


@dataclass(frozen=True)
class IndexResult:
    """Index ``i`` and nullity ``nu`` with supporting data.

    For sweep-type results ``i`` is the sum of the listed crossing
    multiplicities.  ``anchor`` is set for first-order problems.
    """

    i: int
    nu: int
    crossings: tuple[Crossing, ...] = ()
    anchor: dict | None = None
    validation: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    defect: float = 0.0
    lambda_min: float | None = None

    def __iter__(self):
        yield self.i
        yield self.nu

    def to_json(self) -> dict:
        return {
            "i": self.i,
            "nu": self.nu,
            "crossings": [{"parameter": c.parameter, "multiplicity": c.multiplicity} for c in self.crossings],
            "anchor": self.anchor,
            "validation": self.validation,
            "tolerances": self.tolerances,
            "symplectic_defect": self.defect,
            "lambda_min": self.lambda_min,
        }


TOLERANCES = {
    "rank_tol": RANK_TOL,
    "zoom_width_relative": ZOOM_WIDTH,
    "endpoint_tol_relative": ENDPOINT_TOL,
    "scan_points_min": SCAN_POINTS,
    "symplectic_defect_max": DEFECT_TOL,
    "winding_step_max_radians": 0.5 * math.pi,
}


# ---------------------------------------------------------------------------
# crossing search


def _evaluate(fam: Family, params: np.ndarray, threads: int, *, scan: bool = False):
    fn = fam.scan if scan else fam.singular_values
    if threads <= 1 or params.size < 64:
        return fn(params)
    chunks = np.array_split(params, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(fn, chunks))
    if scan:
        return np.concatenate([a for a, _ in parts]), np.concatenate([b for _, b in parts])
    return np.concatenate(parts)


def step_counts(eigs: np.ndarray, nu_first: int, nu_last: int, sign: float) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalue passes through 1 on each grid step ``[p_j, p_j+1)``.

    ``eigs`` holds the unit eigenvalues of the relative unitary on an
    increasing parameter grid.  Along a monotone family every eigenvalue
    turns the same way (``sign``), so the phase change of the determinant
    over a step, together with the eigenvalue positions at both ends, gives
    the number of passes exactly.  Interior nodes use the raw angles; at the
    first node the ``nu_first`` eigenvalues nearest 1 count as passes and at
    the last node the ``nu_last`` nearest 1 do not, matching the nullities
    there.

    Returns ``(counts, valid)``.  A step is invalid when its phase change
    exceeds a quarter circle or runs against ``sign``: a fast turn may then
    be aliased, and the step has to be subdivided.
    """
    two_pi = 2.0 * math.pi
    steps = np.angle(np.prod(eigs[1:], axis=1) / np.prod(eigs[:-1], axis=1))
    ang = np.mod(sign * np.angle(eigs), two_pi)
    dist = np.minimum(ang, two_pi - ang)
    order = np.argsort(dist, axis=1)
    start = ang.copy()
    end = ang.copy()
    end[end == 0.0] = two_pi
    start[0, order[0, :nu_first]] = 0.0
    end[-1, order[-1, :nu_last]] = two_pi
    d = eigs.shape[1]
    raw = (start[:-1].sum(1) + sign * steps - end[1:].sum(1)) / two_pi + d - np.count_nonzero(start[:-1] > 0, axis=1)
    counts = np.rint(raw)
    valid = (np.abs(steps) <= 0.5 * math.pi) & (sign * steps >= -1e-8) & (np.abs(raw - counts) <= 1e-3) & (counts >= 0)
    return np.where(valid, counts, 0).astype(int), valid


def _direction(eigs: np.ndarray) -> float:
    # turning direction of the family: the sign taken by most grid steps
    steps = np.angle(np.prod(eigs[1:], axis=1) / np.prod(eigs[:-1], axis=1))
    return -1.0 if np.count_nonzero(steps < 0) > np.count_nonzero(steps > 0) else 1.0


def find_crossings(fam: Family, lo: float, hi: float, points: int, *, threads: int | None = None,
                   tol: float = RANK_TOL) -> CrossingSet:
    """All degenerate parameters of the monotone family ``fam`` in ``[lo, hi)``.

    Crossings are counted by eigenvalue winding on a uniform grid and then
    bracketed by recursive subdivision of the steps that contain passes (or
    that turn too fast to count), down to a relative width of
    ``ZOOM_WIDTH``.  Each located crossing is confirmed independently by
    the rank deficiency of the matching matrix; ``rank_agree`` records
    whether every one matched.  ``rotations`` is the total count, or
    ``None`` when some step could not be resolved.

    The grid is split into chunks that may run on separate threads; the
    outcome does not depend on the thread count.
    """
    threads = default_threads() if threads is None else threads
    fam.resolve(np.array([lo, hi]))
    span = hi - lo
    target = ZOOM_WIDTH * max(1.0, span)
    grid = np.linspace(lo, hi, points)
    sv, eigs = _evaluate(fam, grid, threads, scan=True)
    nu_lo, nu_hi = _deficiency(sv[0], tol), _deficiency(sv[-1], tol)
    sign = _direction(eigs)

    def pending(nodes, es):
        counts, valid = step_counts(es, nu_lo if nodes[0] == lo else 0, nu_hi if nodes[-1] == hi else 0, sign)
        return [(nodes[j], nodes[j + 1], int(counts[j]) if valid[j] else None)
                for j in range(nodes.size - 1) if counts[j] or not valid[j]]

    brackets = pending(grid, eigs)
    found = []
    unresolved = False
    while brackets:
        nxt = []
        for a, b, c in brackets:
            if b - a <= target:
                if c is None:
                    unresolved = True
                else:
                    found.append((a, b, c))
                continue
            sub = np.linspace(a, b, ZOOM_POINTS)
            _, es = _evaluate(fam, sub, threads, scan=True)
            nxt.extend(pending(sub, es))
        brackets = nxt
    found.sort()
    crossings = []
    rank_agree = True
    for a, b, c in found:
        svs = _evaluate(fam, np.array([a, b]), 1)
        x, s_best = (a, svs[0]) if svs[0][-1] <= svs[1][-1] or b >= hi else (b, svs[1])
        if _deficiency(s_best, tol) != c:
            rank_agree = False
        if crossings and x - crossings[-1][0] <= 1e3 * target:
            crossings[-1][1] += c
        else:
            crossings.append([float(x), c])
    result = tuple(Crossing(x, m) for x, m in crossings)
    defect = fam.lagrangian_defect(np.array([c.parameter for c in result])) if result else 0.0
    rotations = None if unresolved else sum(c for _, _, c in found)
    return CrossingSet(lo, hi, result, float(target), defect, rotations, rank_agree)


# ---------------------------------------------------------------------------
# lower bound


def lambda_lower_bound(p) -> float:
    """Parameter below which ``B + lam*id`` has no degeneracy.

    For angle conditions the boundary terms of the quadratic form are bounded
    with ``|x(t)|^2 <= eps ||x'||^2 + (1 + 1/eps) ||x||^2``; periodic-type and
    Dirichlet-Laplacian problems have no boundary contribution.  The bound is
    verified a posteriori on a finite-element discretization.

    Raises:
        VerificationFailed: if the discrete operator at the bound is not
            negative definite.
    """
    if isinstance(p, EllipticProblem):
        from .elliptic import elliptic_top_eigenvalue

        lam = -p.b.sup_abs(p.lengths) - 1.0
        if elliptic_top_eigenvalue(p, lam) >= 0.0:
            raise VerificationFailed(f"elliptic operator not negative definite at {lam!r}")
        return lam
    lam_bar = 0.0
    if isinstance(p.bc, SturmLiouville):
        a = 0.0
        if p.bc.alpha != 0.0:
            a += abs(math.cos(p.bc.alpha) / math.sin(p.bc.alpha)) * max(1.0, float(np.linalg.norm(p.Lambda(0.0), 2)))
        if p.bc.beta != math.pi:
            a += abs(math.cos(p.bc.beta) / math.sin(p.bc.beta)) * max(1.0, float(np.linalg.norm(p.Lambda(1.0), 2)))
        if a > 0.0:
            eps = min(1.0, p.Lambda.min_eigenvalue() / (2.0 * a + 1.0))
            lam_bar = a * (1.0 + 1.0 / eps)
    lam_min = -lam_bar - p.B.sup_norm() - 1.0
    if largest_eigenvalue(p, 128, lam_min) >= 0.0:
        raise VerificationFailed(f"discrete operator not negative definite at lambda={lam_min!r}")
    return lam_min


# ---------------------------------------------------------------------------
# sweeps


def _scan_points(extent: float, lam_scale: float, factor: int) -> int:
    return factor * max(SCAN_POINTS, math.ceil(SCAN_DENSITY * extent / min(1.0, lam_scale)))


def _lambda_family(p: SecondOrderProblem) -> Family:
    form = linear_form(p)
    return Family(form.S, embed_lower(MatrixFunction.constant(np.eye(p.n))), form.boundary)


def index_sweep(p, *, validate: bool = True, threads: int | None = None) -> IndexResult:
    """Index and nullity from the sweep over ``lam`` in ``[lam_min, 0]``.

    Raises:
        ValidatorDisagreement: if the finite-element counter still disagrees
            after refining the scan.
        ResolutionExceeded: propagated from the integrator.
    """
    if isinstance(p, EllipticProblem):
        from .elliptic import elliptic_index

        return elliptic_index(p)
    if not isinstance(p, SecondOrderProblem):
        raise TypeError("index_sweep needs a second-order or elliptic problem")
    lam_min = lambda_lower_bound(p)
    fam = _lambda_family(p)
    span = -lam_min
    lam_scale = p.Lambda.min_eigenvalue()
    ref = galerkin_count(p) if validate else None
    for attempt in range(REFINEMENTS + 1):
        cs = find_crossings(fam, lam_min, 0.0, _scan_points(span, lam_scale, 2**attempt), threads=threads)
        tol = ENDPOINT_TOL * max(1.0, span)
        counted = cs.inside(lo_open=False, hi_open=True, tol=tol)
        nu = int(_deficiency(fam.singular_values([0.0])[0], RANK_TOL))
        i = counted.total
        if cs.consistent and (ref is None or (i, nu) == (ref.i, ref.nu)):
            break
    else:
        if not cs.consistent:
            raise ValidatorDisagreement("crossing multiplicities from winding and from the matching rank disagree")
        raise ValidatorDisagreement(
            f"sweep gives (i, nu) = ({i}, {nu}) but the discretization gives ({ref.i}, {ref.nu})"
        )
    if nu > fam.boundary.max_nullity:
        raise InternalError(f"nullity {nu} exceeds {fam.boundary.max_nullity}")
    defect = max(cs.defect, symplectic_defect(fam.gamma(0.0)))
    if defect > DEFECT_TOL:
        raise ResolutionExceeded(f"symplectic defect {defect:.3g} above {DEFECT_TOL}")
    validation = {"method": "finite-element count", "agree": True, "discrete": [ref.i, ref.nu]} if ref else {
        "method": "none", "agree": None}
    return IndexResult(i, nu, counted.crossings, None, validation, dict(TOLERANCES), defect, lam_min)


def _template_B(template, B) -> MatrixFunction:
    dim = template.B.dim
    return MatrixFunction.coerce(B, dim)


def monotone_crossings(template, B0, B1, *, threads: int | None = None, factor: int = 1) -> tuple[int, CrossingSet, int]:
    """``(I(B0, B1), crossings in (0, 1), nu(B0))`` for a monotone segment."""
    B0 = _template_B(template, B0)
    B1 = _template_B(template, B1)
    pth = make_path(B0, B1)
    if not pth.monotone:
        raise NotMonotone(f"B1 - B0 is not positive definite (smallest eigenvalue {pth.margin:.3g})")
    p0 = template.with_B(B0)
    fam = family_of(p0, pth.difference)
    extent = pth.difference.sup_norm()
    lam_scale = p0.Lambda.min_eigenvalue() if isinstance(p0, SecondOrderProblem) else 1.0
    for attempt in range(REFINEMENTS + 1):
        cs = find_crossings(fam, 0.0, 1.0, _scan_points(extent, lam_scale, factor * 2**attempt), threads=threads)
        if cs.consistent:
            break
    else:
        raise ValidatorDisagreement("crossing multiplicities from winding and from the matching rank disagree")
    interior = cs.inside(lo_open=True, hi_open=True, tol=ENDPOINT_TOL)
    nu0 = int(_deficiency(fam.singular_values([0.0])[0], RANK_TOL))
    return nu0 + interior.total, interior, nu0


def relative_index_monotone(template, path, *, validate: bool = True, threads: int | None = None) -> int:
    """``sum over s in [0, 1) of nu((1 - s) B0 + s B1)`` for a monotone path.

    ``path`` is a :class:`PencilPath` (or a pair ``(B0, B1)``).  For
    second-order templates the result is checked against the
    finite-element counts ``i(B1) - i(B0)``.

    Raises:
        NotMonotone, ValidatorDisagreement
    """
    B0, B1 = (path.B0, path.B1) if hasattr(path, "B0") else path
    if hasattr(path, "monotone") and not path.monotone:
        raise NotMonotone(f"path is not monotone (margin {path.margin:.3g})")
    ref = None
    if validate and isinstance(template, SecondOrderProblem):
        ref = galerkin_count(template.with_B(B1)).i - galerkin_count(template.with_B(B0)).i
    for attempt in range(REFINEMENTS + 1):
        total, _, _ = monotone_crossings(template, B0, B1, threads=threads, factor=2**attempt)
        if ref is None or total == ref:
            return total
    raise ValidatorDisagreement(f"relative index {total} disagrees with the discrete count {ref}")


def default_k(B1: MatrixFunction, B2: MatrixFunction) -> float:
    return 1.0 + max(B1.sup_norm(), B2.sup_norm())


def relative_index(template, B1, B2, *, k: float | None = None, validate: bool = True,
                   threads: int | None = None) -> int:
    """``I(B1, k*id) - I(B2, k*id)`` with ``k = 1 + max spectral radius``."""
    B1 = _template_B(template, B1)
    B2 = _template_B(template, B2)
    if k is None:
        k = default_k(B1, B2)
    K = MatrixFunction.constant(k * np.eye(B1.dim))
    a = relative_index_monotone(template, (B1, K), validate=validate, threads=threads)
    b = relative_index_monotone(template, (B2, K), validate=validate, threads=threads)
    return a - b


def index_first_order(p: FirstOrderProblem, *, threads: int | None = None) -> IndexResult:
    """Anchored index of ``J x' + B x = 0``.

    Bolza ends use the anchor ``i(diag{0, I}) = index of the second-order
    problem with Lambda = I, B = 0`` and the same angles.  Symplectic ends
    use the configured anchor value (default 0) for ``B = 0``.
    """
    n = p.n
    from .spectral import nullity as _nullity

    if isinstance(p.bc, Bolza):
        sl = SecondOrderProblem(
            MatrixFunction.constant(np.eye(n)), MatrixFunction.constant(np.zeros((n, n))),
            SturmLiouville(p.bc.alpha, p.bc.beta),
        )
        anchor_value = index_sweep(sl, threads=threads).i
        base = np.zeros((2 * n, 2 * n))
        base[n:, n:] = np.eye(n)
        anchor = {"name": "i(diag{0, I})", "value": anchor_value}
    else:
        anchor_value = int(p.anchor)
        base = np.zeros((2 * n, 2 * n))
        anchor = {"name": "i(0)", "value": anchor_value}
    rel = relative_index(p, MatrixFunction.constant(base), p.B, threads=threads)
    nr = _nullity(p)
    validation = {"method": "winding count confirmed by the matching rank at every crossing", "agree": True}
    return IndexResult(anchor_value + rel, nr.nu, (), anchor, validation, dict(TOLERANCES), nr.defect, None)


def ekeland_index(template, B, B0, *, threads: int | None = None) -> tuple[int, int]:
    """``(I(B0, B) - nu(B0), nu(B))`` for ``B - B0`` positive definite.

    Raises:
        NotMonotone: if ``B - B0`` is not uniformly positive definite.
    """
    from .spectral import nullity as _nullity

    B = _template_B(template, B)
    B0 = _template_B(template, B0)
    pth = make_path(B0, B)
    if not pth.monotone:
        raise NotMonotone(f"B - B0 is not positive definite (smallest eigenvalue {pth.margin:.3g})")
    total = relative_index_monotone(template, pth, threads=threads)
    nu0 = _nullity(template.with_B(B0)).nu
    nu = _nullity(template.with_B(B)).nu
    return total - nu0, nu
