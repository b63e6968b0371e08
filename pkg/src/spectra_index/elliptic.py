"""Index of ``Delta u + b u = 0`` with Dirichlet data on intervals and rectangles.

The operator ``-Delta - b`` is projected onto the first ``K`` sine modes per
axis (orthonormal, eigenvalues ``(j pi / L)^2``).  Its negative eigenvalues
are the positive eigenvalues of ``Delta + b``, so the index is the number of
Galerkin eigenvalues below ``-tol`` and the nullity the number within
``tol`` of zero.  By min-max the Galerkin eigenvalues decrease to the true
ones as ``K`` grows, so ``K`` is doubled until the counts settle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NoConvergence, ValidatorDisagreement
from .problems import EllipticProblem, Interval, MatrixFunction, Rectangle, ScalarField, SecondOrderProblem, SturmLiouville

GAUSS_POINTS = 8
MAX_MODES = 64


@dataclass(frozen=True, eq=False)
class GalerkinOperator:
    """Symmetric matrix of ``-Delta - b`` in the tensor sine basis.

    ``modes`` lists the mode indices (``(j,)`` or ``(j, k)``) in matrix order.
    """

    K: int
    matrix: np.ndarray
    modes: tuple
    quadrature_points: int

    @property
    def eigenvalues(self) -> np.ndarray:
        if _is_diagonal(self.matrix):
            return np.sort(np.diag(self.matrix))
        return scipy.linalg.eigvalsh(self.matrix)


def _is_diagonal(A: np.ndarray) -> bool:
    return not np.any(A - np.diag(np.diag(A)))


def _axis_rule(L: float, K: int, breaks=None):
    """Composite Gauss-Legendre nodes and weights on ``[0, L]``."""
    panels = np.linspace(0.0, L, max(2 * K, 16) + 1)
    if breaks is not None:
        panels = np.unique(np.concatenate([panels, breaks]))
    x, w = np.polynomial.legendre.leggauss(GAUSS_POINTS)
    a, b = panels[:-1, None], panels[1:, None]
    nodes = 0.5 * (a + b) + 0.5 * (b - a) * x
    weights = 0.5 * (b - a) * w
    return nodes.ravel(), weights.ravel()


def _sines(x: np.ndarray, L: float, K: int) -> np.ndarray:
    j = np.arange(1, K + 1)
    return math.sqrt(2.0 / L) * np.sin(np.outer(x, j) * math.pi / L)


def assemble(p: EllipticProblem, K: int) -> GalerkinOperator:
    """Project ``-Delta - b`` onto ``K`` sine modes per axis.

    Constant ``b`` gives the diagonal matrix directly; otherwise ``b`` is
    integrated against mode products with composite Gauss-Legendre
    quadrature aligned with the sampling grid of ``b``.
    """
    if K < 4:
        raise ValueError("K must be at least 4")
    Ls = p.lengths
    b = p.b
    if len(Ls) == 1:
        L = Ls[0]
        lap = (np.arange(1, K + 1) * math.pi / L) ** 2
        modes = tuple((j,) for j in range(1, K + 1))
        if b.kind == "constant":
            return GalerkinOperator(K, np.diag(lap - b.value), modes, 0)
        breaks = np.linspace(0.0, L, b.values.shape[0]) if b.kind == "sampled" else None
        x, w = _axis_rule(L, K, breaks)
        Phi = _sines(x, L, K)
        bx = b(Ls, x)
        Bm = Phi.T @ ((w * bx)[:, None] * Phi)
        A = np.diag(lap) - 0.5 * (Bm + Bm.T)
        return GalerkinOperator(K, A, modes, x.size)
    L1, L2 = Ls
    l1 = (np.arange(1, K + 1) * math.pi / L1) ** 2
    l2 = (np.arange(1, K + 1) * math.pi / L2) ** 2
    lap = (l1[:, None] + l2[None, :]).ravel()
    modes = tuple((j, k) for j in range(1, K + 1) for k in range(1, K + 1))
    if b.kind == "constant":
        return GalerkinOperator(K, np.diag(lap - b.value), modes, 0)
    if b.kind == "sampled":
        bx_breaks = np.linspace(0.0, L1, b.values.shape[0])
        by_breaks = np.linspace(0.0, L2, b.values.shape[1])
    else:
        bx_breaks = by_breaks = None
    x, wx = _axis_rule(L1, K, bx_breaks)
    y, wy = _axis_rule(L2, K, by_breaks)
    X, Y = np.meshgrid(x, y, indexing="ij")
    bq = b(Ls, X, Y) * wx[:, None] * wy[None, :]
    Phi = _sines(x, L1, K)
    Psi = _sines(y, L2, K)
    # T[a, k, k'] = sum_b bq[a, b] Psi[b, k] Psi[b, k']
    T = np.einsum("ab,bk,bl->akl", bq, Psi, Psi, optimize=True)
    Bm = np.einsum("aj,am,akl->jkml", Phi, Phi, T, optimize=True).reshape(K * K, K * K)
    A = np.diag(lap) - 0.5 * (Bm + Bm.T)
    return GalerkinOperator(K, A, modes, x.size * y.size)


def _counts(op: GalerkinOperator, tol: float) -> tuple[int, int]:
    ev = op.eigenvalues
    return int(np.sum(ev < -tol)), int(np.sum(np.abs(ev) <= tol))


def initial_modes(p: EllipticProblem) -> int:
    top = max(p.b.sup_abs(p.lengths), 0.0)
    return max(4, max(math.ceil(L * math.sqrt(top) / math.pi) + 2 for L in p.lengths))


def galerkin_index(p: EllipticProblem, *, max_modes: int = MAX_MODES) -> tuple[int, int, int, float]:
    """``(i, nu, K, tol)`` with ``K`` doubled until the counts repeat over two doublings.

    Raises:
        NoConvergence: if the counts are still changing at ``max_modes``.
    """
    tol = 1e-6 * (1.0 + p.b.sup_abs(p.lengths))
    K = initial_modes(p)
    if p.b.kind == "constant":
        # exact: modes beyond the threshold all have positive eigenvalue
        i, nu = _counts(assemble(p, K), tol)
        return i, nu, K, tol
    history = []
    while True:
        history.append(_counts(assemble(p, K), tol))
        if len(history) >= 3 and history[-1] == history[-2] == history[-3]:
            return (*history[-1], K, tol)
        if 2 * K > max_modes:
            raise NoConvergence(f"elliptic counts did not settle up to K={K}: {history}")
        K *= 2


def elliptic_top_eigenvalue(p: EllipticProblem, shift: float = 0.0) -> float:
    """Largest eigenvalue of ``Delta + b + shift`` on the initial Galerkin space."""
    op = assemble(p, max(8, initial_modes(p)))
    return float(-op.eigenvalues[0] + shift)


def interval_as_sturm_liouville(p: EllipticProblem) -> SecondOrderProblem:
    """``u'' + b u = 0`` on ``(0, L)`` rescaled to ``[0, 1]``: ``B(t) = L^2 b(L t)``."""
    L = p.geometry.length
    b = p.b
    if b.kind == "constant":
        B = MatrixFunction.constant([[L * L * b.value]])
    elif b.kind == "sampled":
        B = MatrixFunction.sampled((L * L * b.values)[:, None, None])
    else:
        B = MatrixFunction.from_callable(lambda t: [[L * L * float(b((L,), L * t))]], 513)
    return SecondOrderProblem(MatrixFunction.constant([[1.0]]), B, SturmLiouville(0.0, math.pi)).validate()


def elliptic_index(p: EllipticProblem, *, engine: str = "auto"):
    """Index and nullity of ``Delta + b`` with Dirichlet conditions.

    On intervals the result is cross-checked against the Sturm-Liouville
    sweep (``engine="auto"``); ``engine="galerkin"`` skips the cross-check.

    Raises:
        NoConvergence: from the Galerkin refinement.
        ValidatorDisagreement: if the interval cross-check fails.
    """
    from .index import TOLERANCES, IndexResult, index_sweep

    p = p.validate()
    i, nu, K, tol = galerkin_index(p)
    validation = {"method": "sine-Galerkin", "modes_per_axis": K, "zero_band": tol}
    if isinstance(p.geometry, Interval) and engine == "auto":
        sl = index_sweep(interval_as_sturm_liouville(p))
        agree = (sl.i, sl.nu) == (i, nu)
        validation.update({"cross_check": "Sturm-Liouville sweep", "agree": agree, "sweep": [sl.i, sl.nu]})
        if not agree:
            raise ValidatorDisagreement(f"sine-Galerkin gives ({i}, {nu}), the sweep gives ({sl.i}, {sl.nu})")
    tolerances = dict(TOLERANCES, elliptic_zero_band=tol)
    return IndexResult(i, nu, (), None, validation, tolerances, 0.0, None)
