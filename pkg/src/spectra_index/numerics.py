"""Dense small-matrix kernels.

All routines take and return plain ``numpy`` arrays.  Most of them also
accept a stack of matrices with shape ``(..., m, m)`` so that parameter
sweeps can be evaluated in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import InvalidMatrix, NumericalBlowup

SYMMETRY_TOL = 1e-12
RANK_TOL = 1e-8
DEFAULT_STEPS = 2048


def as_matrix(S, *, square: bool = False, name: str = "matrix") -> np.ndarray:
    """Coerce ``S`` to a finite 2-D float array."""
    A = np.asarray(S, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2:
        raise InvalidMatrix(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidMatrix(f"{name} has non-finite entries")
    if square and A.shape[0] != A.shape[1]:
        raise InvalidMatrix(f"{name} must be square, got shape {A.shape}")
    return A


def check_symmetric(S, *, tol: float = SYMMETRY_TOL, name: str = "matrix") -> np.ndarray:
    """Validate near-symmetry and return the exactly symmetrized matrix."""
    A = as_matrix(S, square=True, name=name)
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(A - A.T), initial=0.0) > tol * scale:
        raise InvalidMatrix(f"{name} is not symmetric to relative tolerance {tol:g}")
    return 0.5 * (A + A.T)


def symplectic_form(n: int) -> np.ndarray:
    """Standard skew form ``J = [[0, -I], [I, 0]]`` of size ``2n``."""
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = -np.eye(n)
    J[n:, :n] = np.eye(n)
    return J


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        Q = self.eigenvectors
        return (Q * self.eigenvalues) @ Q.T


def sym_eig(S) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending.

    Raises:
        InvalidMatrix: if ``S`` is not square or not symmetric to 1e-12.
    """
    A = check_symmetric(S)
    w, Q = np.linalg.eigh(A)
    return EigenDecomposition(w, Q)


def rank_deficiency(S, tol: float = RANK_TOL) -> tuple[int, np.ndarray]:
    """Count singular values that are negligible relative to the largest.

    A singular value counts as zero when it is at most ``tol * sigma_max``, or at
    most ``tol`` when ``sigma_max < tol``.  For an ``m x k`` matrix the count
    also includes the ``k - m`` structurally missing values when ``k > m``.

    Returns:
        ``(deficiency, singular_values)`` with singular values descending.
    """
    if not 0.0 < tol < 1.0:
        raise ValueError("tol must lie in (0, 1)")
    A = as_matrix(S)
    sv = np.linalg.svd(A, compute_uv=False) if A.size else np.zeros(0)
    return _deficiency(sv, tol) + max(0, A.shape[1] - A.shape[0]), sv


def _deficiency(sv: np.ndarray, tol: float) -> int:
    if sv.size == 0:
        return 0
    smax = float(sv[0])
    thresh = tol if smax < tol else tol * smax
    return int(np.count_nonzero(sv <= thresh))


def expm(S) -> np.ndarray:
    """Matrix exponential (scaling and squaring with Pade approximants).

    Accepts a single square matrix or a stack ``(..., m, m)``.
    """
    A = np.asarray(S, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise InvalidMatrix(f"expm needs square matrices, got shape {A.shape}")
    return scipy.linalg.expm(A)


def integrate_linear(
    coef: Callable[[float], np.ndarray],
    steps: int = DEFAULT_STEPS,
    *,
    t0: float = 0.0,
    t1: float = 1.0,
    initial: np.ndarray | None = None,
    return_path: bool = True,
):
    """Classical fourth-order Runge-Kutta for ``Phi' = C(t) Phi``.

    ``coef(t)`` returns ``C(t)`` with shape ``(m, m)`` or a stack ``(..., m, m)``;
    in the stacked case every member is propagated independently.  The
    coefficient is sampled at the stage nodes ``t, t + h/2, t + h``.

    Returns:
        If ``return_path`` the array of ``Phi(t_k)`` for ``k = 0..steps``
        (leading axis is time), otherwise only ``Phi(t1)``.

    Raises:
        NumericalBlowup: if a coefficient sample or the state becomes non-finite.
    """
    if steps < 1:
        raise ValueError("steps must be positive")
    h = (t1 - t0) / steps
    C0 = _sample(coef, t0)
    Phi = np.broadcast_to(np.eye(C0.shape[-1]), C0.shape).copy() if initial is None else np.array(initial, dtype=float)
    path = [Phi.copy()] if return_path else None
    t = t0
    Cl = C0
    for k in range(steps):
        Cm = _sample(coef, t + 0.5 * h)
        Cr = _sample(coef, t0 + (k + 1) * h)
        k1 = Cl @ Phi
        k2 = Cm @ (Phi + 0.5 * h * k1)
        k3 = Cm @ (Phi + 0.5 * h * k2)
        k4 = Cr @ (Phi + h * k3)
        Phi = Phi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t0 + (k + 1) * h
        Cl = Cr
        if return_path:
            path.append(Phi.copy())
    if not np.all(np.isfinite(Phi)):
        raise NumericalBlowup("state transition matrix overflowed")
    return np.array(path) if return_path else Phi


def _sample(coef, t):
    C = np.asarray(coef(t), dtype=float)
    if not np.all(np.isfinite(C)):
        raise NumericalBlowup(f"non-finite coefficient sample at t={t!r}")
    return C
