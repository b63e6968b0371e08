"""Finite-element eigenvalue counter used to validate the shooting sweeps.

Second-order operators ``(Lambda x')' + B`` are discretized with continuous
piecewise-linear elements and a lumped mass matrix.  Angle conditions enter
through the boundary terms of the quadratic form

    q(x) = -int <Lambda x', x'> + int <B x, x> + cot(beta)|x(1)|^2 - cot(alpha)|x(0)|^2

(or as Dirichlet constraints when ``alpha = 0`` / ``beta = pi``); generalized
periodic conditions are imposed by eliminating ``x_N = M x_0``, which makes
the boundary terms cancel.  Eigenvalues near zero are Richardson-extrapolated
across two mesh levels and then classified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NoConvergence
from .problems import EllipticProblem, GeneralizedPeriodic, MatrixFunction, SecondOrderProblem, SturmLiouville

BASE_LEVEL = 64
MAX_LEVELS = 9


@dataclass(frozen=True)
class GalerkinCount:
    """Signed eigenvalue count of a discretized operator.

    ``i`` counts positive eigenvalues, ``nu`` near-zero ones; ``levels`` are
    the mesh sizes used and ``top`` the extrapolated leading eigenvalues.
    """

    i: int
    nu: int
    levels: tuple[int, ...]
    top: np.ndarray
    threshold: float

    def __iter__(self):
        yield self.i
        yield self.nu


def _blocks(p: SecondOrderProblem, N: int, shift: float):
    """Block tridiagonal stiffness data on the uniform mesh with N cells."""
    n = p.n
    nodes = np.linspace(0.0, 1.0, N + 1)
    h = 1.0 / N
    Lbar = p.Lambda.cell_means(nodes) / h
    diag = p.B.hat_integrals(nodes)
    mass = np.full(N + 1, h)
    mass[0] = mass[-1] = 0.5 * h
    diag = diag + shift * mass[:, None, None] * np.eye(n)
    diag[:-1] -= Lbar
    diag[1:] -= Lbar
    off = Lbar  # couples node c and c + 1
    return diag, off, mass


def _to_band(entries: dict, size: int) -> np.ndarray:
    bw = max((i - j for (i, j) in entries), default=0)
    ab = np.zeros((bw + 1, size))
    for (i, j), v in entries.items():
        ab[i - j, j] += v
    return ab


def _scatter(entries, r, c, block):
    # lower triangle of a symmetric matrix assembled from scalar entries
    n = block.shape[0]
    for a in range(n):
        for b in range(n):
            i, j = r * n + a, c * n + b
            if i >= j:
                entries[(i, j)] = entries.get((i, j), 0.0) + block[a, b]


def _sturm_liouville_band(p: SecondOrderProblem, N: int, shift: float):
    n = p.n
    diag, off, mass = _blocks(p, N, shift)
    alpha, beta = p.bc.alpha, p.bc.beta
    first, last = 0, N
    if alpha == 0.0:
        first = 1
    else:
        diag[0] -= (math.cos(alpha) / math.sin(alpha)) * np.eye(n)
    if beta == math.pi:
        last = N - 1
    else:
        diag[N] += (math.cos(beta) / math.sin(beta)) * np.eye(n)
    nodes = list(range(first, last + 1))
    pos = {node: k for k, node in enumerate(nodes)}
    scale = 1.0 / np.sqrt(mass)
    m = len(nodes)
    # dense-banded assembly: block tridiagonal, lower bandwidth 2n - 1
    ab = np.zeros((2 * n, m * n))
    for node in nodes:
        k = pos[node]
        blk = diag[node] * scale[node] ** 2
        for a in range(n):
            for b in range(a + 1):
                ab[a - b, k * n + b] = blk[a, b]
        if node + 1 in pos:
            blk = off[node] * scale[node] * scale[node + 1]
            # entry (row of node+1, column of node)
            for a in range(n):
                for b in range(n):
                    ab[n + a - b, k * n + b] = blk[a, b]
    return ab


def _periodic_band(p: SecondOrderProblem, N: int, shift: float):
    n = p.n
    M = np.asarray(p.bc.M, dtype=float)
    diag, off, mass = _blocks(p, N, shift)
    # eliminate x_N = M x_0
    D0 = diag[0] + M.T @ diag[N] @ M
    mass0 = 0.5 * mass[1] * (np.eye(n) + M.T @ M)
    w, Q = np.linalg.eigh(mass0)
    S0 = (Q / np.sqrt(w)) @ Q.T
    # folded ordering 0, N-1, 1, N-2, ... keeps the cyclic coupling banded
    order = []
    lo, hi = 0, N - 1
    while lo <= hi:
        order.append(lo)
        if hi != lo:
            order.append(hi)
        lo += 1
        hi -= 1
    pos = {node: k for k, node in enumerate(order)}
    sc = {node: (S0 if node == 0 else np.eye(n) / math.sqrt(mass[node])) for node in range(N)}

    def add(entries, i, j, blk):
        # blk couples rows of node i with columns of node j
        blk = sc[i].T @ blk @ sc[j]
        ri, rj = pos[i], pos[j]
        if ri < rj:
            ri, rj, blk = rj, ri, blk.T
        _scatter(entries, ri, rj, blk)

    entries: dict = {}
    add(entries, 0, 0, D0)
    for node in range(1, N):
        add(entries, node, node, diag[node])
    for c in range(N - 1):
        add(entries, c + 1, c, off[c])
    # last cell couples x_{N-1} with x_N = M x_0
    add(entries, 0, N - 1, M.T @ off[N - 1])
    return _to_band(entries, N * n)


def discrete_band(p: SecondOrderProblem, N: int, shift: float = 0.0) -> np.ndarray:
    """Lower banded storage of the mass-normalized discrete operator for ``B + shift``."""
    if isinstance(p.bc, SturmLiouville):
        return _sturm_liouville_band(p, N, shift)
    if isinstance(p.bc, GeneralizedPeriodic):
        return _periodic_band(p, N, shift)
    raise TypeError(f"unsupported boundary condition {p.bc!r}")


def _gershgorin_upper(ab: np.ndarray) -> float:
    size = ab.shape[1]
    d = ab[0]
    radius = np.zeros(size)
    for k in range(1, ab.shape[0]):
        v = np.abs(ab[k, : size - k])
        radius[: size - k] += v
        radius[k:] += v
    return float(np.max(d + radius))


def top_eigenvalues(ab: np.ndarray, floor: float) -> np.ndarray:
    """Eigenvalues above ``floor``, descending."""
    upper = _gershgorin_upper(ab) + 1.0
    if upper <= floor:
        return np.zeros(0)
    w = scipy.linalg.eigvals_banded(ab, lower=True, select="v", select_range=(floor, upper))
    return np.sort(w)[::-1]


def largest_eigenvalue(p: SecondOrderProblem, N: int = 128, shift: float = 0.0) -> float:
    ab = discrete_band(p, N, shift)
    size = ab.shape[1]
    w = scipy.linalg.eigvals_banded(ab, lower=True, select="i", select_range=(size - 1, size - 1))
    return float(w[-1])


def galerkin_count(p, truncation: int = BASE_LEVEL, *, shift: float = 0.0, max_levels: int = MAX_LEVELS) -> GalerkinCount:
    """Count positive and near-zero eigenvalues of the discretized operator.

    The mesh is doubled from ``truncation`` cells; leading eigenvalues are
    Richardson-extrapolated between consecutive levels and compared against
    ``max(1e-8 (1 + scale), 10 * error estimate)``.  The count is accepted
    when two consecutive levels agree.

    Raises:
        NoConvergence: if counts keep changing up to the last level.
    """
    if isinstance(p, EllipticProblem):
        from .elliptic import elliptic_index

        r = elliptic_index(p, engine="galerkin")
        return GalerkinCount(r.i, r.nu, (), np.zeros(0), 0.0)
    scale = 1.0 + p.B.sup_norm() + abs(shift)
    floor = -(2.0 + 0.1 * scale)
    tiny = 1e-8 * scale
    levels = []
    tops = []
    extrap = []
    counts = []
    N = int(truncation)
    for level in range(max_levels):
        tops.append(top_eigenvalues(discrete_band(p, N, shift), floor))
        levels.append(N)
        if level >= 1:
            a, b = tops[-2], tops[-1]
            k = min(a.size, b.size)
            e = (4.0 * b[:k] - a[:k]) / 3.0
            if extrap:
                prev = extrap[-1]
                k2 = min(k, prev.size)
                err = np.abs(b[:k] - a[:k]) / 3.0
                err[:k2] = np.abs(e[:k2] - prev[:k2])
            else:
                err = np.abs(b[:k] - a[:k])
            extrap.append(e)
            thr = np.maximum(tiny, 10.0 * err)
            counts.append((int(np.sum(e > thr)), int(np.sum(np.abs(e) <= thr))))
            if len(counts) >= 2 and counts[-1] == counts[-2]:
                i, nu = counts[-1]
                return GalerkinCount(i, nu, tuple(levels), e, float(np.max(thr, initial=tiny)))
        N *= 2
    raise NoConvergence(f"discrete counts did not settle: {counts}")
