"""Fundamental solutions, boundary matching and nullity.

Every problem class is reduced to a linear Hamiltonian system
``z' = J S(t) z`` on ``[0, 1]`` plus boundary data of one of two shapes:

* angle type: ``z(0)`` in the range of ``V`` (``2n x n``) and ``W z(1) = 0``
  (``W`` is ``n x 2n``);
* periodic type: ``z(1) = P z(0)``.

The kernel of the boundary-value problem is isomorphic to the kernel of the
matching matrix ``W gamma(1) V`` (angle type) or ``gamma(1) - P`` (periodic
type).  For counting, the sweep engine uses an equivalent scale-free matrix:
it propagates an orthonormal frame of the relevant subspace (``gamma(t) V``,
or the graph ``{(c, gamma(t) c)}`` for periodic data) with re-orthonormalization
along the way, and pairs it with an orthonormal basis of the boundary
annihilator.  Its singular values are sines of principal angles, so a
zero singular value means a kernel vector regardless of how strongly the
solutions grow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, InternalError, ResolutionExceeded
from .numerics import DEFAULT_STEPS, RANK_TOL, expm, integrate_linear, rank_deficiency, symplectic_form
from .problems import (
    Bolza,
    FirstOrderProblem,
    GeneralizedPeriodic,
    MatrixFunction,
    SecondOrderProblem,
    SturmLiouville,
    Symplectic,
)

DEFECT_TOL = 1e-8
STABILITY_TOL = 1e-9
MAX_STEPS = 2**16
GROWTH_PER_SEGMENT = 3.0


# ---------------------------------------------------------------------------
# boundary data


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Either angle-type ``(V, W)`` or periodic-type ``P`` end conditions."""

    n: int
    V: np.ndarray | None = None
    W: np.ndarray | None = None
    P: np.ndarray | None = None

    @property
    def angle_type(self) -> bool:
        return self.P is None

    @property
    def max_nullity(self) -> int:
        return self.n if self.angle_type else 2 * self.n

    def initial_frame(self) -> tuple[np.ndarray | None, np.ndarray]:
        """``(static, moving)`` blocks of the initial orthonormal frame."""
        if self.angle_type:
            Q, _ = np.linalg.qr(self.V)
            return None, Q
        I = np.eye(2 * self.n) / math.sqrt(2.0)
        return I, I.copy()

    def annihilator(self) -> np.ndarray:
        """Orthonormal rows whose joint kernel is the terminal condition."""
        if self.angle_type:
            Q, _ = np.linalg.qr(self.W.T)
            return Q.T
        Q, _ = np.linalg.qr(np.hstack([-self.P, np.eye(2 * self.n)]).T)
        return Q.T

    def form(self) -> np.ndarray:
        """Skew form under which the propagated frame stays isotropic."""
        J = symplectic_form(self.n)
        if self.angle_type:
            return J
        Z = np.zeros_like(J)
        return np.block([[-J, Z], [Z, J]])


def sturm_liouville_data(n: int, alpha: float, beta: float) -> BoundaryData:
    """State ``(y, x)`` with ``y = Lambda x'``."""
    I = np.eye(n)
    V = np.vstack([math.cos(alpha) * I, math.sin(alpha) * I])
    W = np.hstack([-math.sin(beta) * I, math.cos(beta) * I])
    return BoundaryData(n, V=V, W=W)


def bolza_data(n: int, alpha: float, beta: float) -> BoundaryData:
    """State ``(x1, x2)``."""
    I = np.eye(n)
    V = np.vstack([-math.sin(alpha) * I, math.cos(alpha) * I])
    W = np.hstack([math.cos(beta) * I, math.sin(beta) * I])
    return BoundaryData(n, V=V, W=W)


def periodic_data(P) -> BoundaryData:
    P = np.asarray(P, dtype=float)
    return BoundaryData(P.shape[0] // 2, P=P)


# ---------------------------------------------------------------------------
# Hamiltonian coefficients


class Coefficient:
    """``S(t)`` assembled pointwise from matrix functions.

    ``build`` maps a list of value stacks (one per input function, shape
    ``(k, m, m)``) to the stack of ``S`` values.  Pieces are the union of all
    input pieces, so every input is affine on every piece.
    """

    def __init__(self, funcs: Sequence[MatrixFunction], build: Callable, dim: int):
        self.funcs = list(funcs)
        self.build = build
        self.dim = dim
        self.knots = np.unique(np.concatenate([F.knots for F in self.funcs]))
        mids = 0.5 * (self.knots[:-1] + self.knots[1:])
        self._idx = [F.piece_of(mids) for F in self.funcs]
        self.piecewise_constant = all(F.is_piecewise_constant for F in self.funcs)

    @property
    def pieces(self) -> int:
        return self.knots.size - 1

    def on_piece(self, k: int, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        vals = [F.eval_in_piece(t, np.full(t.shape, idx[k])) for F, idx in zip(self.funcs, self._idx)]
        return self.build(vals)

    def __call__(self, t) -> np.ndarray:
        t = float(t)
        k = int(np.clip(np.searchsorted(self.knots, t, side="right") - 1, 0, self.pieces - 1))
        return self.on_piece(k, t)[0]

    def sup_norm(self) -> float:
        vals = [self.on_piece(k, self.knots[k:k + 2]) for k in range(self.pieces)]
        return float(max(np.max(np.linalg.norm(v, 2, axis=(-2, -1))) for v in vals))

    @classmethod
    def of(cls, F: MatrixFunction) -> "Coefficient":
        return cls([F], lambda v: v[0], F.dim)


def second_order_coefficient(Lambda: MatrixFunction, B: MatrixFunction) -> Coefficient:
    """``diag(Lambda^{-1}, B)``; the inverse is exact wherever it is sampled."""
    n = B.dim

    def build(vals):
        L, Bv = vals
        out = np.zeros(L.shape[:-2] + (2 * n, 2 * n))
        out[..., :n, :n] = np.linalg.inv(L)
        out[..., n:, n:] = Bv
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    return Coefficient([Lambda, B], build, 2 * n)


def embed_lower(D: MatrixFunction) -> Coefficient:
    """``diag(0, D)``: the parameter direction of a second-order family."""
    n = D.dim

    def build(vals):
        out = np.zeros(vals[0].shape[:-2] + (2 * n, 2 * n))
        out[..., n:, n:] = vals[0]
        return out

    return Coefficient([D], build, 2 * n)


@dataclass(frozen=True, eq=False)
class LinearForm:
    """First-order data equivalent to a problem: ``z' = J S(t) z`` plus ends."""

    S: Coefficient
    boundary: BoundaryData
    P_eff: np.ndarray | None = None


def to_first_order(p: SecondOrderProblem) -> LinearForm:
    """Substitute ``y = Lambda x'``; state ordering ``z = (y, x)``.

    Sturm-Liouville angles become the initial subspace ``range V`` and the
    terminal rows ``W``; generalized-periodic data become ``z(1) = P_eff z(0)``
    with ``P_eff = diag(Lambda(1) N Lambda(0)^{-1}, M)``.
    """
    n = p.n
    S = second_order_coefficient(p.Lambda, p.B)
    if isinstance(p.bc, SturmLiouville):
        return LinearForm(S, sturm_liouville_data(n, p.bc.alpha, p.bc.beta))
    M = np.asarray(p.bc.M, dtype=float)
    N = np.asarray(p.bc.N, dtype=float)
    P = np.zeros((2 * n, 2 * n))
    P[:n, :n] = p.Lambda(1.0) @ N @ np.linalg.inv(p.Lambda(0.0))
    P[n:, n:] = M
    return LinearForm(S, periodic_data(P), P)


def first_order_form(p: FirstOrderProblem) -> LinearForm:
    S = Coefficient.of(p.B)
    if isinstance(p.bc, Bolza):
        return LinearForm(S, bolza_data(p.n, p.bc.alpha, p.bc.beta))
    P = np.asarray(p.bc.P, dtype=float)
    return LinearForm(S, periodic_data(P), P)


def linear_form(p) -> LinearForm:
    if isinstance(p, SecondOrderProblem):
        return to_first_order(p)
    if isinstance(p, FirstOrderProblem):
        return first_order_form(p)
    raise DimensionMismatch(f"no first-order form for {type(p).__name__}")


def boundary_of(bc, n: int, Lambda: MatrixFunction | None = None) -> BoundaryData:
    if isinstance(bc, SturmLiouville):
        return sturm_liouville_data(n, bc.alpha, bc.beta)
    if isinstance(bc, Bolza):
        return bolza_data(n, bc.alpha, bc.beta)
    if isinstance(bc, Symplectic):
        return periodic_data(bc.P)
    if isinstance(bc, GeneralizedPeriodic):
        P = np.zeros((2 * n, 2 * n))
        P[:n, :n] = Lambda(1.0) @ np.asarray(bc.N) @ np.linalg.inv(Lambda(0.0))
        P[n:, n:] = bc.M
        return periodic_data(P)
    raise DimensionMismatch(f"unsupported boundary data {bc!r}")


# ---------------------------------------------------------------------------
# monodromy


@dataclass(frozen=True, eq=False)
class Monodromy:
    """Sampled fundamental solution ``gamma(t_k)`` with ``gamma(0) = I``.

    ``defect`` is ``max_k ||gamma^T J gamma - J|| / max(1, ||gamma||^2)``.
    """

    times: np.ndarray
    gammas: np.ndarray
    defect: float

    @property
    def final(self) -> np.ndarray:
        return self.gammas[-1]


def symplectic_defect(gamma) -> float:
    """Relative defect ``||g^T J g - J||_max / max(1, ||g||_2^2)`` (max over a stack)."""
    g = np.asarray(gamma, dtype=float)
    if g.ndim == 2:
        g = g[None]
    J = symplectic_form(g.shape[-1] // 2)
    err = np.max(np.abs(np.swapaxes(g, -1, -2) @ J @ g - J), axis=(-2, -1))
    scale = np.maximum(1.0, np.linalg.norm(g, 2, axis=(-2, -1)) ** 2)
    return float(np.max(err / scale))


def _as_coefficient(coef) -> Coefficient:
    if isinstance(coef, Coefficient):
        return coef
    if isinstance(coef, MatrixFunction):
        return Coefficient.of(coef)
    A = np.asarray(coef, dtype=float)
    return Coefficient.of(MatrixFunction.constant(A))


def _piece_steps(knots: np.ndarray, steps: int) -> np.ndarray:
    lengths = np.diff(knots)
    return np.maximum(4, np.ceil(steps * lengths).astype(int))


def transition(coef, steps: int = DEFAULT_STEPS, *, path: bool = False):
    """Fundamental solution of ``z' = J S(t) z``.

    Piecewise-constant ``S`` uses exact exponentials per piece; otherwise
    classical RK4 runs piece by piece so coefficient kinks fall on step
    boundaries.  Returns ``(times, gammas)`` when ``path`` else ``gamma(1)``.
    """
    S = _as_coefficient(coef)
    J = symplectic_form(S.dim // 2)
    times = [0.0]
    gammas = [np.eye(S.dim)]
    G = np.eye(S.dim)
    for k, m in enumerate(_piece_steps(S.knots, steps)):
        a, b = S.knots[k], S.knots[k + 1]
        if S.piecewise_constant:
            A = J @ S.on_piece(k, 0.5 * (a + b))[0]
            E = expm(A * (b - a) / m)
            for j in range(m):
                G = E @ G
                if path:
                    times.append(a + (j + 1) * (b - a) / m)
                    gammas.append(G)
        else:
            h = (b - a) / m
            tt = a + h * np.arange(2 * m + 1) / 2.0
            C = J @ S.on_piece(k, tt)
            Phi = integrate_linear(lambda t, C=C, a=a, h=h: C[int(round((t - a) / h * 2))], m, t0=a, t1=b,
                                   initial=G, return_path=path)
            if path:
                times.extend(a + h * np.arange(1, m + 1))
                gammas.extend(Phi[1:])
                G = Phi[-1]
            else:
                G = Phi
    if path:
        return np.array(times), np.array(gammas)
    return G


def monodromy(coef, resolution: int = DEFAULT_STEPS) -> Monodromy:
    """Fundamental solution of ``z' = J S(t) z`` with an accuracy check.

    ``coef`` is a symmetric ``S`` (MatrixFunction, Coefficient or constant
    matrix).  The resolution is doubled until ``gamma(1)`` is stable to 1e-9
    relative and the symplectic defect is at most 1e-8.

    Raises:
        ResolutionExceeded: if that does not happen below ``2**16`` steps.
    """
    S = _as_coefficient(coef)
    steps = max(16, int(resolution))
    t, g = transition(S, steps, path=True)
    if S.piecewise_constant:
        d = symplectic_defect(g)
        if d > DEFECT_TOL:
            raise ResolutionExceeded(f"symplectic defect {d:.3g} for an exact exponential product")
        return Monodromy(t, g, d)
    while True:
        t2, g2 = transition(S, 2 * steps, path=True)
        change = np.max(np.abs(g2[-1] - g[-1])) / max(1.0, np.max(np.abs(g2[-1])))
        d = symplectic_defect(g)
        if change <= STABILITY_TOL and d <= DEFECT_TOL:
            return Monodromy(t, g, d)
        steps *= 2
        if 2 * steps > MAX_STEPS:
            raise ResolutionExceeded(f"monodromy not stable at {steps} steps (change {change:.3g}, defect {d:.3g})")
        t, g = t2, g2


# ---------------------------------------------------------------------------
# matching


@dataclass(frozen=True, eq=False)
class MatchingMatrix:
    matrix: np.ndarray
    singular_values: np.ndarray
    nullity: int
    kernel: np.ndarray | None = None


def matching_matrix(m, bc: BoundaryData, *, tol: float = RANK_TOL) -> MatchingMatrix:
    """``W gamma(1) V`` (angle type) or ``gamma(1) - P`` (periodic type).

    ``m`` is a Monodromy or a ``gamma(1)`` matrix.  ``kernel`` holds initial
    conditions ``z(0)`` spanning the solution space (columns).
    """
    g = m.final if isinstance(m, Monodromy) else np.asarray(m, dtype=float)
    if g.shape != (2 * bc.n, 2 * bc.n):
        raise DimensionMismatch(f"monodromy of shape {g.shape} does not match n={bc.n}")
    if bc.angle_type:
        Mx = bc.W @ g @ bc.V
        lift = bc.V
    else:
        Mx = g - bc.P
        lift = np.eye(2 * bc.n)
    nu, sv = rank_deficiency(Mx, tol)
    _, _, Vh = np.linalg.svd(Mx)
    kernel = lift @ Vh[Mx.shape[1] - nu:].T if nu else np.zeros((lift.shape[0], 0))
    return MatchingMatrix(Mx, sv, nu, kernel)


# ---------------------------------------------------------------------------
# batched frame propagation over a parameter


class Family:
    """One-parameter family ``z' = J (S0(t) + p D(t)) z`` with fixed ends."""

    def __init__(self, S0: Coefficient, D: Coefficient | None, boundary: BoundaryData):
        self.S0 = S0
        self.D = D
        self.boundary = boundary
        self.dim = S0.dim
        self.J = symplectic_form(self.dim // 2)
        funcs = S0.funcs + (D.funcs if D is not None else [])
        self.knots = np.unique(np.concatenate([F.knots for F in funcs]))
        self.piecewise_constant = S0.piecewise_constant and (D is None or D.piecewise_constant)
        self._annihilator = boundary.annihilator()
        self._form = boundary.form()
        self.steps = max(DEFAULT_STEPS, 8 * (self.knots.size - 1))
        self._resolved = self.piecewise_constant
        self._norms = None

    # coefficient samples -------------------------------------------------
    def _sample(self, C: Coefficient, t: np.ndarray) -> np.ndarray:
        out = np.empty((t.size, self.dim, self.dim))
        k = np.clip(np.searchsorted(C.knots, t, side="right") - 1, 0, C.pieces - 1)
        for piece in np.unique(k):
            sel = k == piece
            out[sel] = C.on_piece(int(piece), t[sel])
        return out

    def _sample_in(self, C: Coefficient, t: np.ndarray, a: float, b: float) -> np.ndarray:
        # evaluate on the family piece [a, b], using the one-sided limits at its ends
        k = int(np.clip(np.searchsorted(C.knots, 0.5 * (a + b), side="right") - 1, 0, C.pieces - 1))
        return C.on_piece(k, t)

    def norms(self) -> tuple[float, float]:
        if self._norms is None:
            n0 = self.S0.sup_norm()
            n1 = self.D.sup_norm() if self.D is not None else 0.0
            self._norms = (n0, n1)
        return self._norms

    # propagation ---------------------------------------------------------
    def frames(self, params, steps: int | None = None):
        """Orthonormal end frames ``(static, moving)`` for every parameter."""
        p = np.atleast_1d(np.asarray(params, dtype=float))
        H0, G0 = self.boundary.initial_frame()
        G = np.broadcast_to(G0, (p.size,) + G0.shape).copy()
        H = None if H0 is None else np.broadcast_to(H0, (p.size,) + H0.shape).copy()
        steps = steps or self.steps
        pw = p[:, None, None]
        for k in range(self.knots.size - 1):
            a, b = self.knots[k], self.knots[k + 1]
            if self.piecewise_constant:
                mid = np.array([0.5 * (a + b)])
                S = self._sample_in(self.S0, mid, a, b)[0]
                A = self.J @ (S + (pw * self._sample_in(self.D, mid, a, b)[0] if self.D is not None else 0.0))
                A = A * (b - a)
                rho = float(np.max(np.abs(np.linalg.eigvals(A).real), initial=0.0))
                m = max(1, math.ceil(rho / GROWTH_PER_SEGMENT))
                E = expm(A / m)
                for _ in range(m):
                    G = E @ G
                    H, G = _reorthonormalize(H, G)
            else:
                H, G = self._rk4_piece(H, G, pw, a, b, steps)
        return H, G

    def _rk4_piece(self, H, G, pw, a, b, steps):
        m = max(4, math.ceil(steps * (b - a)))
        h = (b - a) / m
        tt = a + h * np.arange(2 * m + 1) / 2.0
        S = self.J @ self._sample_in(self.S0, tt, a, b)
        Dm = self.J @ self._sample_in(self.D, tt, a, b) if self.D is not None else None
        n0, n1 = self.norms()
        bound = n0 + float(np.max(np.abs(pw), initial=0.0)) * n1
        every = max(1, int(GROWTH_PER_SEGMENT / max(bound * h, 1e-300)))
        P, d, r = G.shape
        scale = pw[:, 0, 0][None, :, None]  # (1, P, 1)

        def apply(i, X):
            # (S + p D) X for every parameter at once: two plain GEMMs on (d, P*r)
            flat = X.reshape(d, P * r)
            out = (S[i] @ flat).reshape(d, P, r)
            if Dm is not None:
                out += scale * (Dm[i] @ flat).reshape(d, P, r)
            return out

        X = np.ascontiguousarray(G.transpose(1, 0, 2))
        for j in range(m):
            l, c, rr = 2 * j, 2 * j + 1, 2 * j + 2
            k1 = apply(l, X)
            k2 = apply(c, X + 0.5 * h * k1)
            k3 = apply(c, X + 0.5 * h * k2)
            k4 = apply(rr, X + h * k3)
            X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if (j + 1) % every == 0 or j == m - 1:
                H, G = _reorthonormalize(H, X.transpose(1, 0, 2))
                X = np.ascontiguousarray(G.transpose(1, 0, 2))
        return H, G

    def _stack(self, H, G):
        return G if H is None else np.concatenate([H, G], axis=-2)

    def singular_values(self, params, steps: int | None = None) -> np.ndarray:
        """Matching singular values, shape ``(len(params), m)``, descending."""
        self.resolve()
        H, G = self.frames(params, steps)
        return np.linalg.svd(self._annihilator @ self._stack(H, G), compute_uv=False)

    def scan(self, params) -> tuple[np.ndarray, np.ndarray]:
        """Matching singular values and the eigenvalues of the relative unitary.

        The end frame and the terminal condition are both Lagrangian; in a
        unitary frame ``U = X + iY`` each is represented by the symmetric
        unitary ``W = U U^T``, and ``conj(W_end) W(p)`` has eigenvalue 1 with
        multiplicity equal to the nullity.  Along a positive path its
        eigenvalues all turn the same way, which makes crossings countable
        by winding.
        """
        self.resolve()
        H, G = self.frames(params)
        F = self._stack(H, G)
        sv = np.linalg.svd(self._annihilator @ F, compute_uv=False)
        W = _souriau(self._unitary(F))
        return sv, np.linalg.eigvals(np.conj(self._terminal_w()) @ W)

    def _unitary(self, F: np.ndarray) -> np.ndarray:
        # coordinates in which the skew form is the standard one: flip the sign of the
        # second half of the static block, then group first halves and second halves
        h = self.dim // 2
        if self.boundary.angle_type:
            return F[..., :h, :] + 1j * F[..., h:, :]
        d = self.dim
        X = np.concatenate([F[..., :h, :], F[..., d:d + h, :]], axis=-2)
        Y = np.concatenate([-F[..., h:d, :], F[..., d + h:, :]], axis=-2)
        return X + 1j * Y

    def _terminal_w(self) -> np.ndarray:
        A = self._annihilator
        _, _, Vt = np.linalg.svd(A)
        return _souriau(self._unitary(Vt[A.shape[0]:].T))

    def lagrangian_defect(self, params) -> float:
        H, G = self.frames(params)
        F = self._stack(H, G)
        return float(np.max(np.abs(np.swapaxes(F, -1, -2) @ self._form @ F)))

    def resolve(self, probe=None) -> int:
        """Pick the RK4 step count: double until end frames are stable to 1e-9."""
        if self._resolved:
            return self.steps
        probe = np.array([0.0, 1.0] if probe is None else probe, dtype=float)
        steps = self.steps
        while True:
            F1 = self._projector(probe, steps)
            F2 = self._projector(probe, 2 * steps)
            change = float(np.max(np.abs(F1 - F2)))
            if change <= STABILITY_TOL:
                break
            steps *= 2
            if 2 * steps > MAX_STEPS:
                raise ResolutionExceeded(f"frames not stable below {MAX_STEPS} steps (change {change:.3g})")
        self.steps = steps
        self._resolved = True
        return steps

    def _projector(self, params, steps):
        H, G = self.frames(params, steps)
        F = self._stack(H, G)
        return F @ np.swapaxes(F, -1, -2)

    # full monodromy ------------------------------------------------------
    def coefficient_at(self, p: float) -> Coefficient:
        if self.D is None or p == 0.0:
            return self.S0
        funcs = self.S0.funcs + self.D.funcs
        k0 = len(self.S0.funcs)
        S0b, Db = self.S0.build, self.D.build
        return Coefficient(funcs, lambda v: S0b(v[:k0]) + p * Db(v[k0:]), self.dim)

    def gamma(self, p: float) -> np.ndarray:
        return transition(self.coefficient_at(p), self.steps)


def _souriau(U: np.ndarray) -> np.ndarray:
    return U @ np.swapaxes(U, -1, -2)


def _reorthonormalize(H, G):
    if H is None:
        Q, _ = np.linalg.qr(G)
        return None, Q
    d = H.shape[-2]
    Q, _ = np.linalg.qr(np.concatenate([H, G], axis=-2))
    return Q[..., :d, :], Q[..., d:, :]


def family_of(p, direction: MatrixFunction | None = None) -> Family:
    """Family ``p.B + s * direction`` for a second- or first-order problem."""
    form = linear_form(p)
    if direction is None:
        D = None
    elif isinstance(p, SecondOrderProblem):
        D = embed_lower(direction)
    else:
        D = Coefficient.of(direction)
    return Family(form.S, D, form.boundary)


# ---------------------------------------------------------------------------
# nullity


@dataclass(frozen=True, eq=False)
class NullityResult:
    nu: int
    kernel: np.ndarray
    singular_values: np.ndarray
    defect: float

    def __iter__(self):
        yield self.nu
        yield self.kernel


def nullity(p, *, tol: float = RANK_TOL) -> NullityResult:
    """``dim ker`` of the boundary-value operator and initial data of a basis.

    The count comes from the scale-free frame matching matrix; kernel vectors
    are the matching right singular vectors of the raw matching matrix,
    returned as initial states ``z(0)`` (columns).

    Raises:
        ResolutionExceeded: propagated from the integrator.
        InternalError: if the count exceeds ``n`` (angle) or ``2n`` (periodic).
    """
    fam = family_of(p)
    sv = fam.singular_values([0.0])[0]
    nu = rank_deficiency(sv[:, None] * np.eye(sv.size), tol)[0] if sv.size else 0
    if nu > fam.boundary.max_nullity:
        raise InternalError(f"nullity {nu} exceeds the bound {fam.boundary.max_nullity}")
    g = fam.gamma(0.0)
    mm = matching_matrix(g, fam.boundary, tol=tol)
    _, _, Vh = np.linalg.svd(mm.matrix)
    lift = fam.boundary.V if fam.boundary.angle_type else np.eye(fam.dim)
    kernel = lift @ Vh[Vh.shape[0] - nu:].T if nu else np.zeros((fam.dim, 0))
    return NullityResult(int(nu), kernel, sv, symplectic_defect(g))


def boundary_residual(p, z0: np.ndarray) -> float:
    """Relative residual of both boundary conditions for the solution from ``z0``."""
    form = linear_form(p)
    g = transition(form.S)
    z1 = g @ z0
    bd = form.boundary
    scale = max(np.linalg.norm(z0), np.linalg.norm(z1))
    if bd.angle_type:
        # z0 in range V  <=>  projection residual vanishes
        Q, _ = np.linalg.qr(bd.V)
        r0 = np.linalg.norm(z0 - Q @ (Q.T @ z0))
        r1 = np.linalg.norm(bd.W @ z1)
    else:
        r0 = 0.0
        r1 = np.linalg.norm(z1 - bd.P @ z0)
    return float(max(r0, r1) / scale)
