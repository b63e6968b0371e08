"""Homotopy-Newton solver for asymptotically linear boundary value problems.

The nonlinear force ``F`` is reached from a linear start coefficient ``S``
along

    G(lam; t, x) = lam * S(t) x + (1 - lam) * F(t, x),    lam: 1 -> 0,

so the start problem is linear and nondegenerate and every intermediate
problem is pinched between the same bounds as ``F``.  ODEs are discretized
with compressed Hermite-Simpson collocation (fourth order) on the first-order
state and solved with a sparse damped Newton method; 2-D elliptic problems
use sine-Galerkin projection with Gauss-Legendre quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from ..errors import (
    ConfigError,
    ContinuationStalled,
    NewtonDiverged,
    NoConvergence,
    SingularJacobian,
)
from ..numerics import symplectic_form
from ..problems import (
    EllipticProblem,
    FirstOrderProblem,
    Interval,
    MatrixFunction,
    Rectangle,
    ScalarField,
    SecondOrderProblem,
    SturmLiouville,
)
from ..spectral import boundary_of
from .models import NonlinearProblem, state_dim

DEFAULT_GRID = 128
DEFAULT_TOL = 1e-8
CONSISTENCY_TOL = 1e-6
# sine coefficients of boundary-incompatible data decay algebraically in 2D
GALERKIN_CONSISTENCY_TOL = 1e-4
HOMOTOPY_STEPS = 10
MIN_HOMOTOPY_STEP = 1e-6
MULTISTART = 8
NEWTON_ITERATIONS = 40
MAX_GRID = 4096
MAX_MODES = 64
DISTINCT_TOL = 1e-5


@dataclass
class Solution:
    """Accepted discrete solution.

    ``grid`` holds the nodes (times, or per-axis coordinates for rectangles)
    and ``values`` the state ``x`` there; ``derivative`` is ``Lambda x'`` for
    second-order problems.  ``residual`` is the discrete L2 norm of the
    equation residual on the finest level and ``residuals`` lists it for
    every level used.
    """

    grid: object
    values: np.ndarray
    residual: float
    boundary_residual: float
    richardson_error: float
    levels: tuple
    residuals: tuple
    method: str
    derivative: np.ndarray | None = None
    homotopy: dict = field(default_factory=dict)
    certificate: object = None
    others: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        grid = [np.asarray(g).tolist() for g in self.grid] if isinstance(self.grid, tuple) else np.asarray(self.grid).tolist()
        out = {
            "method": self.method,
            "grid": grid,
            "values": np.asarray(self.values).tolist(),
            "residual": self.residual,
            "boundary_residual": self.boundary_residual,
            "richardson_error": self.richardson_error,
            "levels": list(self.levels),
            "residuals": list(self.residuals),
            "homotopy": self.homotopy,
            "distinct_solutions": 1 + len(self.others),
            "others": [np.asarray(o).tolist() for o in self.others],
            "diagnostics": self.diagnostics,
        }
        if self.certificate is not None:
            out["certificate"] = {"theorem": self.certificate.theorem, "verdict": self.certificate.verdict}
        return out


class _NewtonFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# ODE right-hand side


class _OdeSystem:
    """``z' = f(t, z; lam)`` for the first-order form of the problem."""

    def __init__(self, p: NonlinearProblem, start: MatrixFunction, shift: float):
        tp = p.template
        self.p = p
        if isinstance(tp, SecondOrderProblem):
            self.second = True
            self.n = tp.n
            self.d = 2 * tp.n
            self.Lambda = tp.Lambda
            self.boundary = boundary_of(tp.bc, tp.n, tp.Lambda)
            self.x_slice = slice(tp.n, 2 * tp.n)
        elif isinstance(tp, FirstOrderProblem):
            self.second = False
            self.n = 2 * tp.n
            self.d = 2 * tp.n
            self.Lambda = None
            self.boundary = boundary_of(tp.bc, tp.n)
            self.J = symplectic_form(tp.n)
            self.x_slice = slice(0, self.d)
        else:
            raise ConfigError("ODE collocation needs a second- or first-order template")
        self.start = start
        self.shift = shift
        self._cache = {}

    def knots(self) -> np.ndarray:
        k = [self.start.knots]
        if self.Lambda is not None:
            k.append(self.Lambda.knots)
        return np.unique(np.concatenate(k))

    def _static(self, t):
        key = (t.size, float(t[0]), float(t[-1]), float(np.sum(t)))
        hit = self._cache.get(key)
        if hit is None:
            S = self.start(t) - self.shift * np.eye(self.n)
            Linv = np.linalg.inv(self.Lambda(t)) if self.second else None
            hit = self._cache[key] = (S, Linv)
        return hit

    def __call__(self, t, Z, lam):
        """Return ``f`` of shape ``(m, d)`` and its Jacobian ``(m, d, d)``."""
        S, Linv = self._static(t)
        x = Z[:, self.x_slice]
        G = lam * np.einsum("mij,mj->mi", S, x)
        dG = lam * S
        if lam < 1.0:
            G = G + (1.0 - lam) * self.p.F(t, x)
            dG = dG + (1.0 - lam) * self.p.dF(t, x)
        m, d, n = Z.shape[0], self.d, self.n
        if self.second:
            y = Z[:, :n]
            f = np.concatenate([-G, np.einsum("mij,mj->mi", Linv, y)], axis=1)
            A = np.zeros((m, d, d))
            A[:, :n, n:] = -dG
            A[:, n:, :n] = Linv
            return f, A
        return G @ self.J.T, np.einsum("ij,mjk->mik", self.J, dG)

    def boundary_rows(self):
        """End rows: ``(left, right)`` acting on ``z(0)`` and ``z(1)`` separately
        for angle conditions, ``(-P, I)`` acting jointly for periodic ones."""
        bd = self.boundary
        if bd.angle_type:
            Q, _ = np.linalg.qr(bd.V, mode="complete")
            return Q[:, bd.V.shape[1]:].T, bd.W
        return -bd.P, np.eye(self.d)


class _HermiteSimpson:
    """Compressed Hermite-Simpson collocation on the node set ``t``."""

    def __init__(self, system: _OdeSystem, t: np.ndarray):
        self.sys = system
        self.t = t
        self.h = np.diff(t)
        self.tm = 0.5 * (t[:-1] + t[1:])
        self.L0, self.L1 = system.boundary_rows()
        self.angle = system.boundary.angle_type
        self.size = t.size * system.d

    def _bc(self, Z):
        if self.angle:
            return np.concatenate([self.L0 @ Z[0], self.L1 @ Z[-1]])
        return self.L0 @ Z[0] + self.L1 @ Z[-1]

    def _pieces(self, Z, lam):
        h = self.h[:, None]
        f, A = self.sys(self.t, Z, lam)
        zm = 0.5 * (Z[:-1] + Z[1:]) + h / 8.0 * (f[:-1] - f[1:])
        fm, Am = self.sys(self.tm, zm, lam)
        R = Z[1:] - Z[:-1] - h / 6.0 * (f[:-1] + 4.0 * fm + f[1:])
        return f, A, zm, fm, Am, R

    def residual(self, Z, lam):
        """Weighted residual vector: interval defects scaled by ``h^{-1/2}``, then end rows."""
        R = self._pieces(Z, lam)[-1]
        bc = self._bc(Z)
        return (R / np.sqrt(self.h)[:, None]).ravel(), bc

    def norms(self, Z, lam) -> tuple[float, float]:
        r, bc = self.residual(Z, lam)
        return float(np.linalg.norm(r)), float(np.linalg.norm(bc))

    def system(self, Z, lam):
        """Residual vector and sparse Jacobian in the row order used by Newton."""
        d = self.sys.d
        N = self.h.size
        f, A, zm, fm, Am, R = self._pieces(Z, lam)
        h = self.h[:, None, None]
        I = np.eye(d)
        dzk = 0.5 * I + h / 8.0 * A[:-1]
        dzk1 = 0.5 * I - h / 8.0 * A[1:]
        Dk = -I - h / 6.0 * (A[:-1] + 4.0 * Am @ dzk)
        Dk1 = I - h / 6.0 * (A[1:] + 4.0 * Am @ dzk1)
        w = 1.0 / np.sqrt(self.h)
        Dk *= w[:, None, None]
        Dk1 *= w[:, None, None]
        Rw = R * w[:, None]
        bc = self._bc(Z)
        # rows: left end conditions, interval defects, right end conditions
        # (periodic type: interval defects, then the joint end conditions)
        top = self.L0.shape[0] if self.angle else 0
        rows_i = top + np.arange(N)[:, None, None] * d + np.arange(d)[None, :, None]
        cols_k = np.arange(N)[:, None, None] * d + np.arange(d)[None, None, :]
        rr = [np.broadcast_to(rows_i, Dk.shape).ravel()] * 2
        cc = [np.broadcast_to(cols_k, Dk.shape).ravel(), np.broadcast_to(cols_k + d, Dk1.shape).ravel()]
        vv = [Dk.ravel(), Dk1.ravel()]
        end = top + N * d
        if self.angle:
            for a, row in enumerate(self.L0):
                rr.append(np.full(d, a))
                cc.append(np.arange(d))
                vv.append(row)
            for a, row in enumerate(self.L1):
                rr.append(np.full(d, end + a))
                cc.append(N * d + np.arange(d))
                vv.append(row)
            k0 = self.L0.shape[0]
            rhs = np.concatenate([bc[:k0], Rw.ravel(), bc[k0:]])
        else:
            for a in range(d):
                rr.append(np.full(2 * d, end + a))
                cc.append(np.concatenate([np.arange(d), N * d + np.arange(d)]))
                vv.append(np.concatenate([self.L0[a], self.L1[a]]))
            rhs = np.concatenate([Rw.ravel(), bc])
        Jm = scipy.sparse.csc_matrix(
            (np.concatenate(vv), (np.concatenate(rr), np.concatenate(cc))), shape=(self.size, self.size)
        )
        return rhs, Jm

    def midpoints(self, Z, lam):
        """State at the interval midpoints (fourth-order accurate)."""
        return self._pieces(Z, lam)[2]


def _merit(disc, Z, lam) -> float:
    r, bc = disc.residual(Z, lam)
    return math.sqrt(float(r @ r + bc @ bc))


def _newton(disc, Z0, lam, tol, max_iter=NEWTON_ITERATIONS):
    """Damped Newton on the collocation equations.

    Returns ``(Z, iterations)``.  Raises ``_NewtonFailure`` when the merit
    does not decrease and :class:`SingularJacobian` on a singular factor.
    """
    Z = np.array(Z0, dtype=float)
    shape = Z.shape
    phi = _merit(disc, Z, lam)
    for it in range(1, max_iter + 1):
        if not math.isfinite(phi):
            raise _NewtonFailure("non-finite residual")
        if phi <= 0.1 * tol:
            return Z, it - 1
        rhs, Jm = disc.system(Z, lam)
        try:
            lu = scipy.sparse.linalg.splu(Jm)
            step = -lu.solve(rhs)
        except RuntimeError as exc:
            raise SingularJacobian(f"collocation Jacobian is singular at lam={lam:.6g}", lam) from exc
        if not np.all(np.isfinite(step)):
            raise SingularJacobian(f"collocation Jacobian is singular at lam={lam:.6g}", lam)
        step = step.reshape(shape)
        alpha = 1.0
        while True:
            trial = Z + alpha * step
            phi_t = _merit(disc, trial, lam)
            if math.isfinite(phi_t) and phi_t <= (1.0 - 0.5 * alpha) * phi:
                break
            alpha *= 0.5
            if alpha < 2.0**-12:
                # no decrease at all: converged to rounding level or failed
                if phi <= tol:
                    return Z, it
                raise _NewtonFailure(f"line search failed at lam={lam:.6g} (merit {phi:.3g})")
        small = np.max(np.abs(alpha * step)) <= 1e-14 * (1.0 + np.max(np.abs(Z)))
        Z, phi = trial, phi_t
        if small and phi <= tol:
            return Z, it
    if phi <= tol:
        return Z, max_iter
    raise _NewtonFailure(f"no convergence in {max_iter} iterations at lam={lam:.6g} (merit {phi:.3g})")


def _continue(solve_at, Z0, steps: int):
    """Natural-parameter continuation ``lam: 1 -> 0`` with a secant predictor.

    ``solve_at(Z, lam)`` runs Newton.  Returns the final state and a record.
    """
    try:
        Z, its = solve_at(Z0, 1.0)
    except _NewtonFailure as exc:
        raise NewtonDiverged(f"linear start problem did not converge: {exc}") from exc
    lam = 1.0
    dl = 1.0 / max(1, steps)
    prev = None
    accepted = rejected = 0
    newton_total = its
    last_error = None
    while lam > 0.0:
        target = max(0.0, lam - dl)
        if prev is None:
            guess = Z
        else:
            Zp, lp = prev
            guess = Z + (Z - Zp) * ((target - lam) / (lam - lp))
        try:
            Znew, its = solve_at(guess, target)
        except (_NewtonFailure, SingularJacobian) as exc:
            rejected += 1
            last_error = exc
            dl *= 0.5
            if dl < MIN_HOMOTOPY_STEP:
                if isinstance(exc, SingularJacobian):
                    raise SingularJacobian(f"singular Jacobian along the homotopy near lam={target:.6g}", target) from exc
                raise ContinuationStalled(f"homotopy step underflow at lam={lam:.6g}: {exc}") from exc
            continue
        prev = (Z, lam)
        Z, lam = Znew, target
        accepted += 1
        newton_total += its
        if its <= 4:
            dl = min(2.0 * dl, 0.5)
    record = {"accepted_steps": accepted, "rejected_steps": rejected, "newton_iterations": newton_total}
    if last_error is not None:
        record["last_rejection"] = str(last_error)
    return Z, record


# ---------------------------------------------------------------------------
# start coefficient


def _start_shift(p: NonlinearProblem, start, shift):
    """Shift ``epsilon`` making the start problem nondegenerate.

    Zero when the nullity of ``start`` vanishes; otherwise the largest of
    ``1e-3 (1 + |start|), /2, /4, ...`` keeping the index unchanged with
    zero nullity (so no crossing is stepped over).
    """
    if shift is not None:
        return float(shift), None
    from ..index import index_sweep

    tp = p.template
    if isinstance(tp, EllipticProblem):
        from ..elliptic import elliptic_index

        base = elliptic_index(tp.with_b(start), engine="galerkin")
        if base.nu == 0:
            return 0.0, (base.i, base.nu)
        eps = 1e-3 * (1.0 + start.sup_abs(tp.lengths))
        for _ in range(12):
            r = elliptic_index(tp.with_b(start.shift(-eps)), engine="galerkin")
            if (r.i, r.nu) == (base.i, 0):
                return eps, (base.i, base.nu)
            eps *= 0.5
        raise SingularJacobian("could not shift the start coefficient off its kernel", 1.0)
    from ..index import index_first_order

    def idx(B):
        q = tp.with_B(B)
        return tuple(index_first_order(q) if isinstance(tp, FirstOrderProblem) else index_sweep(q))

    base = idx(start)
    if base[1] == 0:
        return 0.0, base
    eps = 1e-3 * (1.0 + start.sup_norm())
    for _ in range(12):
        if idx(start.shift(-eps)) == (base[0], 0):
            return eps, base
        eps *= 0.5
    raise SingularJacobian("could not shift the start coefficient off its kernel", 1.0)


def _start_coefficient(p: NonlinearProblem, start, certificate):
    from .models import constant_coefficient

    if start is None and certificate is not None:
        start = certificate.data.get("B1")
    if start is None:
        raise ConfigError("solve_bvp needs a start coefficient (start=...) or a certificate carrying B1")
    return constant_coefficient(p.template, start)


# ---------------------------------------------------------------------------
# public solver


def _initial_grid(system: _OdeSystem, N: int) -> np.ndarray:
    return np.union1d(np.linspace(0.0, 1.0, N + 1), system.knots())


def _bisect(t: np.ndarray) -> np.ndarray:
    out = np.empty(2 * t.size - 1)
    out[::2] = t
    out[1::2] = 0.5 * (t[:-1] + t[1:])
    return out


def _refine_state(disc: _HermiteSimpson, Z, lam) -> np.ndarray:
    zm = disc.midpoints(Z, lam)
    out = np.empty((2 * Z.shape[0] - 1, Z.shape[1]))
    out[::2] = Z
    out[1::2] = zm
    return out


def l2_norm(t: np.ndarray, X: np.ndarray) -> float:
    """Trapezoidal discrete L2 norm of nodal values ``X`` on nodes ``t``."""
    X = np.asarray(X, dtype=float).reshape(t.size, -1)
    sq = np.sum(X * X, axis=1)
    return math.sqrt(float(np.trapezoid(sq, t)))


def _smooth_random(rng, t, n, amplitude, modes=4):
    out = np.zeros((t.size, n))
    for j in range(1, modes + 1):
        c = rng.standard_normal(n) / j
        phase = rng.uniform(0, 2 * math.pi, n)
        out += c * np.sin(j * math.pi * t[:, None] + phase)
    return amplitude * out


def _derivative(t, X):
    return np.gradient(X, t, axis=0, edge_order=2)


def solve_bvp(
    p: NonlinearProblem,
    *,
    start=None,
    certificate=None,
    waive: bool = False,
    grid: int = DEFAULT_GRID,
    tol: float = DEFAULT_TOL,
    homotopy_steps: int = HOMOTOPY_STEPS,
    multistart: int = MULTISTART,
    amplitude: float = 5.0,
    seed: int = 0,
    shift: float | None = None,
    consistency: float | None = None,
) -> Solution:
    """Solve the nonlinear problem by homotopy from the linear start problem.

    Args:
        p: the nonlinear problem.
        start: start coefficient ``B1`` (defaults to the certificate's).
        certificate: a :class:`CertificateReport`; a refuted certificate is
            rejected unless ``waive`` is set.
        waive: run without a certificate.
        grid: cells of the coarse grid (sine modes per axis for rectangles).
        tol: residual tolerance required on two successive grids.
        homotopy_steps: initial number of continuation steps.
        multistart: random Newton starts searched for further solutions.
        amplitude: scale of the random starts.
        seed: seed of the random starts.
        shift: override of the start shift ``epsilon``.
        consistency: bound on the Richardson error between the two grids
            (default 1e-6; 1e-4 for the L2 change between Galerkin levels
            on rectangles).

    Raises:
        ContinuationStalled, NewtonDiverged, SingularJacobian, NoConvergence
    """
    if certificate is None and not waive:
        raise ConfigError("solve_bvp needs a certificate or waive=True")
    if certificate is not None and certificate.verdict == "refuted" and not waive:
        raise ConfigError("the certificate is refuted; pass waive=True to solve anyway")
    p.validate()
    B1 = _start_coefficient(p, start, certificate)
    eps, start_index = _start_shift(p, B1, shift)
    homotopy = {"start_shift": eps, "initial_steps": homotopy_steps}
    if start_index is not None:
        homotopy["start_index"] = list(start_index)
    tp = p.template
    if isinstance(tp, EllipticProblem):
        if isinstance(tp.geometry, Interval):
            consistency = CONSISTENCY_TOL if consistency is None else consistency
            sol = _solve_interval(p, B1, eps, grid, tol, homotopy_steps, multistart, amplitude, seed, consistency, homotopy)
        else:
            if consistency is None:
                consistency = GALERKIN_CONSISTENCY_TOL
            sol = _solve_rectangle(p, B1, eps, grid, tol, homotopy_steps, multistart, amplitude, seed, consistency, homotopy)
    else:
        consistency = CONSISTENCY_TOL if consistency is None else consistency
        sol = _solve_ode(p, B1, eps, grid, tol, homotopy_steps, multistart, amplitude, seed, consistency, homotopy)
    sol.certificate = certificate
    return sol


def _solve_ode(p, B1, eps, grid, tol, steps, multistart, amplitude, seed, consistency, homotopy) -> Solution:
    system = _OdeSystem(p, B1, eps)
    t = _initial_grid(system, grid)
    disc = _HermiteSimpson(system, t)
    d = system.d
    Z, record = _continue(lambda Z0, lam: _newton(disc, Z0, lam, tol), np.zeros((t.size, d)), steps)
    homotopy.update(record)
    levels = [t.size - 1]
    residuals = [disc.norms(Z, 0.0)]
    history = [(t, Z)]
    richardson = math.inf
    while True:
        fine_t = _bisect(t)
        fine = _HermiteSimpson(system, fine_t)
        try:
            Zf, _ = _newton(fine, _refine_state(disc, Z, 0.0), 0.0, tol)
        except _NewtonFailure as exc:
            raise NewtonDiverged(f"refined grid did not converge: {exc}") from exc
        levels.append(fine_t.size - 1)
        residuals.append(fine.norms(Zf, 0.0))
        xs = system.x_slice
        richardson = float(np.max(np.abs(Zf[::2, xs] - Z[:, xs]))) / 15.0
        history.append((fine_t, Zf))
        if richardson <= consistency and max(residuals[-2]) <= tol and max(residuals[-1]) <= tol:
            break
        if fine_t.size - 1 >= MAX_GRID:
            raise NoConvergence(f"grid refinement did not settle (Richardson error {richardson:.3g})")
        t, Z, disc = fine_t, Zf, fine
    t, Z = history[-1]
    xs = system.x_slice
    others = []
    if multistart:
        others = _multistart_ode(system, history[-2][0], Z[::2], tol, multistart, amplitude, seed)
    res, bres = residuals[-1]
    return Solution(
        grid=t,
        values=Z[:, xs].copy(),
        derivative=Z[:, : system.n].copy() if system.second else None,
        residual=res,
        boundary_residual=bres,
        richardson_error=richardson,
        levels=tuple(levels),
        residuals=tuple(max(r) for r in residuals),
        method="hermite-simpson",
        homotopy=homotopy,
        others=others,
        diagnostics={"multistart": multistart, "seed": seed},
    )


def _multistart_ode(system, t, Zref, tol, count, amplitude, seed):
    """Newton from random smooth starts on the coarse grid; distinct refined solutions."""
    rng = np.random.default_rng(seed)
    disc = _HermiteSimpson(system, t)
    found = [Zref]
    xs = system.x_slice
    others = []
    for _ in range(count):
        X = _smooth_random(rng, t, system.n, amplitude)
        Z0 = np.zeros((t.size, system.d))
        Z0[:, xs] = X
        if system.second:
            Z0[:, : system.n] = np.einsum("mij,mj->mi", system.Lambda(t), _derivative(t, X))
        try:
            Z, _ = _newton(disc, Z0, 0.0, tol)
        except (_NewtonFailure, SingularJacobian):
            continue
        if all(
            l2_norm(t, Z[:, xs] - W[:, xs]) > DISTINCT_TOL * (1.0 + l2_norm(t, W[:, xs])) for W in found
        ):
            found.append(Z)
            fine_t = _bisect(t)
            fine = _HermiteSimpson(system, fine_t)
            try:
                Zf, _ = _newton(fine, _refine_state(disc, Z, 0.0), 0.0, tol)
            except (_NewtonFailure, SingularJacobian):
                continue
            others.append(Zf[:, xs].copy())
    return others


# ---------------------------------------------------------------------------
# elliptic problems


def _interval_problem(p: NonlinearProblem) -> NonlinearProblem:
    """``u'' + f(x, u) = 0`` on ``(0, L)`` as ``w'' + L^2 f(L t, w) = 0`` on ``(0, 1)``."""
    L = p.template.geometry.length
    tp = SecondOrderProblem(
        MatrixFunction.constant([[1.0]]), MatrixFunction.constant([[0.0]]), SturmLiouville(0.0, math.pi)
    )

    def coords(t):
        return (L * np.asarray(t, dtype=float))[:, None]

    return NonlinearProblem(
        tp,
        force=lambda t, x: L * L * p.F(coords(t), x),
        jacobian=lambda t, x: L * L * p.dF(coords(t), x),
        name=p.name,
        params=p.params,
    )


def _solve_interval(p, b1, eps, grid, tol, steps, multistart, amplitude, seed, consistency, homotopy):
    from ..elliptic import interval_as_sturm_liouville

    q = _interval_problem(p)
    B1 = interval_as_sturm_liouville(p.template.with_b(b1)).B
    L = p.template.geometry.length
    sol = _solve_ode(q, B1, L * L * eps, grid, tol, steps, multistart, amplitude, seed, consistency, homotopy)
    sol.grid = L * sol.grid
    sol.derivative = sol.derivative / L
    sol.method = "hermite-simpson (interval)"
    return sol


class _SineGalerkin:
    """Galerkin equations of ``Delta u + G(lam; x, u) = 0`` in the sine basis."""

    def __init__(self, p: NonlinearProblem, b1: ScalarField, eps: float, K: int):
        from ..elliptic import _axis_rule, _sines

        self.p = p
        L1, L2 = p.template.lengths
        self.K = K
        x, self.wx = _axis_rule(L1, K)
        y, self.wy = _axis_rule(L2, K)
        self.Px = _sines(x, L1, K)
        self.Py = _sines(y, L2, K)
        X, Y = np.meshgrid(x, y, indexing="ij")
        self.shape = X.shape
        self.pts = np.column_stack([X.ravel(), Y.ravel()])
        self.W = self.wx[:, None] * self.wy[None, :]
        self.start = (b1(p.template.lengths, X, Y) - eps).ravel()
        j = np.arange(1, K + 1)
        self.lap = ((j[:, None] * math.pi / L1) ** 2 + (j[None, :] * math.pi / L2) ** 2)

    def values(self, C):
        return self.Px @ C @ self.Py.T

    def _G(self, C, lam):
        u = self.values(C).ravel()
        G = lam * self.start * u
        dG = lam * self.start
        if lam < 1.0:
            G = G + (1.0 - lam) * self.p.F(self.pts, u[:, None])[:, 0]
            dG = dG + (1.0 - lam) * self.p.dF(self.pts, u[:, None])[:, 0, 0]
        return G.reshape(self.shape), dG.reshape(self.shape)

    def residual(self, C, lam):
        G, _ = self._G(C, lam)
        return -self.lap * C + self.Px.T @ (self.W * G) @ self.Py

    def system(self, C, lam):
        G, dG = self._G(C, lam)
        R = -self.lap * C + self.Px.T @ (self.W * G) @ self.Py
        K = self.K
        T = np.einsum("ab,bk,bl->akl", self.W * dG, self.Py, self.Py, optimize=True)
        Jm = np.einsum("aj,am,akl->jkml", self.Px, self.Px, T, optimize=True).reshape(K * K, K * K)
        Jm -= np.diag(self.lap.ravel())
        return R.ravel(), Jm


def _newton_dense(disc: _SineGalerkin, C0, lam, tol, max_iter=NEWTON_ITERATIONS):
    C = np.array(C0, dtype=float)
    phi = float(np.linalg.norm(disc.residual(C, lam)))
    for it in range(1, max_iter + 1):
        if not math.isfinite(phi):
            raise _NewtonFailure("non-finite residual")
        if phi <= 0.1 * tol:
            return C, it - 1
        R, Jm = disc.system(C, lam)
        try:
            step = -np.linalg.solve(Jm, R).reshape(C.shape)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(f"Galerkin Jacobian is singular at lam={lam:.6g}", lam) from exc
        alpha = 1.0
        while True:
            trial = C + alpha * step
            phi_t = float(np.linalg.norm(disc.residual(trial, lam)))
            if math.isfinite(phi_t) and phi_t <= (1.0 - 0.5 * alpha) * phi:
                break
            alpha *= 0.5
            if alpha < 2.0**-12:
                if phi <= tol:
                    return C, it
                raise _NewtonFailure(f"line search failed at lam={lam:.6g} (residual {phi:.3g})")
        C, phi = trial, phi_t
    if phi <= tol:
        return C, max_iter
    raise _NewtonFailure(f"no convergence at lam={lam:.6g} (residual {phi:.3g})")


def _pad(C, K):
    out = np.zeros((K, K))
    k = C.shape[0]
    out[:k, :k] = C
    return out


def _solve_rectangle(p, b1, eps, grid, tol, steps, multistart, amplitude, seed, consistency, homotopy):
    from ..elliptic import initial_modes

    K = max(8, min(initial_modes(p.template.with_b(b1)) + 4, grid if grid <= MAX_MODES // 2 else 16))
    disc = _SineGalerkin(p, b1, eps, K)
    C, record = _continue(lambda C0, lam: _newton_dense(disc, C0, lam, tol), np.zeros((K, K)), steps)
    homotopy.update(record)
    levels = [K]
    residuals = [float(np.linalg.norm(disc.residual(C, 0.0)))]
    while True:
        K2 = 2 * K
        fine = _SineGalerkin(p, b1, eps, K2)
        try:
            Cf, _ = _newton_dense(fine, _pad(C, K2), 0.0, tol)
        except _NewtonFailure as exc:
            raise NewtonDiverged(f"refined Galerkin space did not converge: {exc}") from exc
        levels.append(K2)
        residuals.append(float(np.linalg.norm(fine.residual(Cf, 0.0))))
        # orthonormal basis: coefficient distance is the L2 distance
        richardson = float(np.linalg.norm(Cf - _pad(C, K2)))
        if richardson <= consistency and residuals[-2] <= tol and residuals[-1] <= tol:
            break
        if K2 * 2 > MAX_MODES:
            raise NoConvergence(f"Galerkin refinement did not settle (change {richardson:.3g})")
        C, K, disc = Cf, K2, fine
    others = []
    if multistart:
        rng = np.random.default_rng(seed)
        found = [Cf[:K, :K]]
        for _ in range(multistart):
            C0 = amplitude * rng.standard_normal((K, K)) / np.add.outer(np.arange(1, K + 1), np.arange(1, K + 1)) ** 2
            try:
                Cs, _ = _newton_dense(disc, C0, 0.0, tol)
            except (_NewtonFailure, SingularJacobian):
                continue
            if all(np.linalg.norm(Cs - W) > DISTINCT_TOL * (1.0 + np.linalg.norm(W)) for W in found):
                found.append(Cs)
                others.append(Cs)
    L1, L2 = p.template.lengths
    gx = np.linspace(0.0, L1, 33)
    gy = np.linspace(0.0, L2, 33)
    from ..elliptic import _sines

    vals = _sines(gx, L1, K2) @ Cf @ _sines(gy, L2, K2).T
    return Solution(
        grid=(gx, gy),
        values=vals,
        residual=residuals[-1],
        boundary_residual=0.0,
        richardson_error=richardson,
        levels=tuple(levels),
        residuals=tuple(residuals),
        method="sine-Galerkin",
        homotopy=homotopy,
        others=others,
        diagnostics={"coefficients": Cf.tolist(), "multistart": multistart, "seed": seed},
    )
