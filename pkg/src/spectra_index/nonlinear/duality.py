"""Convex duality: pointwise Fenchel conjugates and the dual action minimizer.

For ``(Lambda x')' + V'(t, x) = 0`` and an anchor ``B1`` with zero nullity
write the equation as ``L x + N'(x) = 0`` with ``L = A + B1`` and the
shifted potential ``N = V - B1 x.x / 2``.  When ``N`` is strongly convex the
substitution ``u = N'(x)`` turns solutions into critical points of

    psi(u) = 1/2 <L^{-1} u, u> + sum N*(u),

and the primal solution is recovered as ``x = -L^{-1} u``.  The operator is
discretized with lumped P1 finite elements (``L_h = M^{-1} Q``) on a uniform
mesh and ``psi`` is minimized by Barzilai-Borwein gradient steps with Armijo
backtracking in the mass inner product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from ..errors import ConfigError, DomainError, LineSearchFailed, NotStronglyConvex, PrimalResidualLarge
from ..problems import MatrixFunction, SecondOrderProblem, SturmLiouville
from .collocation import Solution
from .models import NonlinearProblem, constant_coefficient

CONJUGATE_TOL = 1e-13
CONJUGATE_ITERATIONS = 60
GRADIENT_TOL = 1e-7
PRIMAL_TOL = 1e-6
DEFAULT_DUAL_GRID = 256
MAX_DUAL_ITERATIONS = 20000
ARMIJO = 1e-4


@dataclass(frozen=True, eq=False)
class ConvexFunction:
    """Pointwise function ``N(t, y)`` with gradient and Hessian (vectorized)."""

    value: Callable
    grad: Callable
    hess: Callable

    @classmethod
    def quadratic(cls, a) -> "ConvexFunction":
        """``N(y) = y.A y / 2`` for a constant matrix (or scalar) ``a``."""
        A = np.atleast_2d(np.asarray(a, dtype=float))
        return cls(
            lambda t, y: 0.5 * np.einsum("mi,ij,mj->m", y, A, y),
            lambda t, y: y @ A.T,
            lambda t, y: np.broadcast_to(A, (y.shape[0],) + A.shape).copy(),
        )


@dataclass(frozen=True)
class ConjugatePoint:
    """``N*(u) = <u, y> - N(y)`` at the maximizer ``y``; ``gap`` bounds the error of ``value``."""

    u: np.ndarray
    value: float
    y: np.ndarray
    iterations: int
    gap: float


def _conjugate_batch(N: ConvexFunction, t, U, tol: float = CONJUGATE_TOL, max_iter: int = CONJUGATE_ITERATIONS):
    """Batched Newton for ``grad N(y) = u`` started at ``y = u``.

    Returns ``(values, Y, iterations, gaps)``.  The gap is the strong
    convexity bound ``|grad N(y) - u|^2 / (2 mu)``.

    Raises:
        NotStronglyConvex: when a Hessian is not positive definite.
    """
    U = np.asarray(U, dtype=float)
    Y = U.copy()
    m, n = U.shape
    iters = np.zeros(m, dtype=int)
    active = np.ones(m, dtype=bool)
    for it in range(max_iter):
        ia = np.flatnonzero(active)
        if ia.size == 0:
            break
        ta = t[ia] if np.ndim(t) else t
        g = N.grad(ta, Y[ia]) - U[ia]
        done = np.linalg.norm(g, axis=1) <= tol * np.maximum(1.0, np.linalg.norm(U[ia], axis=1))
        active[ia[done]] = False
        ia, g = ia[~done], g[~done]
        if ia.size == 0:
            break
        ta = t[ia] if np.ndim(t) else t
        H = N.hess(ta, Y[ia])
        mu = np.linalg.eigvalsh(H)[:, 0]
        if np.any(mu <= 0.0):
            bad = ia[mu <= 0.0][0]
            raise NotStronglyConvex(f"Hessian of the convex part is not positive definite at point {int(bad)}")
        step = -np.linalg.solve(H, g[..., None])[..., 0]
        # damped: maximize <u, y> - N(y); near the root the full step is taken
        Ya, Ua = Y[ia], U[ia]
        obj = np.einsum("mi,mi->m", Ua, Ya) - N.value(ta, Ya)
        slope = -np.einsum("mi,mi->m", g, step)
        alpha = np.ones(ia.size)
        Yt = Ya + step
        todo = np.flatnonzero(np.linalg.norm(g, axis=1) > 1e-6 * np.maximum(1.0, np.linalg.norm(Ua, axis=1)))
        for _ in range(40):
            if todo.size == 0:
                break
            tt = ta[todo] if np.ndim(ta) else ta
            obj_t = np.einsum("mi,mi->m", Ua[todo], Yt[todo]) - N.value(tt, Yt[todo])
            bad = obj_t < obj[todo] + ARMIJO * alpha[todo] * slope[todo]
            todo = todo[bad]
            alpha[todo] *= 0.5
            Yt[todo] = Ya[todo] + alpha[todo, None] * step[todo]
        Y[ia] = Yt
        iters[ia] += 1
    ta = t
    g = N.grad(ta, Y) - U
    mu = np.linalg.eigvalsh(N.hess(ta, Y))[:, 0]
    if np.any(mu <= 0.0):
        raise NotStronglyConvex("Hessian of the convex part is not positive definite")
    values = np.einsum("mi,mi->m", U, Y) - N.value(ta, Y)
    gaps = 0.5 * np.einsum("mi,mi->m", g, g) / mu
    return values, Y, iters, gaps


def fenchel_conjugate(N: ConvexFunction, u, t: float = 0.0) -> ConjugatePoint:
    """Conjugate ``N*(u) = sup_y <u, y> - N(t, y)`` by Newton from ``y = u``.

    Raises:
        NotStronglyConvex: if Newton meets a Hessian that is not positive definite.
    """
    U = np.atleast_1d(np.asarray(u, dtype=float))[None, :]
    values, Y, iters, gaps = _conjugate_batch(N, np.array([float(t)]), U)
    return ConjugatePoint(U[0], float(values[0]), Y[0], int(iters[0]), float(gaps[0]))


# ---------------------------------------------------------------------------
# discrete operator


@dataclass(frozen=True, eq=False)
class _Mesh:
    """Lumped P1 data on the retained nodes of a uniform mesh."""

    t: np.ndarray        # retained nodes
    mass: np.ndarray     # lumped mass per retained node
    K: scipy.sparse.csc_matrix  # stiffness with end terms (acts on stacked nodal vectors)
    n: int


def _mesh(tp: SecondOrderProblem, N: int) -> _Mesh:
    n = tp.n
    nodes = np.linspace(0.0, 1.0, N + 1)
    h = 1.0 / N
    Lbar = tp.Lambda.cell_means(nodes) / h
    mass = np.full(N + 1, h)
    mass[0] = mass[-1] = 0.5 * h
    diag = np.zeros((N + 1, n, n))
    diag[:-1] -= Lbar
    diag[1:] -= Lbar
    alpha, beta = tp.bc.alpha, tp.bc.beta
    first, last = 0, N
    if alpha == 0.0:
        first = 1
    else:
        diag[0] -= (math.cos(alpha) / math.sin(alpha)) * np.eye(n)
    if beta == math.pi:
        last = N - 1
    else:
        diag[N] += (math.cos(beta) / math.sin(beta)) * np.eye(n)
    keep = np.arange(first, last + 1)
    m = keep.size
    rows, cols, vals = [], [], []
    a, b = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    for k, node in enumerate(keep):
        rows.append(k * n + a.ravel())
        cols.append(k * n + b.ravel())
        vals.append(diag[node].ravel())
        if k + 1 < m:
            blk = Lbar[node]
            rows += [k * n + a.ravel(), (k + 1) * n + a.ravel()]
            cols += [(k + 1) * n + b.ravel(), k * n + b.ravel()]
            vals += [blk.ravel(), blk.T.ravel()]
    K = scipy.sparse.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m * n, m * n)
    )
    return _Mesh(nodes[keep], mass[keep], K, n)


def _shifted_potential(p: NonlinearProblem, B1: MatrixFunction) -> ConvexFunction:
    def value(t, y):
        return p.V(t, y) - 0.5 * np.einsum("mi,mij,mj->m", y, B1(t), y)

    def grad(t, y):
        return p.F(t, y) - np.einsum("mij,mj->mi", B1(t), y)

    def hess(t, y):
        return p.dF(t, y) - B1(t)

    return ConvexFunction(value, grad, hess)


@dataclass
class _DualLevel:
    x: np.ndarray
    u: np.ndarray
    t: np.ndarray
    mass: np.ndarray
    psi: list = field(default_factory=list)
    gradient_norm: float = math.inf
    iterations: int = 0
    primal_residual: float = math.inf
    fenchel_gap: float = math.inf


def _minimize(p, B1, N, u0, tol, primal_tol, max_iter) -> _DualLevel:
    tp = p.template
    mesh = _mesh(tp, N)
    n = tp.n
    t = mesh.t
    Mv = np.repeat(mesh.mass, n)
    Bn = B1(t)
    Bblk = scipy.sparse.block_diag(list(Bn), format="csc")
    Q = mesh.K + scipy.sparse.diags(Mv) @ Bblk
    lu = scipy.sparse.linalg.splu(Q.tocsc())
    conv = _shifted_potential(p, B1)

    def Linv(u):
        # L_h^{-1} u = Q^{-1} M u
        return lu.solve(Mv * u.ravel()).reshape(u.shape)

    def evaluate(u):
        w = Linv(u)
        vals, Y, _, _ = _conjugate_batch(conv, t, u)
        psi = 0.5 * float(np.sum(Mv * (w * u).ravel())) + float(mesh.mass @ vals)
        return psi, w + Y

    def mnorm(v):
        return math.sqrt(float(np.sum(Mv * (v * v).ravel())))

    def minner(a, b):
        return float(np.sum(Mv * (a * b).ravel()))

    u = np.zeros((t.size, n)) if u0 is None else np.array(u0, dtype=float)
    psi, g = evaluate(u)
    level = _DualLevel(x=None, u=u, t=t, mass=mesh.mass, psi=[psi])
    step = 1.0
    prev = None
    for it in range(max_iter):
        gn = mnorm(g)
        if gn <= tol:
            break
        if prev is not None:
            s, yv = u - prev[0], g - prev[1]
            sy = minner(s, yv)
            if sy > 0:
                step = minner(s, s) / sy
        alpha = step
        for _ in range(60):
            trial = u - alpha * g
            psi_t, g_t = evaluate(trial)
            if psi_t <= psi - ARMIJO * alpha * gn * gn:
                break
            alpha *= 0.5
        else:
            raise LineSearchFailed(f"no sufficient decrease at iteration {it} (gradient norm {gn:.3g})")
        prev = (u, g)
        u, g, psi = trial, g_t, psi_t
        level.psi.append(psi)
    else:
        raise LineSearchFailed(f"gradient norm {mnorm(g):.3g} above {tol:.1e} after {max_iter} iterations")
    level.iterations = len(level.psi) - 1
    level.gradient_norm = mnorm(g)
    level.u = u
    x = -Linv(u)
    level.x = x
    # residual of the discrete primal equation K x / m + V'(t, x)
    Kx = (mesh.K @ x.ravel()).reshape(x.shape)
    r = Kx / mesh.mass[:, None] + p.F(t, x)
    level.primal_residual = mnorm(r)
    vals, _, _, _ = _conjugate_batch(conv, t, u)
    level.fenchel_gap = float(mesh.mass @ (vals + conv.value(t, x) - np.einsum("mi,mi->m", u, x)))
    if level.primal_residual > primal_tol:
        raise PrimalResidualLarge(
            f"dual converged (gradient {level.gradient_norm:.3g}) but the primal residual is {level.primal_residual:.3g}"
        )
    return level


def _fine_start(coarse: _DualLevel, fine_t: np.ndarray) -> np.ndarray:
    return np.column_stack([np.interp(fine_t, coarse.t, coarse.u[:, j]) for j in range(coarse.u.shape[1])])


def dual_solve(
    p: NonlinearProblem,
    B1,
    *,
    grid: int = DEFAULT_DUAL_GRID,
    tol: float = GRADIENT_TOL,
    primal_tol: float = PRIMAL_TOL,
    max_iter: int = MAX_DUAL_ITERATIONS,
    certificate=None,
    check_nullity: bool = True,
) -> Solution:
    """Minimize the discrete dual action on ``grid`` and ``2 * grid`` cells.

    Only Sturm-Liouville templates are supported.  The returned solution
    lives on the fine mesh; ``diagnostics["extrapolated"]`` holds the
    Richardson combination of both meshes on the coarse nodes.

    Raises:
        DomainError: if ``nu(B1) != 0`` or the template is not Sturm-Liouville.
        NotStronglyConvex: if ``V - B1`` is not strongly convex where evaluated.
        LineSearchFailed, PrimalResidualLarge
    """
    tp = p.template
    if not (isinstance(tp, SecondOrderProblem) and isinstance(tp.bc, SturmLiouville)):
        raise DomainError("dual_solve supports second-order Sturm-Liouville templates")
    if p.potential is None:
        raise ConfigError("dual_solve needs a potential")
    p.validate()
    B1 = constant_coefficient(tp, B1)
    anchor = None
    if check_nullity:
        from ..index import index_sweep

        anchor = index_sweep(tp.with_B(B1))
        if anchor.nu != 0:
            raise DomainError(f"nu(B1) = {anchor.nu}; the dual solver needs an invertible anchor")
    coarse = _minimize(p, B1, grid, None, tol, primal_tol, max_iter)
    fine = _minimize(p, B1, 2 * grid, _fine_start(coarse, np.linspace(0, 1, 2 * grid + 1)[_keep_mask(tp, 2 * grid)]), tol, primal_tol, max_iter)
    grid_full, vals_full = _with_boundary(tp, fine.t, fine.x)
    cgrid, cx = _with_boundary(tp, coarse.t, coarse.x)
    fx = vals_full[::2]
    richardson = float(np.max(np.abs(fx - cx))) / 3.0
    cvals = (4.0 * fx - cx) / 3.0
    return Solution(
        grid=grid_full,
        values=vals_full,
        residual=fine.primal_residual,
        boundary_residual=0.0,
        richardson_error=richardson,
        levels=(grid, 2 * grid),
        residuals=(coarse.primal_residual, fine.primal_residual),
        method="dual-action",
        certificate=certificate,
        diagnostics={
            "gradient_norm": [coarse.gradient_norm, fine.gradient_norm],
            "iterations": [coarse.iterations, fine.iterations],
            "fenchel_gap": [coarse.fenchel_gap, fine.fenchel_gap],
            "psi_history": fine.psi,
            "psi_history_coarse": coarse.psi,
            "extrapolated_grid": cgrid.tolist(),
            "extrapolated": cvals.tolist(),
            "anchor_index": None if anchor is None else [anchor.i, anchor.nu],
        },
    )


def _keep_mask(tp, N):
    mask = np.ones(N + 1, dtype=bool)
    if tp.bc.alpha == 0.0:
        mask[0] = False
    if tp.bc.beta == math.pi:
        mask[-1] = False
    return mask


def _with_boundary(tp, t, x):
    """Re-insert Dirichlet end nodes (value zero) so grids cover ``[0, 1]``."""
    if tp.bc.alpha == 0.0:
        t = np.concatenate([[0.0], t])
        x = np.vstack([np.zeros((1, x.shape[1])), x])
    if tp.bc.beta == math.pi:
        t = np.concatenate([t, [1.0]])
        x = np.vstack([x, np.zeros((1, x.shape[1]))])
    return t, x


def cross_validate(p: NonlinearProblem, B1, *, grid: int = 128, tol: float = 1e-5, multistart: int = 0, seed: int = 0) -> dict:
    """Solve with both solvers and compare in discrete L2.

    ``solve_bvp`` runs on ``grid`` cells (accepting on ``2 * grid``) and
    ``dual_solve`` on ``2 * grid`` cells; the Richardson-extrapolated dual
    solution is compared with the collocation solution on the shared nodes.
    """
    from .collocation import solve_bvp

    bvp = solve_bvp(p, start=B1, waive=True, grid=grid, multistart=multistart, seed=seed)
    dual = dual_solve(p, B1, grid=2 * grid)
    tg = np.asarray(dual.diagnostics["extrapolated_grid"])
    xd = np.asarray(dual.diagnostics["extrapolated"])
    idx = np.searchsorted(bvp.grid, tg)
    idx = np.clip(idx, 0, bvp.grid.size - 1)
    if np.all(np.abs(bvp.grid[idx] - tg) <= 1e-12):
        xb = bvp.values[idx]
    else:
        import scipy.interpolate

        xb = scipy.interpolate.CubicSpline(bvp.grid, bvp.values, axis=0)(tg)
    diff = xd - xb
    distance = math.sqrt(float(np.trapezoid(np.sum(diff * diff, axis=1), tg)))
    return {
        "distance": distance,
        "agree": distance <= tol,
        "multiple_solutions": bool(bvp.others),
        "collocation": bvp,
        "dual": dual,
    }
