"""Nonlinear problems built on a linear template.

The equations are

    (Lambda(t) x')' + F(t, x) = 0     second order, ends from the template
    J x' + F(t, x) = 0                 first order (``F = grad H``)
    Delta u + f(x, u) = 0              elliptic, Dirichlet data

where the template fixes ``Lambda`` and the boundary conditions; its own
``B`` is ignored.  Pointwise maps are vectorized: ``t`` has shape ``(m,)``
(or ``(m, d)`` coordinates for elliptic problems) and ``x`` shape
``(m, n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import ConfigError, ShapeMismatch
from ..problems import EllipticProblem, FirstOrderProblem, MatrixFunction, SecondOrderProblem, parse_matrix

CONSISTENCY_TOL = 1e-10
FD_STEP = 1e-6


def state_dim(template) -> int:
    """Dimension of the unknown ``x``."""
    if isinstance(template, SecondOrderProblem):
        return template.n
    if isinstance(template, FirstOrderProblem):
        return 2 * template.n
    if isinstance(template, EllipticProblem):
        return 1
    raise ConfigError(f"unsupported template {type(template).__name__}")


@dataclass(frozen=True, eq=False)
class NonlinearProblem:
    """Template plus pointwise nonlinearity.

    Either ``force`` or the pair ``slope``/``remainder`` must be given; the
    force is then ``slope(t, x) @ x + remainder(t, x)``.  ``jacobian`` is the
    derivative of the force in ``x`` (central differences when omitted) and
    ``potential`` an antiderivative (needed by the dual solver).
    """

    template: object
    force: Callable | None = None
    jacobian: Callable | None = None
    slope: Callable | None = None
    remainder: Callable | None = None
    potential: Callable | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return state_dim(self.template)

    def F(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.force is not None:
            return np.asarray(self.force(t, x), dtype=float).reshape(x.shape)
        if self.slope is None:
            raise ConfigError("nonlinearity needs a force or a slope field")
        out = np.einsum("mij,mj->mi", self.slope(t, x), x)
        if self.remainder is not None:
            out = out + self.remainder(t, x)
        return out

    def dF(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        m, n = x.shape
        if self.jacobian is not None:
            return np.asarray(self.jacobian(t, x), dtype=float).reshape(m, n, n)
        out = np.empty((m, n, n))
        for j in range(n):
            h = FD_STEP * (1.0 + np.abs(x[:, j]))
            e = np.zeros_like(x)
            e[:, j] = h
            out[:, :, j] = (self.F(t, x + e) - self.F(t, x - e)) / (2.0 * h[:, None])
        return out

    def V(self, t, x) -> np.ndarray:
        if self.potential is None:
            raise ConfigError("this nonlinearity has no potential")
        return np.asarray(self.potential(t, np.asarray(x, dtype=float)), dtype=float)

    def sample(self, points: int = 257, radius: float = 10.0, seed: int = 0):
        """Sample points ``(t, x)`` on the time grid times a box in ``x``."""
        rng = np.random.default_rng(seed)
        tp = self.template
        if isinstance(tp, EllipticProblem):
            L = np.asarray(tp.lengths)
            t = rng.random((points, L.size)) * L
        else:
            t = np.linspace(0.0, 1.0, points)
        x = radius * (2.0 * rng.random((points, self.n)) - 1.0)
        x[0] = 0.0
        return t, x

    def validate(self, radius: float = 10.0) -> "NonlinearProblem":
        """Check finiteness on a sampled box and the slope/remainder split.

        Raises:
            ConfigError: on non-finite values or an inconsistent split.
        """
        self.template.validate()
        t, x = self.sample(radius=radius)
        F = self.F(t, x)
        if F.shape != x.shape:
            raise ShapeMismatch(f"force has shape {F.shape}, expected {x.shape}")
        if not np.all(np.isfinite(F)) or not np.all(np.isfinite(self.dF(t, x))):
            raise ConfigError("nonlinearity is not finite on the sample box")
        if self.force is not None and self.slope is not None:
            split = np.einsum("mij,mj->mi", self.slope(t, x), x)
            if self.remainder is not None:
                split = split + self.remainder(t, x)
            err = np.max(np.abs(split - F) / np.maximum(1.0, np.abs(F)))
            if err > CONSISTENCY_TOL:
                raise ConfigError(f"force differs from slope * x + remainder by {err:.3g}")
        return self


# ---------------------------------------------------------------------------
# named nonlinearities


def _matrix(v, n, name):
    if np.isscalar(v) or isinstance(v, str):
        from ..problems import parse_number

        return parse_number(v) * np.eye(n)
    M = parse_matrix(v, name=name)
    if M.shape != (n, n):
        raise ShapeMismatch(f"{name} must be {n} x {n}")
    return M


def _vector(v, n, name):
    if v is None:
        return np.zeros(n)
    if np.isscalar(v) or isinstance(v, str):
        from ..problems import parse_number

        return np.full(n, parse_number(v))
    a = np.asarray([float(e) for e in v], dtype=float)
    if a.shape != (n,):
        raise ShapeMismatch(f"{name} must have length {n}")
    return a


def _time_of(t):
    # first coordinate for elliptic points, time otherwise
    t = np.asarray(t, dtype=float)
    return t[:, 0] if t.ndim == 2 else t


def zero(template, params=None) -> NonlinearProblem:
    n = state_dim(template)
    return NonlinearProblem(
        template,
        force=lambda t, x: np.zeros_like(x),
        jacobian=lambda t, x: np.zeros((x.shape[0], n, n)),
        potential=lambda t, x: np.zeros(x.shape[0]),
        name="zero",
    )


def linear(template, params) -> NonlinearProblem:
    """``F(t, x) = S x + g`` with constant ``S`` (key ``B``) and ``g`` (key ``h``)."""
    n = state_dim(template)
    S = _matrix(params.get("B", 0.0), n, "B")
    g = _vector(params.get("h"), n, "h")
    S = 0.5 * (S + S.T)
    return NonlinearProblem(
        template,
        force=lambda t, x: x @ S.T + g,
        jacobian=lambda t, x: np.broadcast_to(S, (x.shape[0], n, n)).copy(),
        slope=lambda t, x: np.broadcast_to(S, (x.shape[0], n, n)).copy(),
        remainder=lambda t, x: np.broadcast_to(g, x.shape).copy(),
        potential=lambda t, x: 0.5 * np.einsum("mi,ij,mj->m", x, S, x) + x @ g,
        name="linear",
        params={"B": S.tolist(), "h": g.tolist()},
    )


def pinched(template, params) -> NonlinearProblem:
    """Slope ``B1 cos^2|x|^2 + B2 sin^2|x|^2`` with remainder ``x (1+|x|^2)^{-1} sin(|x| t)``.

    ``B1`` and ``B2`` are constant matrices; the remainder is sublinear and
    can be switched off with ``remainder: false``.  An optional constant
    ``forcing`` vector is added to the remainder.
    """
    n = state_dim(template)
    B1 = _matrix(params["B1"], n, "B1")
    B2 = _matrix(params["B2"], n, "B2")
    with_rem = bool(params.get("remainder", True))
    g = _vector(params.get("forcing"), n, "forcing")

    def slope(t, x):
        r2 = np.sum(x * x, axis=1)
        c2 = np.cos(r2) ** 2
        return c2[:, None, None] * B1 + (1.0 - c2)[:, None, None] * B2

    def rem(t, x):
        if not with_rem:
            return np.zeros_like(x) + g
        r = np.sqrt(np.sum(x * x, axis=1))
        return x * (np.sin(r * _time_of(t)) / (1.0 + r * r))[:, None] + g

    def force(t, x):
        return np.einsum("mij,mj->mi", slope(t, x), x) + rem(t, x)

    def jac(t, x):
        r2 = np.sum(x * x, axis=1)
        # d/dx [cos^2(r2)] = -2 sin(2 r2) x
        dc = -2.0 * np.sin(2.0 * r2)[:, None] * x
        D = (B1 - B2) @ x.T  # (n, m): (B1 - B2) x per point
        out = slope(t, x) + np.einsum("im,mj->mij", D, dc)
        if with_rem:
            tt = _time_of(t)
            r = np.sqrt(r2)
            s = np.sin(r * tt)
            g = s / (1.0 + r2)
            safe = np.where(r > 0, r, 1.0)
            # d g / d r, then chain through r = |x|
            dg = (np.cos(r * tt) * tt * (1.0 + r2) - 2.0 * r * s) / (1.0 + r2) ** 2
            grad_g = np.where(r[:, None] > 0, (dg / safe)[:, None] * x, 0.0)
            out = out + g[:, None, None] * np.eye(n) + np.einsum("mi,mj->mij", x, grad_g)
        return out

    return NonlinearProblem(
        template,
        force=force,
        jacobian=jac,
        slope=slope,
        remainder=rem,
        name="pinched",
        params={"B1": B1.tolist(), "B2": B2.tolist(), "remainder": with_rem, "forcing": g.tolist()},
    )


def saturating(template, params) -> NonlinearProblem:
    """Potential ``b|x|^2/2 + delta (sqrt(1+|x|^2) - 1) + <g(t), x>``.

    The forcing is ``g(t) = forcing * cos(frequency * pi * t)``.  The
    Hessian lies between ``b`` and ``b + delta``, so the potential is convex
    after subtracting any ``b - c`` with ``c > 0``.
    """
    n = state_dim(template)
    b = float(params.get("b", 0.0))
    delta = float(params.get("delta", 0.0))
    g0 = _vector(params.get("forcing"), n, "forcing")
    w = float(params.get("frequency", 1.0))

    def forcing(t):
        return np.cos(w * math.pi * _time_of(t))[:, None] * g0

    def potential(t, x):
        r2 = np.sum(x * x, axis=1)
        return 0.5 * b * r2 + delta * (np.sqrt(1.0 + r2) - 1.0) + np.sum(forcing(t) * x, axis=1)

    def force(t, x):
        r2 = np.sum(x * x, axis=1)
        return b * x + delta * x / np.sqrt(1.0 + r2)[:, None] + forcing(t)

    def jac(t, x):
        r2 = np.sum(x * x, axis=1)
        s = np.sqrt(1.0 + r2)
        out = (b + delta / s)[:, None, None] * np.eye(n)
        return out - (delta / s**3)[:, None, None] * np.einsum("mi,mj->mij", x, x)

    return NonlinearProblem(
        template,
        force=force,
        jacobian=jac,
        potential=potential,
        name="saturating",
        params={"b": b, "delta": delta, "forcing": g0.tolist(), "frequency": w},
    )


REGISTRY: dict[str, Callable] = {
    "zero": zero,
    "linear": linear,
    "pinched": pinched,
    "saturating": saturating,
}


def nonlinearity(template, spec) -> NonlinearProblem:
    """Build a registered nonlinearity from ``{"name": ..., "params": {...}}``.

    Raises:
        ConfigError: for unknown names or malformed parameters.
    """
    if isinstance(spec, str):
        spec = {"name": spec}
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError("nonlinearity must be {'name': ..., 'params': {...}}")
    name = spec["name"]
    if name not in REGISTRY:
        raise ConfigError(f"unknown nonlinearity {name!r}; known: {sorted(REGISTRY)}")
    try:
        return REGISTRY[name](template, dict(spec.get("params", {}))).validate()
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad parameters for {name!r}: {exc}") from exc


def constant_coefficient(template, value) -> object:
    """Coerce a constant or JSON coefficient to the template's coefficient type."""
    from ..problems import ScalarField

    if isinstance(template, EllipticProblem):
        if isinstance(value, ScalarField):
            return value
        if isinstance(value, dict):
            if "constant" in value:
                return ScalarField.constant(float(value["constant"]))
            if "sampled" in value:
                vals = value["sampled"]
                return ScalarField.sampled(vals["values"] if isinstance(vals, dict) else vals)
            raise ConfigError(f"cannot read scalar field {value!r}")
        from ..problems import parse_number

        return ScalarField.constant(parse_number(value))
    n = template.B.dim
    if isinstance(value, MatrixFunction):
        return value
    if isinstance(value, dict):
        return MatrixFunction.from_json(value, n)
    if np.isscalar(value) or isinstance(value, str):
        from ..problems import parse_number

        return MatrixFunction.constant(parse_number(value) * np.eye(n))
    return MatrixFunction.coerce(value, n)
