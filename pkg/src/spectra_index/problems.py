"""Boundary-value problem data model and validation.

Matrix-valued coefficients on ``[0, 1]`` are stored in one normal form: a
sequence of pieces ``[t_k, t_{k+1})``, each affine in ``t``, described by its
left and right end values.  Constant, piecewise-constant and uniformly
sampled (linearly interpolated) coefficients all fit this form, and it is
closed under linear combination, which is what shifts and pencil paths need.
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Union

import numpy as np

from .errors import (
    AngleOutOfRange,
    CompatibilityViolation,
    ConfigError,
    InvalidMatrix,
    NotSymplectic,
    PositivityViolation,
    ShapeMismatch,
)
from .numerics import as_matrix, check_symmetric, symplectic_form

VALIDATION_GRID = 257
COMPAT_TOL = 1e-10
SYMPLECTIC_TOL = 1e-10


# ---------------------------------------------------------------------------
# scalar parsing

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_NAMES = {"pi": math.pi, "e": math.e}
_FUNCS = {"sqrt": math.sqrt, "sin": math.sin, "cos": math.cos, "acos": math.acos}


def parse_number(value) -> float:
    """Parse a JSON scalar; strings may use ``pi``, ``sqrt`` and arithmetic.

    >>> parse_number("3*pi/4") == 3 * math.pi / 4
    True
    """
    if isinstance(value, bool):
        raise ConfigError("booleans are not numbers")
    if isinstance(value, (int, float, np.integer, np.floating)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"expected a number, got {value!r}")
    try:
        tree = ast.parse(value.replace("^", "**"), mode="eval")
        return float(_eval_node(tree.body))
    except (SyntaxError, KeyError, TypeError, ZeroDivisionError, ValueError) as exc:
        raise ConfigError(f"cannot parse number {value!r}") from exc


def _eval_node(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return node.value
    if isinstance(node, ast.Name):
        return _NAMES[node.id]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval_node(node.left), _eval_node(node.right))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_node(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and len(node.args) == 1:
        return _FUNCS[node.func.id](_eval_node(node.args[0]))
    raise TypeError(f"unsupported expression node {ast.dump(node)}")


def parse_matrix(value, *, name: str = "matrix") -> np.ndarray:
    if isinstance(value, (int, float, str)):
        return np.array([[parse_number(value)]])
    try:
        rows = [[parse_number(x) for x in row] for row in value]
    except TypeError as exc:
        raise ConfigError(f"{name} must be a list of rows") from exc
    return as_matrix(rows, name=name)


# ---------------------------------------------------------------------------
# matrix functions


class MatrixFunction:
    """Symmetric ``n x n`` matrix-valued function on ``[0, 1]``.

    Use the constructors :meth:`constant`, :meth:`piecewise` and
    :meth:`sampled`.  Pieces are half-open ``[t_k, t_{k+1})``; the last piece
    also owns ``t = 1``.
    """

    __slots__ = ("knots", "left", "right", "kind")

    def __init__(self, knots, left, right, kind: str = "affine"):
        knots = np.asarray(knots, dtype=float)
        left = np.asarray(left, dtype=float)
        right = np.asarray(right, dtype=float)
        if knots.ndim != 1 or knots.size < 2 or knots[0] != 0.0 or knots[-1] != 1.0:
            raise ConfigError("knots must start at 0 and end at 1")
        if np.any(np.diff(knots) <= 0):
            raise ConfigError("knots must be strictly increasing")
        if left.shape != right.shape or left.ndim != 3 or left.shape[0] != knots.size - 1:
            raise ShapeMismatch("piece values do not match the knot count")
        if left.shape[1] != left.shape[2]:
            raise InvalidMatrix("matrix function values must be square")
        for arr in (left, right):
            if not np.all(np.isfinite(arr)):
                raise InvalidMatrix("matrix function has non-finite values")
            scale = max(1.0, float(np.max(np.abs(arr), initial=0.0)))
            if np.max(np.abs(arr - arr.transpose(0, 2, 1)), initial=0.0) > 1e-12 * scale:
                raise InvalidMatrix("matrix function samples must be symmetric")
        self.knots = knots
        self.left = 0.5 * (left + left.transpose(0, 2, 1))
        self.right = 0.5 * (right + right.transpose(0, 2, 1))
        self.kind = kind

    # constructors -----------------------------------------------------
    @classmethod
    def constant(cls, M) -> "MatrixFunction":
        A = check_symmetric(M, name="constant value")
        return cls([0.0, 1.0], A[None], A[None], "constant")

    @classmethod
    def piecewise(cls, breaks, values) -> "MatrixFunction":
        breaks = [float(b) for b in breaks]
        vals = np.array([check_symmetric(v, name="piece value") for v in values])
        if len(vals) != len(breaks) + 1:
            raise ShapeMismatch("piecewise needs len(values) == len(breaks) + 1")
        if any(not 0.0 < b < 1.0 for b in breaks):
            raise ConfigError("breakpoints must lie strictly inside (0, 1)")
        return cls([0.0, *breaks, 1.0], vals, vals, "piecewise")

    @classmethod
    def sampled(cls, values) -> "MatrixFunction":
        vals = np.array([check_symmetric(v, name="grid value") for v in values])
        if len(vals) < 2:
            raise ShapeMismatch("sampled functions need at least two grid values")
        return cls(np.linspace(0.0, 1.0, len(vals)), vals[:-1], vals[1:], "sampled")

    @classmethod
    def from_callable(cls, fn: Callable[[float], Any], points: int = 257) -> "MatrixFunction":
        """Sample ``fn`` on a uniform grid (linear interpolation in between)."""
        return cls.sampled([np.atleast_2d(fn(t)) for t in np.linspace(0.0, 1.0, points)])

    @classmethod
    def coerce(cls, value, n: int | None = None) -> "MatrixFunction":
        """Accept a MatrixFunction, a matrix, or a scalar (times identity)."""
        if isinstance(value, MatrixFunction):
            return value
        if np.isscalar(value):
            if n is None:
                raise ConfigError("scalar coefficient needs a dimension")
            return cls.constant(float(value) * np.eye(n))
        return cls.constant(value)

    # basic protocol ---------------------------------------------------
    @property
    def dim(self) -> int:
        return self.left.shape[1]

    @property
    def pieces(self) -> int:
        return self.left.shape[0]

    @property
    def is_piecewise_constant(self) -> bool:
        return bool(np.array_equal(self.left, self.right))

    def piece_of(self, t) -> np.ndarray:
        idx = np.searchsorted(self.knots, t, side="right") - 1
        return np.clip(idx, 0, self.pieces - 1)

    def eval_in_piece(self, t, idx) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        a = self.knots[idx]
        b = self.knots[idx + 1]
        w = ((t - a) / (b - a))[..., None, None]
        return self.left[idx] + w * (self.right[idx] - self.left[idx])

    def __call__(self, t) -> np.ndarray:
        t_arr = np.asarray(t, dtype=float)
        if np.any((t_arr < 0.0) | (t_arr > 1.0)):
            raise ValueError("matrix functions are defined on [0, 1]")
        return self.eval_in_piece(t_arr, self.piece_of(t_arr))

    def limits(self) -> np.ndarray:
        """All one-sided end values of all pieces, shape ``(2K, n, n)``."""
        return np.concatenate([self.left, self.right])

    # arithmetic -------------------------------------------------------
    def _restrict(self, knots: np.ndarray):
        mids = 0.5 * (knots[:-1] + knots[1:])
        idx = self.piece_of(mids)
        return self.eval_in_piece(knots[:-1], idx), self.eval_in_piece(knots[1:], idx)

    @staticmethod
    def combine(terms) -> "MatrixFunction":
        """Linear combination ``sum(c * F for c, F in terms)``."""
        terms = list(terms)
        dims = {F.dim for _, F in terms}
        if len(dims) != 1:
            raise ShapeMismatch("cannot combine matrix functions of different size")
        knots = np.unique(np.concatenate([F.knots for _, F in terms]))
        left = 0.0
        right = 0.0
        for c, F in terms:
            lo, hi = F._restrict(knots)
            left = left + c * lo
            right = right + c * hi
        kinds = {F.kind for _, F in terms}
        if kinds == {"constant"}:
            kind = "constant"
        elif np.array_equal(left, right):
            kind = "piecewise"
        else:
            kind = "affine"
        return MatrixFunction(knots, left, right, kind)

    def __add__(self, other):
        if np.isscalar(other):
            return self.shift(float(other))
        return MatrixFunction.combine([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        if np.isscalar(other):
            return self.shift(-float(other))
        return MatrixFunction.combine([(1.0, self), (-1.0, other)])

    def __mul__(self, c):
        return MatrixFunction(self.knots, c * self.left, c * self.right, self.kind)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def shift(self, lam: float) -> "MatrixFunction":
        I = lam * np.eye(self.dim)
        return MatrixFunction(self.knots, self.left + I, self.right + I, self.kind)

    def congruence(self, T) -> "MatrixFunction":
        """``T^T F(t) T`` pointwise (T constant)."""
        T = np.asarray(T, dtype=float)
        return MatrixFunction(self.knots, T.T @ self.left @ T, T.T @ self.right @ T, self.kind)

    @staticmethod
    def block_diag(*funcs: "MatrixFunction") -> "MatrixFunction":
        knots = np.unique(np.concatenate([F.knots for F in funcs]))
        n = sum(F.dim for F in funcs)
        K = knots.size - 1
        left = np.zeros((K, n, n))
        right = np.zeros((K, n, n))
        o = 0
        for F in funcs:
            lo, hi = F._restrict(knots)
            left[:, o:o + F.dim, o:o + F.dim] = lo
            right[:, o:o + F.dim, o:o + F.dim] = hi
            o += F.dim
        kinds = {F.kind for F in funcs}
        kind = "constant" if kinds == {"constant"} else ("piecewise" if np.array_equal(left, right) else "affine")
        return MatrixFunction(knots, left, right, kind)

    # spectral summaries (exact for piecewise-affine functions) ---------
    def min_eigenvalue(self) -> float:
        """Minimum over ``t`` of the smallest eigenvalue.

        The smallest eigenvalue is concave along each affine piece, so the
        minimum is attained at a piece end.
        """
        return float(np.min(np.linalg.eigvalsh(self.limits())))

    def max_eigenvalue(self) -> float:
        return float(np.max(np.linalg.eigvalsh(self.limits())))

    def sup_norm(self) -> float:
        """``sup_t ||F(t)||_2`` (convex along pieces, so attained at ends)."""
        return float(np.max(np.abs(np.linalg.eigvalsh(self.limits()))))

    def grid_min_eigenvalue(self, points: int = VALIDATION_GRID) -> float:
        t = np.linspace(0.0, 1.0, points)
        return float(min(np.min(np.linalg.eigvalsh(self(t))), self.min_eigenvalue()))

    # exact integrals -------------------------------------------------
    def _subdivide(self, nodes: np.ndarray):
        pts = np.unique(np.concatenate([nodes, self.knots]))
        a, b = pts[:-1], pts[1:]
        mid = 0.5 * (a + b)
        idx = self.piece_of(mid)
        return a, b, mid, idx

    def cell_means(self, nodes) -> np.ndarray:
        """Exact averages over the cells ``[nodes[c], nodes[c+1]]``."""
        nodes = np.asarray(nodes, dtype=float)
        a, b, mid, idx = self._subdivide(nodes)
        integral = 0.5 * (b - a)[:, None, None] * (self.eval_in_piece(a, idx) + self.eval_in_piece(b, idx))
        cell = np.clip(np.searchsorted(nodes, mid, side="right") - 1, 0, nodes.size - 2)
        out = np.zeros((nodes.size - 1, self.dim, self.dim))
        np.add.at(out, cell, integral)
        return out / np.diff(nodes)[:, None, None]

    def hat_integrals(self, nodes) -> np.ndarray:
        """Exact ``int F(t) phi_i(t) dt`` for the P1 hat functions on ``nodes``."""
        nodes = np.asarray(nodes, dtype=float)
        a, b, mid, idx = self._subdivide(nodes)
        cell = np.clip(np.searchsorted(nodes, mid, side="right") - 1, 0, nodes.size - 2)
        lo, hi = nodes[cell], nodes[cell + 1]
        h = hi - lo
        out = np.zeros((nodes.size, self.dim, self.dim))
        Fa, Fm, Fb = (self.eval_in_piece(x, idx) for x in (a, mid, b))
        for node, phi in ((cell, lambda x: (hi - x) / h), (cell + 1, lambda x: (x - lo) / h)):
            # Simpson is exact for the quadratic integrand on each sub-piece
            val = ((b - a) / 6.0)[:, None, None] * (
                phi(a)[:, None, None] * Fa + 4.0 * phi(mid)[:, None, None] * Fm + phi(b)[:, None, None] * Fb
            )
            np.add.at(out, node, val)
        return out

    # serialization ---------------------------------------------------
    def to_json(self) -> dict:
        if self.kind == "constant":
            return {"constant": self.left[0].tolist()}
        if self.kind == "piecewise" and self.is_piecewise_constant:
            return {"piecewise": {"breaks": self.knots[1:-1].tolist(), "values": self.left.tolist()}}
        if self.kind == "sampled":
            return {"sampled": {"values": [*self.left.tolist(), self.right[-1].tolist()]}}
        return {"affine": {"knots": self.knots.tolist(), "left": self.left.tolist(), "right": self.right.tolist()}}

    @classmethod
    def from_json(cls, spec, n: int | None = None) -> "MatrixFunction":
        if isinstance(spec, MatrixFunction):
            return spec
        if isinstance(spec, (int, float, str)):
            if n is None:
                raise ConfigError("scalar matrix function needs the dimension n")
            return cls.constant(parse_number(spec) * np.eye(n))
        if not isinstance(spec, dict) or len(spec) != 1:
            raise ConfigError("matrix function must be {'constant'|'piecewise'|'sampled'|'affine': ...}")
        (key, body), = spec.items()
        if key == "constant":
            return cls.constant(_matrix_or_scalar(body, n))
        if key == "piecewise":
            return cls.piecewise([parse_number(b) for b in body["breaks"]], [_matrix_or_scalar(v, n) for v in body["values"]])
        if key == "sampled":
            return cls.sampled([_matrix_or_scalar(v, n) for v in body["values"]])
        if key == "affine":
            return cls(body["knots"], body["left"], body["right"])
        raise ConfigError(f"unknown matrix function variant {key!r}")

    def __repr__(self):
        return f"MatrixFunction(kind={self.kind!r}, dim={self.dim}, pieces={self.pieces})"


def _matrix_or_scalar(v, n):
    if isinstance(v, (int, float, str)):
        if n is None:
            raise ConfigError("scalar entry needs the dimension n")
        return parse_number(v) * np.eye(n)
    return parse_matrix(v)


def shift(B: MatrixFunction, lam: float) -> MatrixFunction:
    """``B + lam * id`` pointwise."""
    return B.shift(lam)


# ---------------------------------------------------------------------------
# boundary conditions


@dataclass(frozen=True, eq=False)
class SturmLiouville:
    alpha: float
    beta: float


@dataclass(frozen=True, eq=False)
class GeneralizedPeriodic:
    M: np.ndarray
    N: np.ndarray
    label: str = "generalized"

    @classmethod
    def periodic(cls, n: int) -> "GeneralizedPeriodic":
        return cls(np.eye(n), np.eye(n), "periodic")

    @classmethod
    def antiperiodic(cls, n: int) -> "GeneralizedPeriodic":
        return cls(-np.eye(n), -np.eye(n), "antiperiodic")

    @classmethod
    def scalar(cls, n: int, a: float) -> "GeneralizedPeriodic":
        return cls(a * np.eye(n), np.eye(n) / a, f"scalar({a!r})")


@dataclass(frozen=True, eq=False)
class Bolza:
    alpha: float
    beta: float


@dataclass(frozen=True, eq=False)
class Symplectic:
    P: np.ndarray


SecondOrderBC = Union[SturmLiouville, GeneralizedPeriodic]
FirstOrderBC = Union[Bolza, Symplectic]


def _check_angles(alpha: float, beta: float) -> None:
    if not 0.0 <= alpha < math.pi:
        raise AngleOutOfRange(f"alpha={alpha!r} must satisfy 0 <= alpha < pi")
    if not 0.0 < beta <= math.pi:
        raise AngleOutOfRange(f"beta={beta!r} must satisfy 0 < beta <= pi")


# ---------------------------------------------------------------------------
# problems


@dataclass(frozen=True, eq=False)
class SecondOrderProblem:
    """``(Lambda(t) x')' + B(t) x = 0`` on ``[0, 1]`` with ``bc``."""

    Lambda: MatrixFunction
    B: MatrixFunction
    bc: SecondOrderBC

    @property
    def n(self) -> int:
        return self.B.dim

    @property
    def angle_type(self) -> bool:
        return isinstance(self.bc, SturmLiouville)

    def with_B(self, B) -> "SecondOrderProblem":
        return replace(self, B=MatrixFunction.coerce(B, self.n))

    def validate(self) -> "SecondOrderProblem":
        n = self.B.dim
        if self.Lambda.dim != n:
            raise ShapeMismatch("Lambda and B must have the same size")
        lam_min = self.Lambda.min_eigenvalue()
        if lam_min <= 0.0 or self.Lambda.grid_min_eigenvalue() <= 0.0:
            raise PositivityViolation(f"Lambda(t) is not positive definite (min eigenvalue {lam_min:.3g})")
        if isinstance(self.bc, SturmLiouville):
            _check_angles(self.bc.alpha, self.bc.beta)
        elif isinstance(self.bc, GeneralizedPeriodic):
            M = as_matrix(self.bc.M, square=True, name="M")
            N = as_matrix(self.bc.N, square=True, name="N")
            if M.shape != (n, n) or N.shape != (n, n):
                raise ShapeMismatch("M and N must be n x n")
            if np.linalg.cond(M) > 1e12:
                raise CompatibilityViolation("M must be invertible")
            L0 = self.Lambda(0.0)
            L1 = self.Lambda(1.0)
            err = np.max(np.abs(M.T @ L1 @ N - L0))
            if err > COMPAT_TOL * max(1.0, float(np.max(np.abs(L0)))):
                raise CompatibilityViolation(f"M^T Lambda(1) N != Lambda(0) (error {err:.3g})")
        else:
            raise ConfigError(f"unsupported second-order boundary condition {self.bc!r}")
        return self


@dataclass(frozen=True, eq=False)
class FirstOrderProblem:
    """``J x' + B(t) x = 0`` (i.e. ``x' = J B(t) x``) with ``bc``.

    ``anchor`` is the prescribed index of ``B = 0`` for symplectic end
    conditions; it is ignored for Bolza conditions.
    """

    B: MatrixFunction
    bc: FirstOrderBC
    anchor: int = 0

    @property
    def n(self) -> int:
        return self.B.dim // 2

    @property
    def angle_type(self) -> bool:
        return isinstance(self.bc, Bolza)

    def with_B(self, B) -> "FirstOrderProblem":
        return replace(self, B=MatrixFunction.coerce(B, 2 * self.n))

    def validate(self) -> "FirstOrderProblem":
        if self.B.dim % 2:
            raise ShapeMismatch("first-order coefficient must be 2n x 2n")
        n = self.n
        if isinstance(self.bc, Bolza):
            _check_angles(self.bc.alpha, self.bc.beta)
        elif isinstance(self.bc, Symplectic):
            P = as_matrix(self.bc.P, square=True, name="P")
            if P.shape != (2 * n, 2 * n):
                raise ShapeMismatch("P must be 2n x 2n")
            J = symplectic_form(n)
            err = np.max(np.abs(P.T @ J @ P - J))
            if err > SYMPLECTIC_TOL * max(1.0, float(np.max(np.abs(P))) ** 2):
                raise NotSymplectic(f"P^T J P != J (error {err:.3g})")
        else:
            raise ConfigError(f"unsupported first-order boundary condition {self.bc!r}")
        return self


# elliptic -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Interval:
    length: float = 1.0

    @property
    def lengths(self) -> tuple[float, ...]:
        return (self.length,)


@dataclass(frozen=True, eq=False)
class Rectangle:
    L1: float = 1.0
    L2: float = 1.0

    @property
    def lengths(self) -> tuple[float, ...]:
        return (self.L1, self.L2)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Bounded coefficient ``b`` on an interval or rectangle.

    ``kind`` is ``"constant"`` (``value``), ``"sampled"`` (``values`` on the
    uniform tensor grid including the boundary, (bi)linear interpolation) or
    ``"function"`` (a vectorized callable, programmatic use only).
    """

    kind: str
    value: float = 0.0
    values: np.ndarray | None = None
    fn: Callable | None = field(default=None, repr=False)

    @classmethod
    def constant(cls, value: float) -> "ScalarField":
        return cls("constant", value=float(value))

    @classmethod
    def sampled(cls, values) -> "ScalarField":
        v = np.asarray(values, dtype=float)
        if v.ndim not in (1, 2) or min(v.shape) < 2 or not np.all(np.isfinite(v)):
            raise ConfigError("sampled field needs a finite 1-D or 2-D grid with >= 2 points per axis")
        return cls("sampled", values=v)

    @classmethod
    def function(cls, fn: Callable) -> "ScalarField":
        return cls("function", fn=fn)

    def __call__(self, lengths, *coords) -> np.ndarray:
        """Evaluate at physical coordinates (one array per axis, broadcastable)."""
        coords = np.broadcast_arrays(*[np.asarray(c, dtype=float) for c in coords])
        if self.kind == "constant":
            return np.full(coords[0].shape, self.value)
        if self.kind == "function":
            return np.asarray(self.fn(*coords), dtype=float) * np.ones(coords[0].shape)
        v = self.values
        if v.ndim != len(coords):
            raise ShapeMismatch("sampled field dimension does not match the geometry")
        out = np.zeros(coords[0].shape)
        # multilinear interpolation on the uniform grid
        idx, wts = [], []
        for ax, (c, L) in enumerate(zip(coords, lengths)):
            g = v.shape[ax] - 1
            s = np.clip(c / L * g, 0.0, g)
            i = np.clip(np.floor(s).astype(int), 0, g - 1)
            idx.append(i)
            wts.append(s - i)
        if v.ndim == 1:
            return v[idx[0]] * (1 - wts[0]) + v[idx[0] + 1] * wts[0]
        for di in (0, 1):
            for dj in (0, 1):
                w = (wts[0] if di else 1 - wts[0]) * (wts[1] if dj else 1 - wts[1])
                out = out + w * v[idx[0] + di, idx[1] + dj]
        return out

    def sup_abs(self, lengths) -> float:
        if self.kind == "constant":
            return abs(self.value)
        if self.kind == "sampled":
            return float(np.max(np.abs(self.values)))
        grids = np.meshgrid(*[np.linspace(0, L, 129) for L in lengths], indexing="ij")
        return float(np.max(np.abs(self(lengths, *grids))))

    def shift(self, lam: float) -> "ScalarField":
        if self.kind == "constant":
            return ScalarField.constant(self.value + lam)
        if self.kind == "sampled":
            return ScalarField.sampled(self.values + lam)
        f = self.fn
        return ScalarField.function(lambda *c: f(*c) + lam)

    def to_json(self):
        if self.kind == "constant":
            return {"constant": self.value}
        if self.kind == "sampled":
            return {"sampled": {"values": self.values.tolist()}}
        return {"function": repr(self.fn)}


@dataclass(frozen=True, eq=False)
class EllipticProblem:
    """``Delta u + b(x) u = 0`` with Dirichlet data on an interval or rectangle."""

    geometry: Union[Interval, Rectangle]
    b: ScalarField

    @property
    def lengths(self) -> tuple[float, ...]:
        return self.geometry.lengths

    def with_b(self, b) -> "EllipticProblem":
        if not isinstance(b, ScalarField):
            b = ScalarField.constant(float(b))
        return replace(self, b=b)

    def validate(self) -> "EllipticProblem":
        if any(not (L > 0 and math.isfinite(L)) for L in self.lengths):
            raise ConfigError("domain lengths must be positive")
        if self.b.kind == "sampled" and self.b.values.ndim != len(self.lengths):
            raise ShapeMismatch("sampled b must match the geometry dimension")
        if not math.isfinite(self.b.sup_abs(self.lengths)):
            raise ConfigError("b must be bounded")
        return self


Problem = Union[SecondOrderProblem, FirstOrderProblem, EllipticProblem]


# ---------------------------------------------------------------------------
# pencil paths


@dataclass(frozen=True, eq=False)
class PencilPath:
    """Segment ``B(s) = (1 - s) B0 + s B1``.

    ``monotone`` is set when ``B1(t) - B0(t) >= eps * id`` for all ``t`` with
    ``eps > 0``; ``margin`` is the (possibly negative) smallest eigenvalue
    of the difference.
    """

    B0: MatrixFunction
    B1: MatrixFunction
    monotone: bool
    eps: float
    margin: float

    def at(self, s: float) -> MatrixFunction:
        return MatrixFunction.combine([(1.0 - s, self.B0), (s, self.B1)])

    @property
    def difference(self) -> MatrixFunction:
        return self.B1 - self.B0


def path(B0, B1) -> PencilPath:
    """Build the pencil from ``B0`` to ``B1`` and test monotonicity.

    The smallest eigenvalue of the difference is checked on the 257-point
    validation grid and, exactly, at every piece end.
    """
    B0 = MatrixFunction.coerce(B0)
    B1 = MatrixFunction.coerce(B1)
    if B0.dim != B1.dim:
        raise ShapeMismatch(f"path endpoints differ in size ({B0.dim} vs {B1.dim})")
    margin = (B1 - B0).grid_min_eigenvalue()
    monotone = margin > 0.0
    return PencilPath(B0, B1, monotone, margin if monotone else 0.0, margin)


def pointwise_leq(B1: MatrixFunction, B2: MatrixFunction, tol: float = 1e-12) -> bool:
    """``B1(t) <= B2(t)`` for all ``t`` (exact for piecewise-affine data)."""
    return (B2 - B1).grid_min_eigenvalue() >= -tol * max(1.0, B1.sup_norm(), B2.sup_norm())


# ---------------------------------------------------------------------------
# validation / schema


def validate(spec) -> Problem:
    """Turn a problem description (dict or Problem) into a validated Problem.

    Raises:
        PositivityViolation, CompatibilityViolation, NotSymplectic,
        AngleOutOfRange, ShapeMismatch, ConfigError
    """
    if isinstance(spec, (SecondOrderProblem, FirstOrderProblem, EllipticProblem)):
        return spec.validate()
    if not isinstance(spec, dict):
        raise ConfigError("problem description must be a JSON object")
    kind = spec.get("kind")
    if kind == "second_order":
        n = int(spec.get("n", 1))
        Lam = MatrixFunction.from_json(spec.get("Lambda", {"constant": np.eye(n).tolist()}), n)
        B = MatrixFunction.from_json(spec.get("B", {"constant": np.zeros((n, n)).tolist()}), n)
        if B.dim != n or Lam.dim != n:
            raise ShapeMismatch(f"coefficients must be {n} x {n}")
        bc = _second_order_bc(spec.get("bc", {}), n)
        return SecondOrderProblem(Lam, B, bc).validate()
    if kind == "first_order":
        n = int(spec.get("n", 1))
        B = MatrixFunction.from_json(spec.get("B", {"constant": np.zeros((2 * n, 2 * n)).tolist()}), 2 * n)
        if B.dim != 2 * n:
            raise ShapeMismatch(f"first-order coefficient must be {2 * n} x {2 * n}")
        bc_spec = spec.get("bc", {})
        bc = _first_order_bc(bc_spec, n)
        anchor = int(bc_spec.get("anchor", spec.get("anchor", 0)))
        return FirstOrderProblem(B, bc, anchor).validate()
    if kind == "elliptic":
        geom_spec = spec.get("geometry", {"interval": {"length": 1.0}})
        if "interval" in geom_spec:
            geom = Interval(parse_number(geom_spec["interval"].get("length", 1.0)))
        elif "rectangle" in geom_spec:
            r = geom_spec["rectangle"]
            geom = Rectangle(parse_number(r.get("L1", 1.0)), parse_number(r.get("L2", 1.0)))
        else:
            raise ConfigError("geometry must be 'interval' or 'rectangle'")
        b_spec = spec.get("b", {"constant": 0.0})
        if isinstance(b_spec, (int, float, str)):
            b = ScalarField.constant(parse_number(b_spec))
        elif "constant" in b_spec:
            b = ScalarField.constant(parse_number(b_spec["constant"]))
        elif "sampled" in b_spec:
            vals = b_spec["sampled"]["values"]
            b = ScalarField.sampled(np.vectorize(parse_number, otypes=[float])(np.array(vals, dtype=object)))
        else:
            raise ConfigError("b must be {'constant': v} or {'sampled': {'values': ...}}")
        return EllipticProblem(geom, b).validate()
    raise ConfigError(f"unknown problem kind {kind!r}")


def _second_order_bc(bc: dict, n: int) -> SecondOrderBC:
    typ = bc.get("type", "sturm_liouville")
    if typ in ("sturm_liouville", "dirichlet"):
        if typ == "dirichlet":
            return SturmLiouville(0.0, math.pi)
        return SturmLiouville(parse_number(bc.get("alpha", 0.0)), parse_number(bc.get("beta", "pi")))
    if typ == "periodic":
        return GeneralizedPeriodic.periodic(n)
    if typ == "antiperiodic":
        return GeneralizedPeriodic.antiperiodic(n)
    if typ == "scalar_periodic":
        a = parse_number(bc["a"])
        if a == 0.0:
            raise ConfigError("scalar_periodic needs a != 0")
        return GeneralizedPeriodic.scalar(n, a)
    if typ == "generalized_periodic":
        return GeneralizedPeriodic(parse_matrix(bc["M"], name="M"), parse_matrix(bc["N"], name="N"))
    raise ConfigError(f"unknown second-order boundary condition {typ!r}")


def _first_order_bc(bc: dict, n: int) -> FirstOrderBC:
    typ = bc.get("type", "bolza")
    if typ == "bolza":
        return Bolza(parse_number(bc.get("alpha", 0.0)), parse_number(bc.get("beta", "pi")))
    if typ == "symplectic":
        return Symplectic(parse_matrix(bc.get("P", np.eye(2 * n).tolist()), name="P"))
    raise ConfigError(f"unknown first-order boundary condition {typ!r}")


def to_json(p: Problem) -> dict:
    """Inverse of :func:`validate` (up to number formatting)."""
    if isinstance(p, SecondOrderProblem):
        if isinstance(p.bc, SturmLiouville):
            bc = {"type": "sturm_liouville", "alpha": p.bc.alpha, "beta": p.bc.beta}
        else:
            bc = {"type": "generalized_periodic", "M": np.asarray(p.bc.M).tolist(), "N": np.asarray(p.bc.N).tolist()}
        return {"kind": "second_order", "n": p.n, "Lambda": p.Lambda.to_json(), "B": p.B.to_json(), "bc": bc}
    if isinstance(p, FirstOrderProblem):
        if isinstance(p.bc, Bolza):
            bc = {"type": "bolza", "alpha": p.bc.alpha, "beta": p.bc.beta}
        else:
            bc = {"type": "symplectic", "P": np.asarray(p.bc.P).tolist(), "anchor": p.anchor}
        return {"kind": "first_order", "n": p.n, "B": p.B.to_json(), "bc": bc}
    geom = (
        {"interval": {"length": p.geometry.length}}
        if isinstance(p.geometry, Interval)
        else {"rectangle": {"L1": p.geometry.L1, "L2": p.geometry.L2}}
    )
    return {"kind": "elliptic", "geometry": geom, "b": p.b.to_json()}
