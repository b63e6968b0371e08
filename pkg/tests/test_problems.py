import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectra_index.errors import (
    AngleOutOfRange,
    CompatibilityViolation,
    ConfigError,
    InvalidMatrix,
    NotSymplectic,
    PositivityViolation,
    ShapeMismatch,
)
from spectra_index.problems import (
    Bolza,
    FirstOrderProblem,
    GeneralizedPeriodic,
    MatrixFunction,
    SecondOrderProblem,
    SturmLiouville,
    Symplectic,
    parse_number,
    path,
    pointwise_leq,
    shift,
    to_json,
    validate,
)

PI = math.pi


def test_dirichlet_problem_is_valid():
    p = validate({"kind": "second_order", "n": 1, "bc": {"type": "sturm_liouville", "alpha": 0, "beta": "pi"}})
    assert isinstance(p.bc, SturmLiouville)
    assert p.bc.alpha == 0.0 and p.bc.beta == PI


def test_periodic_identity_is_compatible():
    p = validate({"kind": "second_order", "n": 2, "bc": {"type": "periodic"}})
    assert isinstance(p.bc, GeneralizedPeriodic)


def test_symplectic_shear_accepted_and_stretch_rejected():
    FirstOrderProblem(MatrixFunction.constant(np.zeros((2, 2))), Symplectic([[1.0, 1.0], [0.0, 1.0]])).validate()
    with pytest.raises(NotSymplectic):
        FirstOrderProblem(MatrixFunction.constant(np.zeros((2, 2))), Symplectic([[2.0, 0.0], [0.0, 1.0]])).validate()


def test_validation_errors():
    with pytest.raises(PositivityViolation):
        validate({"kind": "second_order", "Lambda": {"constant": [[-1.0]]}})
    with pytest.raises(AngleOutOfRange):
        validate({"kind": "second_order", "bc": {"alpha": "pi", "beta": 1.0}})
    with pytest.raises(AngleOutOfRange):
        FirstOrderProblem(MatrixFunction.constant(np.zeros((2, 2))), Bolza(0.5, 0.0)).validate()
    with pytest.raises(CompatibilityViolation):
        validate({"kind": "second_order", "bc": {"type": "generalized_periodic", "M": [[2.0]], "N": [[1.0]]}})
    with pytest.raises(ShapeMismatch):
        validate({"kind": "second_order", "n": 2, "B": {"constant": [[1.0]]}})
    with pytest.raises(ConfigError):
        validate({"kind": "wave"})


def test_scalar_periodic_is_compatible():
    p = validate({"kind": "second_order", "n": 2, "bc": {"type": "scalar_periodic", "a": 2.0}})
    M, N = np.asarray(p.bc.M), np.asarray(p.bc.N)
    assert np.allclose(M.T @ N, np.eye(2))


def test_matrix_function_rejects_asymmetric():
    with pytest.raises(InvalidMatrix):
        MatrixFunction.constant([[0.0, 1.0], [2.0, 0.0]])


def test_piecewise_is_half_open():
    F = MatrixFunction.piecewise([0.5], [[[1.0]], [[3.0]]])
    assert F(0.4999)[0, 0] == 1.0
    assert F(0.5)[0, 0] == 3.0
    assert F(1.0)[0, 0] == 3.0


def test_sampled_is_linear_between_nodes():
    F = MatrixFunction.sampled([[[0.0]], [[2.0]], [[0.0]]])
    assert F(0.25)[0, 0] == pytest.approx(1.0)
    assert F(0.75)[0, 0] == pytest.approx(1.0)


def test_shift_examples():
    Z = MatrixFunction.constant(np.zeros((2, 2)))
    assert np.allclose(shift(Z, -1.0)(0.3), -np.eye(2))
    D = MatrixFunction.constant(np.diag([2.0, 3.0]))
    assert np.allclose(shift(D, -2.0)(0.9), np.diag([0.0, 1.0]))


@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(0, 1))
def test_shift_is_additive(a, b, t):
    F = MatrixFunction.sampled([[[1.0, 0.5], [0.5, -2.0]], [[3.0, 0.0], [0.0, 1.0]]])
    lhs = shift(shift(F, a), b)(t)
    rhs = shift(F, a + b)(t)
    assert np.allclose(lhs, rhs, atol=1e-12 * (1 + abs(a) + abs(b)))


def test_path_examples():
    B = MatrixFunction.constant(np.diag([1.0, 2.0]))
    p = path(B, B)
    assert not p.monotone and p.eps == 0.0
    p = path(np.zeros((1, 1)), np.eye(1))
    assert p.monotone and p.eps == pytest.approx(1.0)
    assert not path(np.zeros((2, 2)), np.diag([1.0, -1.0])).monotone
    with pytest.raises(ShapeMismatch):
        path(np.zeros((1, 1)), np.zeros((2, 2)))


def test_pointwise_leq():
    lo = MatrixFunction.piecewise([0.3], [[[1.0]], [[2.0]]])
    hi = MatrixFunction.constant([[2.0]])
    assert pointwise_leq(lo, hi)
    assert not pointwise_leq(hi, lo)


def test_parse_number_expressions():
    assert parse_number("pi^2") == pytest.approx(PI**2)
    assert parse_number("9*pi^2 - 0.1") == pytest.approx(9 * PI**2 - 0.1)
    with pytest.raises(ConfigError):
        parse_number("__import__('os')")


@pytest.mark.parametrize(
    "spec",
    [
        {"kind": "second_order", "n": 1, "B": {"constant": [[3.0]]}, "bc": {"type": "dirichlet"}},
        {"kind": "second_order", "n": 2, "B": {"piecewise": {"breaks": [0.25], "values": [[[1, 0], [0, 2]], [[0, 1], [1, 0]]]}},
         "bc": {"type": "antiperiodic"}},
        {"kind": "second_order", "n": 1, "Lambda": {"sampled": {"values": [[[1.0]], [[2.0]], [[1.0]]]}},
         "bc": {"type": "periodic"}},
        {"kind": "first_order", "n": 1, "B": {"constant": [[1, 0], [0, 1]]}, "bc": {"type": "bolza", "alpha": 0.3, "beta": 2.0}},
        {"kind": "first_order", "n": 1, "bc": {"type": "symplectic", "P": [[1, 1], [0, 1]], "anchor": 3}},
        {"kind": "elliptic", "geometry": {"rectangle": {"L1": 1.0, "L2": 2.0}}, "b": {"constant": 5.0}},
        {"kind": "elliptic", "geometry": {"interval": {"length": 2.0}}, "b": {"sampled": {"values": [0.0, 1.0, 4.0]}}},
    ],
)
def test_json_round_trip_and_idempotence(spec):
    p = validate(spec)
    doc = json.loads(json.dumps(to_json(p)))
    q = validate(doc)
    assert to_json(q) == to_json(p)
    assert to_json(validate(q)) == to_json(q)


def test_second_order_with_B_keeps_template():
    p = SecondOrderProblem(MatrixFunction.constant([[2.0]]), MatrixFunction.constant([[0.0]]), SturmLiouville(0.0, PI))
    q = p.with_B(MatrixFunction.constant([[7.0]]))
    assert q.Lambda is p.Lambda and q.bc is p.bc
    assert q.B(0.5)[0, 0] == 7.0
