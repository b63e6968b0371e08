"""Index and nullity of linear Hamiltonian and elliptic boundary value problems.

The package counts the spectral data of ``(Lambda x')' + B x = 0`` with
Sturm-Liouville or generalized periodic ends, of ``J x' + B x = 0`` with
Bolza or symplectic ends and of ``Delta u + b u = 0`` on intervals and
rectangles, and uses these counts to check existence hypotheses for
asymptotically linear problems and to solve them.
"""

__version__ = "0.1.0"

from .elliptic import elliptic_index
from .errors import ConfigError, NumericalError, SpectraIndexError
from .galerkin import galerkin_count
from .index import (
    IndexResult,
    ekeland_index,
    index_first_order,
    index_sweep,
    relative_index,
    relative_index_monotone,
)
from .oracles import calibrate_scalar, dirichlet_constant, example38, periodic_constant, rectangle_constant
from .problems import (
    Bolza,
    EllipticProblem,
    FirstOrderProblem,
    GeneralizedPeriodic,
    Interval,
    MatrixFunction,
    Rectangle,
    ScalarField,
    SecondOrderProblem,
    SturmLiouville,
    Symplectic,
    validate,
)
from .spectral import monodromy, nullity

__all__ = [
    "__version__",
    "Bolza",
    "ConfigError",
    "EllipticProblem",
    "FirstOrderProblem",
    "GeneralizedPeriodic",
    "IndexResult",
    "Interval",
    "MatrixFunction",
    "NumericalError",
    "Rectangle",
    "ScalarField",
    "SecondOrderProblem",
    "SpectraIndexError",
    "SturmLiouville",
    "Symplectic",
    "calibrate_scalar",
    "dirichlet_constant",
    "ekeland_index",
    "elliptic_index",
    "example38",
    "periodic_constant",
    "galerkin_count",
    "index_first_order",
    "index_sweep",
    "monodromy",
    "nullity",
    "rectangle_constant",
    "relative_index",
    "relative_index_monotone",
    "validate",
]
