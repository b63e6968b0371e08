"""Nonlinear boundary value problems: certification, homotopy collocation, convex duality."""

from .certify import CERTIFIED, INCONCLUSIVE, REFUTED, THEOREMS, CertificateReport, certify
from .collocation import Solution, l2_norm, solve_bvp
from .duality import ConjugatePoint, ConvexFunction, cross_validate, dual_solve, fenchel_conjugate
from .models import REGISTRY, NonlinearProblem, nonlinearity

__all__ = [
    "CERTIFIED",
    "INCONCLUSIVE",
    "REFUTED",
    "REGISTRY",
    "THEOREMS",
    "CertificateReport",
    "ConjugatePoint",
    "ConvexFunction",
    "NonlinearProblem",
    "Solution",
    "certify",
    "cross_validate",
    "dual_solve",
    "fenchel_conjugate",
    "l2_norm",
    "nonlinearity",
    "solve_bvp",
]
