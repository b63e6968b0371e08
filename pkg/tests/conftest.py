import math
import re
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spectra_index.problems import (
    GeneralizedPeriodic,
    MatrixFunction,
    SecondOrderProblem,
    SturmLiouville,
)

settings.register_profile(
    "repro",
    deadline=None,
    derandomize=True,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repro")

PI = math.pi


def second_order(B, *, Lambda=None, bc=None):
    """Constant-coefficient second-order problem; Dirichlet by default."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = B.shape[0]
    Lam = np.eye(n) if Lambda is None else np.atleast_2d(Lambda)
    bc = SturmLiouville(0.0, PI) if bc is None else bc
    return SecondOrderProblem(MatrixFunction.constant(Lam), MatrixFunction.constant(B), bc).validate()


def random_symmetric(rng, n, lo, hi):
    """Random symmetric matrix with eigenvalues uniform in [lo, hi]."""
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    return Q @ np.diag(rng.uniform(lo, hi, n)) @ Q.T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    RESULTS = getattr(module, "RESULTS", None)
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=lambda k: (int(re.match(r"\d+", str(k)).group()), str(k))):
        ok, detail = RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
