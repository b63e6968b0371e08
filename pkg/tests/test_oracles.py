import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectra_index.errors import DomainError
from spectra_index.index import index_sweep
from spectra_index.oracles import (
    ANTIPERIODIC,
    PERIODIC,
    ConstantSpectrum,
    Scalar,
    calibrate_scalar,
    dirichlet_constant,
    periodic_constant,
    interval_constant,
    rectangle_constant,
)
from spectra_index.problems import GeneralizedPeriodic

from conftest import PI, second_order


@pytest.mark.parametrize("n", [1, 2, 3])
def test_periodic_zero_spectrum(n):
    assert periodic_constant(PERIODIC, ConstantSpectrum((0.0,) * n)) == (0, n)


def test_example_values():
    assert periodic_constant(PERIODIC, ConstantSpectrum((5.0, 39.5))) == (4, 0)
    assert periodic_constant(ANTIPERIODIC, ConstantSpectrum((PI**2,))) == (0, 2)
    assert dirichlet_constant(ConstantSpectrum((0.0,))) == (0, 0)
    assert dirichlet_constant(ConstantSpectrum((PI**2,))) == (0, 1)
    assert dirichlet_constant(ConstantSpectrum((15.0, 50.0))) == (3, 0)
    assert rectangle_constant(0.0, 1.0, 1.0) == (0, 0)
    assert rectangle_constant(2.5 * PI**2, 1.0, 1.0) == (1, 0)
    assert rectangle_constant(2 * PI**2, 1.0, 1.0) == (0, 1)
    assert interval_constant(PI**2, 1.0) == (0, 1)


def test_scale_enters_periodic_thresholds():
    # 4 lam pi^2 with lam = 0.5 is 2 pi^2 ~ 19.74
    assert periodic_constant(PERIODIC, ConstantSpectrum((20.0,), 0.5)) == (3, 0)
    assert periodic_constant(PERIODIC, ConstantSpectrum((19.0,), 0.5)) == (1, 0)


def test_domain_errors():
    for a in (0.0, 1.0, -1.0):
        with pytest.raises(DomainError):
            periodic_constant(Scalar(a), ConstantSpectrum((1.0,)))
    with pytest.raises(DomainError):
        dirichlet_constant(ConstantSpectrum((1.0,), 2.0))
    with pytest.raises(DomainError):
        ConstantSpectrum((1.0,), 0.0)


@given(st.lists(st.floats(-50, 500), min_size=1, max_size=3), st.sampled_from([0.5, 1.0, 2.0]))
def test_oracle_counts_are_monotone(alphas, lam):
    lo = ConstantSpectrum(tuple(alphas), lam)
    hi = ConstantSpectrum(tuple(a + 7.0 for a in alphas), lam)
    for case in (PERIODIC, ANTIPERIODIC):
        i1, n1 = periodic_constant(case, lo)
        i2, _ = periodic_constant(case, hi)
        assert i1 + n1 <= i2


def test_scalar_calibration_fixes_the_j_range():
    rng = np.random.default_rng(7)
    instances = [(a, ConstantSpectrum(tuple(rng.uniform(-10, 120, 2)), lam))
                 for a in (2.0, -3.0, 0.5) for lam in (0.5, 1.0)]
    report = calibrate_scalar(instances)
    assert report.j_start == 0
    assert report.matches[0] == len(instances)
    assert report.discrepancies == []


def test_calibration_reports_discrepancies():
    instances = [(2.0, ConstantSpectrum((30.0,)))]
    report = calibrate_scalar(instances, engine=lambda a, spec: (99, 0))
    assert report.j_start is None
    assert report.discrepancies and report.discrepancies[0]["engine"] == [99, 0]


def test_mawhin_willem_case_matches_engine():
    spec = ConstantSpectrum((3.0, 45.0))
    r = index_sweep(second_order(np.diag(spec.eigenvalues), bc=GeneralizedPeriodic.periodic(2)))
    assert (r.i, r.nu) == periodic_constant(PERIODIC, spec)
