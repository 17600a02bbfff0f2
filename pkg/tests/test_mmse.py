import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from app.core.errors import DomainError
from app.models.system import Modulation
from app.services.mmse import (
    GAUSSIAN,
    QPSK,
    CurveKind,
    MmseCurve,
    j_fast,
    j_func,
    j_inv,
    j_inv_fast,
    mmse_gaussian,
    mmse_inverse,
    mmse_qpsk,
    mmse_qpsk_fast,
)


def test_gaussian_mmse_values():
    assert mmse_gaussian(0.0) == 1.0
    assert mmse_gaussian(1.0) == 0.5
    assert mmse_gaussian(1 / 7) == pytest.approx(0.875)


def test_negative_snr_is_a_domain_error():
    with pytest.raises(DomainError):
        mmse_gaussian(-0.1)
    with pytest.raises(DomainError):
        mmse_qpsk(-1.0)
    with pytest.raises(DomainError):
        j_func(-0.5)


def test_qpsk_mmse_endpoints():
    assert mmse_qpsk(0.0) == 1.0
    assert mmse_qpsk(100.0) < 1e-8


def test_qpsk_mmse_agrees_with_trapezoid_rule():
    rho = 1.0
    z = np.linspace(-30.0, 30.0, 600001)
    phi = np.exp(-0.5 * z**2) / math.sqrt(2 * math.pi)
    reference = 1.0 - np.trapezoid(phi * np.tanh(rho + math.sqrt(rho) * z), z)
    assert mmse_qpsk(rho) == pytest.approx(reference, abs=1e-8)


def test_qpsk_never_beats_gaussian():
    for rho in np.linspace(0.0, 100.0, 401):
        assert mmse_qpsk(rho) <= mmse_gaussian(rho) + 1e-12


def test_qpsk_mmse_strictly_decreasing_on_grid():
    values = [mmse_qpsk(r) for r in np.linspace(0.0, 20.0, 81)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_table_matches_quadrature():
    for rho in (0.01, 0.3, 1.0, 4.0, 12.0):
        assert mmse_qpsk_fast(rho) == pytest.approx(mmse_qpsk(rho), rel=1e-6)


def test_mmse_inverse_examples():
    assert mmse_inverse(GAUSSIAN, 0.5) == pytest.approx(1.0)
    assert mmse_inverse(GAUSSIAN, 1.0) == 0.0
    assert mmse_inverse(QPSK, mmse_qpsk(2.0)) == pytest.approx(2.0, abs=1e-8)


@pytest.mark.parametrize("v", [0.0, -0.1, 1.5])
def test_mmse_inverse_rejects_out_of_range(v):
    with pytest.raises(DomainError):
        mmse_inverse(QPSK, v)


def test_bpsk_curve_is_qpsk_at_double_snr():
    bpsk = MmseCurve.for_modulation(Modulation.BPSK)
    assert bpsk.kind is CurveKind.BPSK
    assert bpsk.exact(0.7) == pytest.approx(mmse_qpsk(1.4), abs=1e-12)


def test_combined_gaussian_curve_merges_snrs():
    # f(rho + f^-1(v)) for the Gaussian curve is 1 / (1 + rho + 1/v - 1)
    assert float(GAUSSIAN.combined(1.0, 0.5)) == pytest.approx(1.0 / 3.0)


def test_j_function_endpoints():
    assert j_func(0.0) == 0.0
    assert 1.0 - j_func(100.0) < 1e-10


def test_j_function_matches_monte_carlo():
    rng = np.random.default_rng(2024)
    sigma = 2.0
    llr = rng.normal(sigma**2 / 2.0, sigma, size=2_000_000)
    samples = np.logaddexp(0.0, -llr) / math.log(2.0)
    mc = 1.0 - samples.mean()
    stderr = samples.std() / math.sqrt(samples.size)
    assert abs(j_func(sigma) - mc) < 4 * stderr


def test_j_inverse_round_trips():
    assert j_inv(0.0) == 0.0
    assert j_inv(j_func(1.5)) == pytest.approx(1.5, abs=1e-6)
    sigma = j_inv(0.9999)
    assert math.isfinite(sigma)
    assert j_func(sigma) == pytest.approx(0.9999, abs=1e-9)


@pytest.mark.parametrize("I", [-0.1, 1.0, 1.2])
def test_j_inverse_rejects_out_of_range(I):
    with pytest.raises(DomainError):
        j_inv(I)


@given(st.floats(min_value=0.01, max_value=0.995))
def test_fast_j_pair_round_trips(I):
    assert float(j_fast(j_inv_fast(I))) == pytest.approx(I, abs=1e-5)


def test_fast_j_saturates():
    assert j_fast(np.inf) == 1.0
    assert j_inv_fast(1.0) == np.inf
