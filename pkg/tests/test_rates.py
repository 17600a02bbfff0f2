import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from app.core.errors import DomainError, InfeasibleTargetError
from app.models.path import MsePath
from app.models.results import RateMethod
from app.models.system import MimoConfig, RateTuple, SystemConfig
from app.services.mmse import GAUSSIAN, QPSK
from app.services.pathfinder import sic_corner_path, straight_line_path
from app.services.rates import (
    in_capacity_region,
    mimo_sum_rate,
    mimo_user_rates,
    qpsk_capacity,
    qpsk_equal_power_sum_rate,
    region_constraints,
    require_inside,
    sum_rate_capacity,
    user_rates_closed_form,
    user_rates_numeric,
)
from app.services.transfer import mimo_as_siso


def test_sum_rate_capacity(three_user):
    assert sum_rate_capacity(three_user) == pytest.approx(1.0)
    assert sum_rate_capacity(SystemConfig(K=1, g=(1.0,), noise_var=1.0)) == pytest.approx(1.0)
    assert sum_rate_capacity(SystemConfig(K=1, g=(1.0,), noise_var=1e12)) < 1e-11


def test_straight_line_rates_are_proportional_to_power(three_user):
    report = user_rates_closed_form(three_user, straight_line_path(3))
    np.testing.assert_allclose(report.rates, [0.1429, 0.2857, 0.5714], atol=5e-4)
    assert report.method is RateMethod.CLOSED_FORM_GAUSSIAN


def test_intermediate_breakpoint_rates(three_user):
    path = MsePath.from_points([[1, 1, 1], [0.5, 0.2, 0.2], [0, 0, 0]])
    report = user_rates_closed_form(three_user, path)
    np.testing.assert_allclose(report.rates, [0.157, 0.281, 0.562], atol=5e-4)


def test_reference_solved_path_meets_its_target(three_user):
    path = MsePath.from_points([[1, 1, 1], [0.2145, 0.2056, 0], [0, 0.0618, 0], [0, 0, 0]])
    report = user_rates_closed_form(three_user, path)
    np.testing.assert_allclose(report.rates, [0.15, 0.30, 0.55], atol=5e-4)


def test_single_user_rate():
    cfg = SystemConfig(K=1, g=(3.0,), noise_var=1.0)
    assert user_rates_closed_form(cfg, straight_line_path(1)).rates[0] == pytest.approx(2.0)


def test_sic_corner_rates(three_user):
    report = user_rates_closed_form(three_user, sic_corner_path(3, [0, 1, 2]))
    # user 1 decoded first against users 2 and 3, user 3 last against noise only
    expected = [math.log2(1 + (1 / 7) / (6 / 7 + 1)), math.log2(1 + (2 / 7) / (4 / 7 + 1)), math.log2(1 + 4 / 7)]
    np.testing.assert_allclose(report.rates, expected, rtol=1e-12)


def test_sum_rate_is_path_independent(three_user, monotone_points):
    rng = np.random.default_rng(1)
    for _ in range(100):
        path = MsePath.from_points(monotone_points(rng, 3, int(rng.integers(1, 6))))
        assert user_rates_closed_form(three_user, path).sum_rate == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("K", [2, 3, 5])
def test_numeric_gaussian_integral_matches_closed_form(K, monotone_points):
    rng = np.random.default_rng(K)
    g = rng.uniform(0.2, 1.0, size=K)
    cfg = SystemConfig(K=K, g=tuple(g / g.sum()), noise_var=float(rng.uniform(0.3, 2.0)))
    for _ in range(4):
        path = MsePath.from_points(monotone_points(rng, K, int(rng.integers(1, 4))))
        numeric = user_rates_numeric(cfg, path, GAUSSIAN)
        closed = user_rates_closed_form(cfg, path)
        np.testing.assert_allclose(numeric.rates, closed.rates, atol=1e-6)
        assert numeric.method is RateMethod.NUMERIC_GAUSSIAN


@pytest.mark.slow
@pytest.mark.parametrize("K", [2, 3, 5])
def test_numeric_gaussian_integral_on_many_paths(K, monotone_points):
    rng = np.random.default_rng(100 + K)
    cfg = SystemConfig(K=K, g=tuple([1.0 / K] * K), noise_var=1.0)
    for _ in range(20):
        path = MsePath.from_points(monotone_points(rng, K, int(rng.integers(1, 6))))
        np.testing.assert_allclose(
            user_rates_numeric(cfg, path, GAUSSIAN).rates, user_rates_closed_form(cfg, path).rates, atol=1e-6
        )


def test_qpsk_rates_stay_below_gaussian(three_user):
    qpsk = user_rates_numeric(three_user, straight_line_path(3), QPSK)
    assert qpsk.method is RateMethod.NUMERIC_QPSK
    assert qpsk.sum_rate < 1.0
    assert qpsk.sum_rate > 0.9


def test_single_user_qpsk_saturates_at_two_bits():
    assert qpsk_capacity(0.0) == 0.0
    assert qpsk_capacity(1000.0) == pytest.approx(2.0, abs=1e-4)
    with pytest.raises(DomainError):
        qpsk_capacity(-1.0)


def test_qpsk_gap_closes_with_more_users():
    sums = [qpsk_equal_power_sum_rate(K, 0.0) for K in (1, 2, 4, 8, 16)]
    assert all(a < b for a, b in zip(sums, sums[1:]))
    assert sums[-1] == pytest.approx(1.0, abs=0.02)
    assert sums[-1] <= 1.0


def test_region_constraint_bounds(three_user):
    bounds = {c.subset: c.bound for c in region_constraints(three_user)}
    expected = {
        (0,): 0.1926, (1,): 0.3626, (2,): 0.6521,
        (0, 1): 0.5146, (0, 2): 0.7776, (1, 2): 0.8931,
    }
    for subset, value in expected.items():
        assert bounds[subset] == pytest.approx(value, abs=5e-4)
    assert bounds[(0, 1, 2)] == pytest.approx(1.0)


def test_region_membership(three_user):
    inside = in_capacity_region(three_user, RateTuple(rates=(0.15, 0.30, 0.55)))
    assert inside.inside
    assert inside.on_dominant_face
    assert in_capacity_region(three_user, RateTuple(rates=(0.0, 0.0, 0.0))).inside

    outside = in_capacity_region(three_user, RateTuple(rates=(0.20, 0.30, 0.50)))
    assert not outside.inside
    assert [c.subset for c in outside.binding] == [(0,)]
    assert outside.binding[0].bound == pytest.approx(0.1926, abs=5e-4)


def test_require_inside_names_the_violated_subset(three_user):
    require_inside(in_capacity_region(three_user, RateTuple(rates=(0.1, 0.1, 0.1))))
    with pytest.raises(InfeasibleTargetError) as exc:
        require_inside(in_capacity_region(three_user, RateTuple(rates=(0.20, 0.30, 0.50))))
    assert exc.value.subset == (0,)
    assert "R_1" in str(exc.value)


def test_region_report_frame(three_user):
    df = in_capacity_region(three_user, RateTuple(rates=(0.15, 0.30, 0.55))).to_frame()
    assert len(df) == 7


def test_region_rejects_wrong_length(three_user):
    with pytest.raises(DomainError):
        in_capacity_region(three_user, RateTuple(rates=(0.1, 0.1)))


def test_scalar_mimo_reduces_to_siso(three_user):
    mimo = mimo_as_siso(three_user)
    assert mimo_sum_rate(mimo) == pytest.approx(sum_rate_capacity(three_user), rel=1e-12)
    report = mimo_user_rates(mimo, straight_line_path(3))
    np.testing.assert_allclose(report.rates, user_rates_closed_form(three_user, straight_line_path(3)).rates, atol=1e-8)


def test_orthogonal_mimo_sum_rate():
    H = [np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])]
    mimo = MimoConfig.from_arrays(H, [1.0, 1.0], noise_var=1.0)
    assert mimo_sum_rate(mimo) == pytest.approx(2.0)


def test_mimo_rates_are_path_independent(monotone_points):
    rng = np.random.default_rng(17)
    for trial in range(3):
        H = [(rng.normal(size=(4, 1)) + 1j * rng.normal(size=(4, 1))) / np.sqrt(2) for _ in range(6)]
        mimo = MimoConfig.from_arrays(H, rng.uniform(0.2, 1.0, size=6), noise_var=1.0)
        total = mimo_sum_rate(mimo)
        for _ in range(3):
            path = MsePath.from_points(monotone_points(rng, 6, int(rng.integers(1, 4))))
            assert mimo_user_rates(mimo, path).sum_rate == pytest.approx(total, abs=1e-4)


@given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=1, max_value=2))
def test_mimo_user_rates_add_up_to_the_sum_rate(seed, cols):
    rng = np.random.default_rng(seed)
    K, n_rx = 3, 4
    H = [(rng.normal(size=(n_rx, cols)) + 1j * rng.normal(size=(n_rx, cols))) / np.sqrt(2) for _ in range(K)]
    mimo = MimoConfig.from_arrays(H, rng.uniform(0.2, 2.0, size=K), noise_var=float(rng.uniform(0.5, 2.0)))
    report = mimo_user_rates(mimo, straight_line_path(K))
    assert all(r > 0.0 for r in report.rates)
    assert report.sum_rate == pytest.approx(mimo_sum_rate(mimo), abs=1e-6)
