import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from app.core.errors import DomainError
from app.models.path import MsePath
from app.models.system import MimoConfig, SystemConfig
from app.services.pathfinder import straight_line_path
from app.services.transfer import (
    EseJump,
    EseSegment,
    dec_target,
    ese_snr,
    ese_transfer_on_path,
    lmmse_gains,
    mimo_as_siso,
    mimo_lmmse_snr,
    sic_thresholds,
    snr_bounds,
    straight_line_dec_target,
)

CASE_2_PATH = MsePath.from_points([[1, 1, 1], [0.2145, 0.2056, 0], [0, 0.0618, 0], [0, 0, 0]])


def test_ese_snr_at_the_extremes(three_user):
    np.testing.assert_allclose(ese_snr(three_user, 1.0), [1 / 13, 2 / 12, 4 / 10])
    np.testing.assert_allclose(ese_snr(three_user, 0.0), [1 / 7, 2 / 7, 4 / 7])


def test_ese_snr_matches_direct_loop(three_user):
    v = np.array([0.5, 0.2, 0.2])
    g = three_user.gains
    expected = [g[k] / (sum(g[i] * v[i] for i in range(3) if i != k) + 1.0) for k in range(3)]
    np.testing.assert_allclose(ese_snr(three_user, v), expected, rtol=1e-14)
    assert ese_snr(three_user, v)[0] == pytest.approx((1 / 7) / (1 + 0.2 * 2 / 7 + 0.2 * 4 / 7))


@pytest.mark.parametrize("v", [[1.2, 0.5, 0.5], [0.5, -0.1, 0.5], [0.5, 0.5]])
def test_ese_snr_rejects_bad_vectors(three_user, v):
    with pytest.raises(DomainError):
        ese_snr(three_user, v)


def test_snr_bounds(three_user):
    assert snr_bounds(three_user, 0) == pytest.approx((1 / 13, 1 / 7))
    assert snr_bounds(three_user, 2) == pytest.approx((4 / 10, 4 / 7))
    single = SystemConfig(K=1, g=(2.0,), noise_var=0.5)
    assert snr_bounds(single, 0) == pytest.approx((4.0, 4.0))
    with pytest.raises(DomainError):
        snr_bounds(three_user, 3)


def test_sic_thresholds():
    two = SystemConfig(K=2, g=(1.0, 1.0), noise_var=1.0)
    np.testing.assert_allclose(sic_thresholds(two, [0, 1]), [0.5, 1.0])
    one = SystemConfig(K=1, g=(3.0,), noise_var=2.0)
    np.testing.assert_allclose(sic_thresholds(one, [0]), [1.5])


def test_sic_thresholds_reverse_order(three_user):
    np.testing.assert_allclose(
        sic_thresholds(three_user, [2, 1, 0]),
        [1 / 7, (2 / 7) / (1 + 1 / 7), (4 / 7) / (1 + 3 / 7)],
    )
    with pytest.raises(DomainError):
        sic_thresholds(three_user, [0, 0, 1])


def test_straight_line_transfer_is_one_segment(three_user):
    for k in range(3):
        ese = ese_transfer_on_path(three_user, straight_line_path(3), k)
        assert len(ese.pieces) == 1
        assert isinstance(ese.pieces[0], EseSegment)
        rho_min, rho_max = snr_bounds(three_user, k)
        assert ese(1.0) == pytest.approx(rho_min)
        assert ese(0.0) == pytest.approx(rho_max)
        # straight line: rho_k = g_k / ((G - g_k) v + sigma^2)
        g = three_user.g[k]
        assert ese(0.4) == pytest.approx(g / ((1.0 - g) * 0.4 + 1.0))


def test_case_two_path_has_vertical_piece_for_second_user(three_user):
    ese = ese_transfer_on_path(three_user, CASE_2_PATH, 1)
    assert len(ese.pieces) == 3
    jumps = [p for p in ese.pieces if isinstance(p, EseJump)]
    assert not jumps
    # user 3's curve is flat at v = 0 on the last two segments
    ese3 = ese_transfer_on_path(three_user, CASE_2_PATH, 2)
    jumps3 = [p for p in ese3.pieces if isinstance(p, EseJump)]
    assert len(jumps3) == 2
    assert jumps3[-1].rho_hi == pytest.approx(ese3.rho_max)


def test_dec_target_branches(three_user):
    psi = dec_target(three_user, straight_line_path(3), 0)
    assert psi(psi.rho_min * 0.5) == 1.0
    assert psi(psi.rho_max * 2.0) == 0.0


def test_dec_target_inverts_transfer(three_user):
    rng = np.random.default_rng(5)
    for k in range(3):
        ese = ese_transfer_on_path(three_user, CASE_2_PATH, k)
        psi = dec_target(three_user, CASE_2_PATH, k)
        for v in rng.uniform(0.0, 1.0, size=50):
            if any(isinstance(p, EseJump) and p.v == v for p in ese.pieces):
                continue
            assert ese(v) == pytest.approx(ese(psi(ese(v))), rel=1e-9)


def test_dec_target_round_trip_on_straight_line(three_user):
    rng = np.random.default_rng(8)
    ese = ese_transfer_on_path(three_user, straight_line_path(3), 1)
    psi = dec_target(three_user, straight_line_path(3), 1)
    v = rng.uniform(0.0, 1.0, size=50)
    np.testing.assert_allclose(psi(ese(v)), v, atol=1e-9)
    np.testing.assert_allclose(straight_line_dec_target(three_user, 1, ese(v)), v, atol=1e-9)


def test_transfer_sample_columns(three_user):
    df = ese_transfer_on_path(three_user, CASE_2_PATH, 0).sample(8)
    assert list(df.columns) == ["user", "v", "rho"]
    assert (df["user"] == 1).all()
    ese = ese_transfer_on_path(three_user, CASE_2_PATH, 0)
    assert df["rho"].iloc[0] == pytest.approx(ese.rho_min)
    assert df["rho"].iloc[-1] == pytest.approx(ese.rho_max)


def test_siso_embedding_reproduces_ese_snr(three_user):
    mimo = mimo_as_siso(three_user)
    for v in ([1.0, 1.0, 1.0], [0.3, 0.6, 0.1], [0.0, 0.0, 0.0]):
        np.testing.assert_allclose(mimo_lmmse_snr(mimo, v), ese_snr(three_user, v), rtol=1e-12)


def test_lmmse_gains_match_direct_inverse():
    rng = np.random.default_rng(3)
    H = [(rng.normal(size=(4, 1)) + 1j * rng.normal(size=(4, 1))) / np.sqrt(2) for _ in range(2)]
    mimo = MimoConfig.from_arrays(H, [1.0, 0.5], noise_var=0.8)
    v = np.array([0.3, 0.7])
    Hs = [np.sqrt(p) * h for p, h in zip(mimo.P, H)]
    R = 0.8 * np.eye(4) + sum(vk * h @ h.conj().T for vk, h in zip(v, Hs))
    direct = [float(np.real(h.conj().T @ np.linalg.inv(R) @ h)[0, 0]) for h in Hs]
    np.testing.assert_allclose(lmmse_gains(mimo, v), direct, rtol=1e-10)


def _random_mimo(seed: int, n_rx: int = 4, K: int = 6, cols: int = 1) -> MimoConfig:
    rng = np.random.default_rng(seed)
    H = [(rng.normal(size=(n_rx, cols)) + 1j * rng.normal(size=(n_rx, cols))) / np.sqrt(2) for _ in range(K)]
    return MimoConfig.from_arrays(H, rng.uniform(0.2, 1.5, size=K), noise_var=float(rng.uniform(0.3, 2.0)))


def _log_det_covariance(mimo: MimoConfig, v: np.ndarray) -> float:
    R = mimo.noise_var * np.eye(mimo.n_rx, dtype=complex)
    for vk, p, Hk in zip(v, mimo.P, mimo.channels()):
        R += vk * p * (Hk @ Hk.conj().T)
    return float(np.linalg.slogdet(R)[1])


@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_lmmse_gains_are_the_log_det_gradient(seed):
    mimo = _random_mimo(seed)
    v = np.random.default_rng(seed + 1).uniform(0.05, 0.95, size=mimo.K)
    step = 1e-6
    grad = []
    for k in range(mimo.K):
        e = np.zeros(mimo.K)
        e[k] = step
        grad.append((_log_det_covariance(mimo, v + e) - _log_det_covariance(mimo, v - e)) / (2 * step))
    np.testing.assert_allclose(lmmse_gains(mimo, v), grad, rtol=1e-5, atol=1e-7)


@given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=1, max_value=3))
def test_lmmse_snr_without_interference_is_the_matched_filter(seed, cols):
    mimo = _random_mimo(seed, cols=cols)
    matched = [p * np.sum(np.abs(Hk) ** 2) / mimo.noise_var for p, Hk in zip(mimo.P, mimo.channels())]
    np.testing.assert_allclose(mimo_lmmse_snr(mimo, np.zeros(mimo.K)), matched, rtol=1e-10)
    if cols == 1:
        # residual interference can only lower the SNR
        assert np.all(mimo_lmmse_snr(mimo, np.full(mimo.K, 0.5)) <= np.asarray(matched) * (1 + 1e-12))
