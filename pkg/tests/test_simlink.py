from dataclasses import replace

import numpy as np
import pytest

from app.core.errors import DomainError
from app.models.path import MsePath
from app.models.profile import DegreeProfile
from app.models.system import Modulation, SystemConfig
from app.services.evolution import run_ga_de
from app.services.ldpc import build_ldpc
from app.services.pathfinder import scm_layer_split
from app.services.scenarios import CASE_1, HIGH_RATE, LLR_HISTOGRAM
from app.services.simlink import (
    ROLE_INFO,
    ROLE_NOISE,
    HistogramSpec,
    LinkSettings,
    amplitudes,
    capture_llr_histograms,
    ese_llr,
    run_link,
    run_scm_link,
    simulate_block,
    stream,
    wilson_interval,
)

TWO_USER = SystemConfig(K=2, g=(0.2, 0.8), noise_var=1.0, modulation=Modulation.QPSK, seed=4)


@pytest.fixture(scope="module")
def two_codes():
    profile = DegreeProfile.regular(3, 6)
    return [build_ldpc(profile, n=204, seed=1, stream=k) for k in range(2)]


def test_streams_are_keyed():
    a = stream(9, 3, 1, ROLE_INFO).integers(0, 1 << 30, size=4)
    b = stream(9, 3, 1, ROLE_INFO).integers(0, 1 << 30, size=4)
    c = stream(9, 3, 1, ROLE_NOISE).integers(0, 1 << 30, size=4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_amplitudes(three_user):
    np.testing.assert_allclose(amplitudes(three_user), np.sqrt(np.array([1, 2, 4]) / 14.0))
    bpsk = three_user.model_copy(update={"modulation": Modulation.BPSK})
    np.testing.assert_allclose(amplitudes(bpsk), np.sqrt(np.array([1, 2, 4]) / 7.0))


def test_amplitudes_reject_gaussian(gaussian_three_user):
    with pytest.raises(DomainError):
        amplitudes(gaussian_three_user)


def test_own_feedback_does_not_enter_own_llr():
    rng = np.random.default_rng(1)
    amps = np.array([0.3, 0.5, 0.8])
    y = rng.normal(size=50)
    xhat = np.tanh(rng.normal(size=(3, 50)))
    base = ese_llr(y, xhat, amps, noise_dim=0.1)
    for k in range(3):
        moved = xhat.copy()
        moved[k] = np.tanh(rng.normal(size=50))
        np.testing.assert_allclose(ese_llr(y, moved, amps, noise_dim=0.1)[k], base[k], rtol=1e-10, atol=1e-12)


def test_perfect_feedback_leaves_noise_only_llr():
    amps = np.array([0.4, 0.9])
    x = np.array([[1.0, -1.0, 1.0], [-1.0, -1.0, 1.0]])
    y = amps @ x + np.array([0.05, -0.02, 0.01])
    llr = ese_llr(y, x, amps, noise_dim=0.25)
    expected0 = 2.0 * amps[0] * (y - amps[1] * x[1]) / 0.25
    np.testing.assert_allclose(llr[0], expected0)


def test_frame_average_uses_one_variance_per_user():
    amps = np.array([0.5, 0.5])
    xhat = np.array([[0.9, 0.1, 0.5], [0.0, 0.0, 0.0]])
    y = np.array([0.2, -0.1, 0.4])
    llr = ese_llr(y, xhat, amps, noise_dim=0.1, frame_average=True)
    # user 1 sees user 0's averaged residual variance in every position
    resid = 0.25 * np.mean(1.0 - xhat[0] ** 2) + 0.1
    np.testing.assert_allclose(llr[1], 2.0 * 0.5 * (y - 0.5 * xhat[0]) / resid)


def test_wilson_interval():
    assert wilson_interval(0, 0) == (0.0, 1.0)
    lo, hi = wilson_interval(5, 100)
    assert 0.0 < lo < 0.05 < hi < 1.0
    lo, hi = wilson_interval(0, 1000)
    assert lo == pytest.approx(0.0, abs=1e-12)
    assert 0.0 < hi < 0.01


def test_block_is_reproducible(two_codes):
    cfg = TWO_USER.at_snr_db(3.0)
    settings = LinkSettings(max_outer=8)
    a = simulate_block(cfg, two_codes, 5, settings)
    b = simulate_block(cfg, two_codes, 5, settings)
    np.testing.assert_array_equal(a.bit_errors, b.bit_errors)
    assert a.iterations == b.iterations
    np.testing.assert_array_equal(a.v_track, b.v_track)


def test_code_count_and_length_checked(two_codes):
    short = build_ldpc(DegreeProfile.regular(3, 6), n=102, seed=1)
    with pytest.raises(DomainError):
        run_link(TWO_USER, two_codes[:1], 10.0)
    with pytest.raises(DomainError):
        run_link(TWO_USER, [two_codes[0], short], 10.0)


def test_high_snr_is_error_free(two_codes):
    run = run_link(TWO_USER, two_codes, 20.0, LinkSettings(block_budget=4, max_outer=60))
    assert run.blocks == 4
    assert all(u.bit_errors == 0 for u in run.users)
    assert run.users[0].bits == 4 * two_codes[0].k
    assert run.v_trajectory.shape[1] == 2
    frame = run.to_frame()
    assert list(frame.columns) == ["snr_dB", "user", "ber", "fer", "blocks", "ci_lo", "ci_hi"]
    assert frame["user"].tolist() == [1, 2]


@pytest.mark.parametrize("target_errors", [1, 10_000])
def test_thread_count_does_not_change_results(two_codes, target_errors):
    settings = LinkSettings(block_budget=6, target_errors=target_errors, max_outer=6)
    serial = run_link(TWO_USER, two_codes, -4.0, settings)
    pooled = run_link(TWO_USER, two_codes, -4.0, replace(settings, threads=4))
    assert serial.blocks == pooled.blocks
    assert serial.users == pooled.users
    assert serial.outer_iterations == pooled.outer_iterations


def test_stops_at_target_errors(two_codes):
    run = run_link(TWO_USER, two_codes, -6.0, LinkSettings(block_budget=50, target_errors=1, max_outer=4))
    assert run.blocks == 1
    assert sum(u.bit_errors for u in run.users) >= 1


def test_histograms_captured(two_codes):
    spec = HistogramSpec(user=1, iterations=(1, 2), bins=20, limit=30.0)
    run = run_link(TWO_USER, two_codes, 2.0, LinkSettings(block_budget=2, max_outer=2), capture=spec)
    assert [h.iteration for h in run.histograms] == [1, 2]
    for h in run.histograms:
        assert len(h.edges) == 21
        assert h.density.sum() * (h.edges[1] - h.edges[0]) == pytest.approx(1.0)
    frame = run.histogram_frame()
    assert set(frame["iter"]) == {1, 2}


def test_layered_link_folds_back_to_users():
    split = scm_layer_split(HIGH_RATE.config, HIGH_RATE.path, HIGH_RATE.layer_power)
    profile = DegreeProfile.regular(3, 6)
    codes = [build_ldpc(profile, n=204, seed=3, stream=j) for j in range(split.config.K)]
    run = run_scm_link(split, codes, HIGH_RATE.snr_db, LinkSettings(block_budget=1, max_outer=3))
    assert [u.user for u in run.users] == [0, 1, 2]
    expected = split.aggregate([c.k for c in codes])
    assert [u.bits for u in run.users] == [int(b) for b in expected]


def test_capture_runs_the_whole_budget(two_codes):
    spec = HistogramSpec(user=0, iterations=(1,), bins=10, limit=20.0)
    settings = LinkSettings(block_budget=3, target_errors=1, max_outer=1)
    hists = capture_llr_histograms(TWO_USER, two_codes, -6.0, spec, settings)
    assert [h.iteration for h in hists] == [1]
    # +1-conditioned samples: about half of each block's code bits, over all three blocks
    assert hists[0].counts.sum() > two_codes[0].n
    assert run_link(TWO_USER, two_codes, -6.0, settings).blocks == 1


def test_ber_falls_with_snr(two_codes):
    settings = LinkSettings(block_budget=4, target_errors=10**9, max_outer=20)
    ber = []
    for snr in (-4.0, 2.0, 20.0):
        run = run_link(TWO_USER, two_codes, snr, settings)
        ber.append(sum(u.bit_errors for u in run.users) / sum(u.bits for u in run.users))
    assert ber[0] > 0.0
    assert ber[0] >= ber[1] >= ber[2]
    assert ber[2] == 0.0


def _case1_codes(n):
    return [build_ldpc(CASE_1.reference_profile(k), n=n, seed=CASE_1.config.seed, stream=k) for k in range(3)]


def test_noiseless_case1_link_is_error_free():
    codes = _case1_codes(1200)
    run = run_link(CASE_1.config, codes, 60.0, LinkSettings(block_budget=2, max_outer=200))
    assert [u.bit_errors for u in run.users] == [0, 0, 0]
    assert all(u.bits == 2 * c.k for u, c in zip(run.users, codes))


@pytest.fixture(scope="module")
def case1_long_codes():
    return _case1_codes(2**15)


@pytest.mark.slow
def test_case1_design_is_reliable_above_capacity(case1_long_codes):
    run = run_link(CASE_1.config, case1_long_codes, 1.5,
                   LinkSettings(block_budget=8, target_errors=100, max_outer=300, threads=4))
    for user in run.users:
        assert user.bit_errors / user.bits < 1e-3


@pytest.mark.slow
def test_simulated_variances_follow_density_evolution(case1_long_codes):
    profiles = [CASE_1.reference_profile(k) for k in range(3)]
    run = run_link(CASE_1.config, case1_long_codes, 1.5, LinkSettings(block_budget=2, max_outer=300, threads=2))
    de = run_ga_de(CASE_1.config, profiles, snr_db=1.5, max_outer=300)
    rows = min(min(run.outer_iterations), de.iterations) + 1
    assert rows > 5
    np.testing.assert_allclose(run.v_trajectory[:rows], de.v[:rows], atol=0.05)


@pytest.mark.slow
def test_decoder_llrs_become_gaussian():
    cfg = LLR_HISTOGRAM.config
    codes = [build_ldpc(LLR_HISTOGRAM.reference_profile(k), n=4096, seed=cfg.seed, stream=k) for k in range(cfg.K)]
    spec = HistogramSpec(user=0, iterations=(1, 6), bins=200, limit=40.0)
    first, sixth = capture_llr_histograms(cfg, codes, LLR_HISTOGRAM.snr_db, spec,
                                          LinkSettings(block_budget=4, max_outer=50, threads=2))
    assert (first.iteration, sixth.iteration) == (1, 6)
    assert first.normality_pvalue < 1e-3
    assert abs(sixth.skewness) < 0.3


def test_layered_link_reports_users_without_layers():
    cfg = SystemConfig(K=3, g=(2 / 7, 4 / 7, 0.0), noise_var=1.0, seed=2)
    split = scm_layer_split(cfg, MsePath.from_points([[1, 1, 1], [0, 0, 0]]), 2 / 7)
    codes = [build_ldpc(DegreeProfile.regular(3, 6), n=204, seed=5, stream=j) for j in range(split.config.K)]
    run = run_scm_link(split, codes, 10.0, LinkSettings(block_budget=1, max_outer=3))
    assert [u.user for u in run.users] == [0, 1, 2]
    assert run.users[2].bits == 0
    assert run.to_frame()["ber"].iloc[2] == 0.0
