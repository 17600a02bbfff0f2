import numpy as np
import pytest

from app.core.errors import DomainError, NoSignChangeError
from app.models.profile import DegreeProfile
from app.services.evolution import measure_dec_transfer, run_ga_de, threshold_search
from app.services.scenarios import CASE_1


@pytest.fixture(scope="module")
def case1_profiles():
    return [CASE_1.reference_profile(k) for k in range(3)]


def test_de_converges_well_above_capacity(case1_profiles):
    traj = run_ga_de(CASE_1.config, case1_profiles, snr_db=3.0)
    assert traj.converged
    assert traj.v.shape == (traj.iterations + 1, 3)
    assert np.max(traj.v[-1]) <= 1e-6


def test_de_stalls_well_below_capacity(case1_profiles):
    traj = run_ga_de(CASE_1.config, case1_profiles, snr_db=-3.0)
    assert not traj.converged
    assert np.min(traj.v[-1]) > 0.1


def test_de_variances_never_increase(case1_profiles):
    traj = run_ga_de(CASE_1.config, case1_profiles, snr_db=1.0, max_outer=200)
    assert np.all(np.diff(traj.v, axis=0) <= 0.0)
    assert np.all(np.diff(traj.rho, axis=0) >= -1e-12)
    np.testing.assert_allclose(traj.v[0], 1.0)


def test_de_trajectory_frame(case1_profiles):
    df = run_ga_de(CASE_1.config, case1_profiles, snr_db=3.0).to_frame()
    assert list(df.columns) == ["iter", "v_1", "v_2", "v_3", "rho_1", "rho_2", "rho_3"]
    assert df["iter"].iloc[0] == 0


def test_de_needs_one_profile_per_user(case1_profiles):
    with pytest.raises(DomainError):
        run_ga_de(CASE_1.config, case1_profiles[:2])


def test_threshold_bracket_must_change_sign(case1_profiles):
    with pytest.raises(NoSignChangeError) as exc:
        threshold_search(CASE_1.config, case1_profiles, bracket_db=(4.0, 6.0))
    assert exc.value.detail == {"lo_converged": True, "hi_converged": True}
    with pytest.raises(DomainError):
        threshold_search(CASE_1.config, case1_profiles, bracket_db=(1.0, 0.0))


@pytest.mark.slow
def test_threshold_is_close_to_capacity(case1_profiles):
    threshold = threshold_search(CASE_1.config, case1_profiles, bracket_db=(-2.0, 3.0), tol_db=0.02)
    assert -0.5 < threshold <= 0.5
    assert run_ga_de(CASE_1.config, case1_profiles, snr_db=0.5).converged
    assert not run_ga_de(CASE_1.config, case1_profiles, snr_db=-0.5).converged


def test_measured_dec_transfer_endpoints():
    profile = DegreeProfile(lam={2: 0.5, 3: 0.3, 8: 0.2}, eta={4: 1.0})
    v = measure_dec_transfer(profile, [0.0, 0.05, 0.5, 5.0])
    assert v[0] == pytest.approx(1.0)
    assert np.all(np.diff(v) <= 1e-12)
    assert v[-1] < 1e-6
    with pytest.raises(DomainError):
        measure_dec_transfer(profile, [-0.1])


def test_de_is_bit_identical_across_runs(case1_profiles):
    a = run_ga_de(CASE_1.config, case1_profiles, snr_db=1.0, max_outer=150)
    b = run_ga_de(CASE_1.config, case1_profiles, snr_db=1.0, max_outer=150)
    assert a.iterations == b.iterations
    assert a.converged == b.converged
    for first, second in ((a.v, b.v), (a.rho, b.rho), (a.iev, b.iev)):
        assert first.tobytes() == second.tobytes()
