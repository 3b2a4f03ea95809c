import numpy as np
import pytest
from scipy import signal

from palskit.excitation import (
    ManeuverSpec,
    bump_height_at,
    gen_bump,
    gen_random_road,
    iso_psd,
    maneuver_accels,
    maneuver_torques,
    road_from_csv,
    road_to_csv,
)
from palskit.vehicle import VehicleParams


class TestIsoPsd:
    def test_class_c_reference_value(self):
        assert iso_psd(0.1, 4) == pytest.approx(2.56e-4, rel=1e-12)

    def test_power_law_ratio(self):
        for k in range(2, 10):
            assert iso_psd(0.2, k) / iso_psd(0.1, k) == pytest.approx(0.25, rel=1e-12)

    def test_class_step_doubles_psd_twice(self):
        assert iso_psd(1.0, 5) / iso_psd(1.0, 4) == pytest.approx(4.0, rel=1e-12)


def ensemble_psd(class_k, seeds, length=1000.0, dx=0.01):
    psds = []
    for seed in seeds:
        prof = gen_random_road(class_k, length, dx, seed)
        f, pxx = signal.welch(prof.z_left, fs=1.0 / dx, window="hann",
                              nperseg=8192, noverlap=4096, detrend=False)
        psds.append(pxx)
    return f, np.mean(psds, axis=0)


class TestRandomRoad:
    def test_psd_matches_target_within_3db(self):
        f, pxx = ensemble_psd(4, range(20))
        band = (f >= 0.1) & (f <= 10.0)
        ratio_db = 10 * np.log10(pxx[band] / iso_psd(f[band], 4))
        assert np.max(np.abs(ratio_db)) < 3.0

    def test_loglog_slope(self):
        f, pxx = ensemble_psd(4, range(20))
        band = (f >= 0.1) & (f <= 10.0)
        slope = np.polyfit(np.log10(f[band]), np.log10(pxx[band]), 1)[0]
        assert slope == pytest.approx(-2.0, abs=0.15)

    def test_point_value_class_c(self):
        f, pxx = ensemble_psd(4, range(20))
        idx = np.argmin(np.abs(f - 1.0))
        ratio_db = 10 * np.log10(pxx[idx] / 2.56e-6)
        assert abs(ratio_db) < 3.0

    def test_class_scaling_between_ensembles(self):
        f, p4 = ensemble_psd(4, range(6), length=500.0)
        _, p5 = ensemble_psd(5, range(6), length=500.0)
        band = (f >= 0.1) & (f <= 10.0)
        assert np.median(p5[band] / p4[band]) == pytest.approx(4.0, rel=0.25)

    def test_left_right_same_target_different_phase(self):
        prof = gen_random_road(4, 500.0, 0.01, seed=3)
        assert not np.allclose(prof.z_left, prof.z_right)
        assert np.std(prof.z_left) == pytest.approx(np.std(prof.z_right), rel=0.5)

    def test_deterministic_given_seed(self):
        a = gen_random_road(4, 200.0, 0.01, seed=11)
        b = gen_random_road(4, 200.0, 0.01, seed=11)
        assert np.array_equal(a.z_left, b.z_left)
        assert np.array_equal(a.z_right, b.z_right)

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            gen_random_road(1, 100.0, 0.01, 0)
        with pytest.raises(ValueError):
            gen_random_road(4, 100.0, -0.01, 0)

    def test_finite_and_uniform(self):
        prof = gen_random_road(6, 300.0, 0.02, seed=5)
        assert np.all(np.isfinite(prof.z_left))
        assert prof.dx == pytest.approx(0.02)


class TestBump:
    def test_midpoint_is_full_height(self):
        assert bump_height_at(1.0, 0.05, 2.0) == pytest.approx(0.05, abs=1e-15)

    def test_boundaries_zero(self):
        assert bump_height_at(0.0, 0.05, 2.0) == pytest.approx(0.0, abs=1e-15)
        assert bump_height_at(2.0, 0.05, 2.0) == pytest.approx(0.0, abs=1e-12)
        assert bump_height_at(-0.5, 0.05, 2.0) == 0.0
        assert bump_height_at(2.5, 0.05, 2.0) == 0.0

    def test_quarter_point(self):
        assert bump_height_at(0.5, 0.05, 2.0) == pytest.approx(0.025, abs=1e-12)

    def test_c1_continuity_at_edges(self):
        eps = 1e-7
        for edge in (0.0, 2.0):
            inner = bump_height_at(edge + (eps if edge == 0 else -eps), 0.05, 2.0)
            assert abs(inner) < 1e-12  # value continuous
            slope = inner / eps
            assert abs(slope) < 1e-5   # slope continuous (cosine shape)

    def test_max_at_mid(self):
        x = np.linspace(-1, 3, 4001)
        z = bump_height_at(x, 0.05, 2.0)
        assert x[np.argmax(z)] == pytest.approx(1.0, abs=1e-3)

    def test_gen_bump_profile(self):
        x = np.arange(0.0, 4.0, 0.01)
        prof = gen_bump(0.05, 2.0, x)
        assert np.array_equal(prof.z_left, prof.z_right)
        assert np.max(prof.z_left) == pytest.approx(0.05, abs=1e-6)


class TestRearDelay:
    def test_rear_signal_is_shifted_copy(self):
        params = VehicleParams()
        prof = gen_random_road(4, 400.0, 0.01, seed=9)
        wb = params.wheelbase
        xq = np.linspace(50.0, 300.0, 777)
        front = prof.heights_at(xq)
        rear = prof.heights_at(xq + wb)
        shifted = prof.heights_at((xq + wb))
        assert np.array_equal(rear, shifted)
        # and the rear trace at travel x equals the front trace at x - wb
        assert np.allclose(prof.heights_at(xq), prof.heights_at((xq + wb) - wb))
        assert not np.allclose(front, rear)


@pytest.fixture(scope="module")
def params():
    return VehicleParams()


class TestManeuvers:
    def test_zero_lateral_acc_zero_roll_torque(self, params):
        spec = ManeuverSpec("steady_state_corner", speed=27.78, duration=100.0)
        T_p, T_r = maneuver_torques(spec, params, np.array([0.0]))
        assert T_r[0] == 0.0
        assert T_p[0] == 0.0

    def test_step_steer_plateau_torque(self, params):
        spec = ManeuverSpec("step_steer", speed=27.78, duration=10.0)
        T_p, T_r = maneuver_torques(spec, params, np.array([50.0]))
        assert T_r[0] == pytest.approx(2700 * 8 * 0.71, rel=1e-6)
        assert T_p[0] == 0.0

    def test_brake_in_turn_initial_values(self, params):
        spec = ManeuverSpec("brake_in_turn", speed=80 / 3.6, duration=10.0)
        ax, ay = maneuver_accels(spec, np.array([0.0]))
        assert ay[0] == pytest.approx((80 / 3.6) ** 2 / 100.0, rel=1e-9)
        assert ax[0] == pytest.approx(-5.0)
        T_p, T_r = maneuver_torques(spec, params, np.array([0.0]))
        assert T_r[0] == pytest.approx(2700 * ay[0] * 0.71, rel=1e-9)
        assert T_p[0] == pytest.approx(2700 * 5.0 * 0.71, rel=1e-9)

    def test_brake_in_turn_stops(self, params):
        spec = ManeuverSpec("brake_in_turn", speed=10.0, duration=10.0)
        ax, ay = maneuver_accels(spec, np.array([5.0]))
        assert ax[0] == 0.0
        assert ay[0] == 0.0

    def test_corner_ramp_reaches_configured_max(self, params):
        spec = ManeuverSpec("steady_state_corner", speed=27.78, duration=60.0)
        _, ay = maneuver_accels(spec, np.array([60.0]))
        assert ay[0] == pytest.approx(6.0)

    def test_deterministic(self, params):
        spec = ManeuverSpec("step_steer", speed=27.78, duration=10.0)
        t = np.linspace(0, 10, 101)
        a = maneuver_torques(spec, params, t)
        b = maneuver_torques(spec, params, t)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_mass_override(self, params):
        spec = ManeuverSpec("step_steer", speed=27.78, duration=10.0)
        _, T_r = maneuver_torques(spec, params, np.array([50.0]), M_s=2997.0)
        assert T_r[0] == pytest.approx(2997 * 8 * 0.71, rel=1e-6)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            ManeuverSpec("drift", speed=10.0, duration=1.0)


class TestCsvRoundTrip:
    def test_three_column_roundtrip(self, tmp_path):
        prof = gen_random_road(4, 100.0, 0.05, seed=21)
        path = tmp_path / "road.csv"
        road_to_csv(prof, path)
        again = road_from_csv(path)
        assert again.class_k == 4 and again.seed == 21
        assert np.allclose(again.z_left, prof.z_left, atol=1e-10)
        assert np.allclose(again.z_right, prof.z_right, atol=1e-10)

    def test_two_column_accepted(self, tmp_path):
        path = tmp_path / "two.csv"
        path.write_text("x,z\n0.0,0.0\n0.1,0.01\n0.2,0.02\n")
        prof = road_from_csv(path)
        assert np.allclose(prof.z_left, prof.z_right)
