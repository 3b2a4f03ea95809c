import math

import numpy as np
import pytest

from palskit.ssmodel import (
    BlockStructure,
    FrequencyResponse,
    NumericsError,
    StateSpaceModel,
    freq_response,
    hinf_norm,
    lft_lower,
    ss_from_tf,
    static_gain,
)
from palskit.synthesis import (
    Controller,
    DkOptions,
    PID_GAINS,
    PidAttitude,
    assemble_weighted_plant,
    blend,
    build_weights,
    dk_iterate,
    fit_d_scalings,
    hinf_synthesize,
    load_controller,
    mu_upper_bound,
    pid_controller,
    save_controller,
)
from palskit.vehicle import VehicleParams, build_uncertain

TWO_PI = 2 * math.pi


@pytest.fixture(scope="module")
def params():
    return VehicleParams()


@pytest.fixture(scope="module")
def weights():
    return build_weights()


@pytest.fixture(scope="module")
def gplant(params, weights):
    return assemble_weighted_plant(build_uncertain(params), weights)


def siso_mag(G, omega):
    return np.abs(freq_response(G, omega).H[:, 0, 0])


class TestWeights:
    def test_static_gains(self, weights):
        assert weights.w_rd == 0.25
        assert weights.w_tqp == 4050.0
        assert weights.w_tqr == 2700.0
        assert weights.w_ref == 1800.0

    def test_actuator_weight_high_frequency_asymptote(self, weights):
        mag = siso_mag(weights.w_act, [1e6])[0]
        assert mag == pytest.approx(100.0 / 700.0, rel=1e-3)

    def test_comfort_weight_dc_gains(self, weights):
        assert siso_mag(weights.w_cmp, [1e-6])[0] == pytest.approx(25.0, rel=1e-6)
        assert siso_mag(weights.w_cmr, [1e-6])[0] == pytest.approx(25.0, rel=1e-6)
        assert siso_mag(weights.w_cmv, [1e-6])[0] == pytest.approx(50.0, rel=1e-6)
        assert siso_mag(weights.w_trk, [1e-7])[0] == pytest.approx(10.0, rel=1e-5)

    def test_magnitudes_match_published_formulas(self, weights):
        w = TWO_PI * np.geomspace(1e-3, 1e3, 100)
        s = 1j * w

        def mag_db(G):
            return 20 * np.log10(siso_mag(G, w))

        ref = {
            "w_act": (1 / 700) * (s**2 / (TWO_PI * 10) ** 2 + 2 * s / (TWO_PI * 10) + 1)
            / (s**2 / (TWO_PI * 100) ** 2 + 2 * s / (TWO_PI * 100) + 1),
            "w_trk": 10.0 / (s / (TWO_PI * 0.001) + 1),
            "w_cmv": 50 * (s / (TWO_PI * 160) + 1) / (s / (TWO_PI * 20) + 1),
            "w_cmp": 25 / (s / TWO_PI + 1),
            "w_td": (10 * s / (TWO_PI * 0.001) + 10)
            / (s**2 / (TWO_PI**2 * 3) + 8 * s / (TWO_PI * 4) + 1),
        }
        for name, vals in ref.items():
            G = getattr(weights, name)
            err = mag_db(G) - 20 * np.log10(np.abs(vals))
            assert np.max(np.abs(err)) < 0.1, name

    def test_tracking_integrator_behavior(self, weights):
        # |M(jw)| ~ 1/w between the regularization pole (0.01 rad/s) and
        # the 20 Hz zero; the simulator deploys the exact integrator
        w = np.array([0.1, 1.0])
        mag = siso_mag(weights.m_i, w)
        assert mag[0] * w[0] == pytest.approx(1.0, rel=1e-2)
        assert mag[0] / mag[1] == pytest.approx(10.0, rel=2e-2)

    def test_identity_override(self):
        ws = build_weights({"w_act": "identity", "w_rd": 1.0})
        assert ws.w_act.n_states == 0
        assert ws.w_act.D[0, 0] == 1.0
        assert ws.w_rd == 1.0


class TestAssembly:
    def test_state_count_bookkeeping(self, gplant, weights):
        expected = 14 + 4 * weights.w_act.n_states + 4 * weights.w_trk.n_states \
            + 4 * weights.w_td.n_states + weights.w_cmv.n_states \
            + weights.w_cmp.n_states + weights.w_cmr.n_states + 4 * weights.m_i.n_states
        assert gplant.plant.n_states == expected == 41

    def test_channel_counts(self, gplant):
        assert gplant.plant.n_inputs == 5 + 10 + 4
        assert gplant.plant.n_outputs == 5 + 15 + 11
        assert gplant.n_unc == 5

    def test_zero_inputs_zero_costs(self, gplant):
        # linear model: zero state + zero input leaves every cost at zero
        z = gplant.plant.C @ np.zeros(gplant.plant.n_states)
        assert np.allclose(z, 0.0)

    def test_cost_paths_match_manual_composition(self, params, weights, gplant):
        """Selected closed-form transfer paths: weight x vehicle x input scale."""
        veh = build_uncertain(params).plant
        w = TWO_PI * np.geomspace(0.05, 50, 25)
        Hgp = freq_response(gplant.plant, w).H
        Hveh = freq_response(veh, w).H
        Wcmv = freq_response(weights.w_cmv, w).H[:, 0, 0]
        Wcmp = freq_response(weights.w_cmp, w).H[:, 0, 0]
        Wact = freq_response(weights.w_act, w).H[:, 0, 0]
        Wtrk = freq_response(weights.w_trk, w).H[:, 0, 0]
        Wtd = freq_response(weights.w_td, w).H[:, 0, 0]
        Mi = freq_response(weights.m_i, w).H[:, 0, 0]

        # road rate 1 -> weighted heave acceleration (cost 17)
        path = Hgp[:, 17, 9]
        ref = Wcmv * Hveh[:, 5, 5] * 0.25
        assert np.max(np.abs(path - ref)) < 1e-8 * max(1, np.max(np.abs(ref)))

        # pitch torque -> weighted pitch acceleration (cost 18)
        path = Hgp[:, 18, 13]
        ref = Wcmp * Hveh[:, 6, 9] * 4050.0
        assert np.max(np.abs(path - ref)) / np.max(np.abs(ref)) < 1e-8

        # control 1 -> actuator cost 1 (rows 5..8)
        path = Hgp[:, 5, 15]
        assert np.max(np.abs(path - Wact)) < 1e-9

        # control 1 -> tracking cost 1 = -W_trk
        path = Hgp[:, 9, 15]
        assert np.max(np.abs(path + Wtrk)) < 1e-9

        # reference 1 -> measurement integrator 1 = 1800 M
        path = Hgp[:, 20, 5]
        assert np.max(np.abs(path - 1800.0 * Mi)) / np.max(np.abs(1800 * Mi)) < 1e-9

        # control 1 -> measurement integrator 1 = -M
        path = Hgp[:, 20, 15]
        assert np.max(np.abs(path + Mi)) / np.max(np.abs(Mi)) < 1e-9

        # road rate 1 -> weighted tire deflection 1 (cost 13)
        path = Hgp[:, 13, 9]
        ref = Wtd * Hveh[:, 12, 5] * 0.25
        assert np.max(np.abs(path - ref)) / max(np.max(np.abs(ref)), 1e-12) < 1e-7

        # uncertainty channel passthrough: w_unc1 -> z_unc1 matches vehicle
        path = Hgp[:, 0, 0]
        assert np.max(np.abs(path - Hveh[:, 0, 0])) < 1e-9

    def test_nominal_plant_has_no_w_to_z_feedthrough(self, gplant):
        nom = gplant.nominal()
        D = nom.plant.D
        D11 = D[: nom.n_z, : nom.n_w]
        assert np.max(np.abs(D11)) < 1e-12

    def test_measurements_include_deflections_and_accels(self, gplant):
        labels = gplant.plant.output_labels
        assert labels[-11:-7] == ("y_trk1", "y_trk2", "y_trk3", "y_trk4")
        assert labels[-3:] == ("y_zsdd", "y_pitchdd", "y_rolldd")


def make_four_block(A, B1, B2, C1, C2, D11, D12, D21, D22):
    B = np.hstack([B1, B2])
    C = np.vstack([C1, C2])
    D = np.block([[D11, D12], [D21, D22]])
    return StateSpaceModel(A, B, C, D)


def toy_double_integrator():
    """Classic regulator: force disturbance and measurement noise in w,
    position cost plus control cost in z, noisy position measurement."""
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B1 = np.array([[0.0, 0.0], [1.0, 0.0]])
    B2 = np.array([[0.0], [1.0]])
    C1 = np.array([[1.0, 0.0], [0.0, 0.0]])
    C2 = np.array([[1.0, 0.0]])
    D11 = np.zeros((2, 2))
    D12 = np.array([[0.0], [1.0]])
    D21 = np.array([[0.0, 0.1]])
    D22 = np.zeros((1, 1))
    return make_four_block(A, B1, B2, C1, C2, D11, D12, D21, D22)


def random_synthesis_plant(rng, n=4, m1=2, m2=2, p1=3, p2=2):
    A = rng.standard_normal((n, n))
    B1 = rng.standard_normal((n, m1))
    B2 = rng.standard_normal((n, m2))
    C1 = rng.standard_normal((p1, n))
    C2 = rng.standard_normal((p2, n))
    D11 = np.zeros((p1, m1))
    D12 = np.vstack([np.zeros((p1 - m2, m2)), np.eye(m2)])
    D21 = np.hstack([np.zeros((p2, m1 - p2)), np.eye(p2)])
    D22 = np.zeros((p2, m2))
    return make_four_block(A, B1, B2, C1, C2, D11, D12, D21, D22)


class TestHinfCore:
    def _gp(self, plant, n_w, n_u, n_z, n_y):
        from palskit.synthesis import GeneralizedPlant
        return GeneralizedPlant(plant, BlockStructure(()), n_w, n_u, n_z, n_y)

    def test_double_integrator_stable_finite_gamma(self):
        gp = self._gp(toy_double_integrator(), 2, 1, 2, 1)
        ctrl = hinf_synthesize(gp)
        assert math.isfinite(ctrl.gamma_achieved)
        cl = lft_lower(gp.plant, ctrl.K, nu=1, ny=1)
        assert cl.is_stable()
        assert hinf_norm(cl) <= 1.01 * ctrl.gamma_achieved

    def test_random_plants_verify(self):
        rng = np.random.default_rng(5)
        for _ in range(6):
            P = random_synthesis_plant(rng)
            gp = self._gp(P, 2, 2, 3, 2)
            ctrl = hinf_synthesize(gp)
            cl = lft_lower(P, ctrl.K, nu=2, ny=2)
            assert cl.is_stable()
            assert hinf_norm(cl) <= 1.01 * ctrl.gamma_achieved

    def test_cost_scaling_doubles_gamma(self):
        rng = np.random.default_rng(9)
        P = random_synthesis_plant(rng)
        gp = self._gp(P, 2, 2, 3, 2)
        g1 = hinf_synthesize(gp).gamma_achieved
        scaled = StateSpaceModel(P.A, P.B, np.vstack([2 * P.C[:3], P.C[3:]]),
                                 np.vstack([2 * P.D[:3], P.D[3:]]))
        g2 = hinf_synthesize(self._gp(scaled, 2, 2, 3, 2)).gamma_achieved
        assert g2 == pytest.approx(2 * g1, rel=0.01)

    def test_gamma_matches_lmi_oracle(self):
        # Independent optimality check: Gahinet/Apkarian solvability LMIs,
        # bisected with cvxpy, must agree with the Riccati bisection.
        cp = pytest.importorskip("cvxpy")
        from scipy.linalg import null_space

        rng = np.random.default_rng(13)
        P = random_synthesis_plant(rng, n=3, m1=2, m2=1, p1=2, p2=1)
        n, m1, m2, p1, p2 = 3, 2, 1, 2, 1
        gp = self._gp(P, m1, m2, p1, p2)
        g_ric = hinf_synthesize(gp, gamma_tol=1e-4).gamma_achieved

        A = P.A
        B1, B2 = P.B[:, :m1], P.B[:, m1:]
        C1, C2 = P.C[:p1, :], P.C[p1:, :]
        D11, D12 = P.D[:p1, :m1], P.D[:p1, m1:]
        D21 = P.D[p1:, :m1]
        NR = null_space(np.hstack([B2.T, D12.T]))
        NS = null_space(np.hstack([C2, D21]))

        def feasible(gamma):
            R = cp.Variable((n, n), symmetric=True)
            S = cp.Variable((n, n), symmetric=True)
            WR = cp.bmat([
                [A @ R + R @ A.T, R @ C1.T, B1],
                [C1 @ R, -gamma * np.eye(p1), D11],
                [B1.T, D11.T, -gamma * np.eye(m1)],
            ])
            TR = np.vstack([np.hstack([NR, np.zeros((n + p1, m1))]),
                            np.hstack([np.zeros((m1, NR.shape[1])), np.eye(m1)])])
            WS = cp.bmat([
                [A.T @ S + S @ A, S @ B1, C1.T],
                [B1.T @ S, -gamma * np.eye(m1), D11.T],
                [C1, D11, -gamma * np.eye(p1)],
            ])
            TS = np.vstack([np.hstack([NS, np.zeros((n + m1, p1))]),
                            np.hstack([np.zeros((p1, NS.shape[1])), np.eye(p1)])])
            eps = 1e-7
            cons = [
                TR.T @ WR @ TR << -eps * np.eye(TR.shape[1]),
                TS.T @ WS @ TS << -eps * np.eye(TS.shape[1]),
                cp.bmat([[R, np.eye(n)], [np.eye(n), S]]) >> 0,
            ]
            cons += [cp.norm(R, "fro") <= 1e7, cp.norm(S, "fro") <= 1e7]
            prob = cp.Problem(cp.Minimize(0), cons)
            try:
                prob.solve(solver=cp.CLARABEL, verbose=False)
            except cp.SolverError:
                return False
            return prob.status == "optimal"

        lo, hi = g_ric / 10, 10 * g_ric
        assert feasible(hi)
        assert not feasible(lo)
        for _ in range(20):
            mid = math.sqrt(lo * hi)
            if feasible(mid):
                hi = mid
            else:
                lo = mid
        g_lmi = hi
        assert g_ric == pytest.approx(g_lmi, rel=0.05)

    def test_pals_nominal_synthesis(self, gplant):
        ctrl = hinf_synthesize(gplant)
        assert math.isfinite(ctrl.gamma_achieved)
        nom = gplant.nominal()
        cl = lft_lower(nom.plant, ctrl.K, nu=4, ny=11)
        assert cl.is_stable()
        assert hinf_norm(cl) <= 1.01 * ctrl.gamma_achieved


class TestMuUpperBound:
    def _resp(self, mats, omega=None):
        omega = np.array([1.0]) if omega is None else omega
        H = np.array(mats, dtype=complex)
        if H.ndim == 2:
            H = np.tile(H, (omega.size, 1, 1))
        return FrequencyResponse(omega, H)

    def test_scalar_single_block(self):
        bs = BlockStructure((("scalar-complex", 1, 1, "d"),))
        for val in (0.3, 2.5 + 1.0j, -4.0):
            N = self._resp([[val]])
            mu, _ = mu_upper_bound(N, bs)
            assert mu[0] == pytest.approx(abs(val), rel=1e-9)

    def test_block_diagonal_decouples(self):
        bs = BlockStructure((("scalar-complex", 1, 1, "a"),
                             ("scalar-complex", 1, 1, "b")))
        N = self._resp([[2.0, 0.0], [0.0, 5.0]])
        mu, _ = mu_upper_bound(N, bs)
        assert mu[0] == pytest.approx(5.0, rel=1e-6)

    def test_two_block_matches_dense_grid_search(self):
        rng = np.random.default_rng(3)
        bs = BlockStructure((("scalar-complex", 1, 1, "a"),
                             ("scalar-complex", 1, 1, "b")))
        for _ in range(4):
            M = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            mu, _ = mu_upper_bound(self._resp(M), bs)
            best = np.inf
            for t in np.linspace(-3, 3, 601):
                d = np.array([math.exp(t), 1.0])
                sv = np.linalg.norm(np.diag(d) @ M @ np.diag(1 / d), 2)
                best = min(best, sv)
            assert mu[0] == pytest.approx(best, rel=0.01)

    def test_d_invariance(self):
        rng = np.random.default_rng(7)
        bs = BlockStructure((("scalar-complex", 1, 1, "a"),
                             ("scalar-complex", 1, 1, "b"),
                             ("scalar-complex", 1, 1, "c")))
        M = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        mu0, _ = mu_upper_bound(self._resp(M), bs)
        d = np.array([3.0, 0.2, 1.7])
        Mw = np.diag(d) @ M @ np.diag(1 / d)
        mu1, _ = mu_upper_bound(self._resp(Mw), bs)
        assert mu1[0] == pytest.approx(mu0[0], rel=0.01)

    def test_performance_block_appended(self):
        # no uncertainty structure: bound is the plain largest singular value
        bs = BlockStructure(())
        rng = np.random.default_rng(9)
        M = rng.standard_normal((3, 2))
        mu, _ = mu_upper_bound(self._resp(M), bs)
        assert mu[0] == pytest.approx(np.linalg.norm(M, 2), rel=1e-9)

    def test_repeated_scalar_block_channels(self):
        bs = BlockStructure((("scalar-real", 2, 2, "rep"),))
        rng = np.random.default_rng(11)
        M = rng.standard_normal((2, 2))
        mu, D = mu_upper_bound(self._resp(M), bs)
        assert D.d_grid.shape == (1, 2)
        assert mu[0] <= np.linalg.norm(M, 2) + 1e-12


class TestFitDScalings:
    def _dscale(self, omega, vals):
        from palskit.synthesis import DScaling
        return DScaling(omega, vals.reshape(-1, 1), (0,))

    def test_constant_fit_exact(self):
        w = np.geomspace(0.1, 100, 40)
        D = self._dscale(w, np.full(w.size, 3.7))
        fitted = fit_d_scalings(D)
        fit = fitted.fits[0]
        assert fit.n_states == 0
        assert fit.D[0, 0] == pytest.approx(3.7, rel=1e-3)

    def test_first_order_shape_recovered(self):
        w = np.geomspace(0.01, 1000, 80)
        target = np.abs((1j * w + 10.0) / (1j * w + 1.0))
        fitted = fit_d_scalings(self._dscale(w, target))
        fit = fitted.fits[0]
        mag = np.abs(freq_response(fit, w).H[:, 0, 0])
        rms_db = np.sqrt(np.mean((20 * np.log10(mag / target)) ** 2))
        assert rms_db < 0.2

    def test_fits_are_stable_minimum_phase(self):
        w = np.geomspace(0.01, 1000, 60)
        rng = np.random.default_rng(3)
        vals = np.abs((1j * w + 3) / (1j * w + 40)) * (1 + 0.01 * rng.standard_normal(w.size))
        fitted = fit_d_scalings(self._dscale(w, np.abs(vals)))
        fit = fitted.fits[0]
        if fit.n_states:
            assert np.max(np.linalg.eigvals(fit.A).real) < 0
            # zeros of the biproper fit: eig(A - B D^-1 C)
            zeros = np.linalg.eigvals(fit.A - fit.B @ fit.C / fit.D[0, 0])
            assert np.max(zeros.real) < 0


def uncertain_msd_plant():
    """Two-mass toy with one uncertain stiffness channel for D-K tests.

    States: positions/velocities of a mass-spring-damper; uncertainty enters
    the spring force; disturbance is a force; cost is position + control.
    """
    k0, dk = 1.0, 0.5
    c0 = 0.2
    A = np.array([[0.0, 1.0], [-k0, -c0]])
    B_unc = np.array([[0.0], [-dk]])
    B_w = np.array([[0.0], [1.0]])
    B_u = np.array([[0.0], [1.0]])
    C_unc = np.array([[1.0, 0.0]])   # spring deflection feeds delta
    C_z = np.array([[1.0, 0.0], [0.0, 0.0]])
    C_y = np.array([[1.0, 0.0]])
    B = np.hstack([B_unc, B_w, B_u])
    C = np.vstack([C_unc, C_z, C_y])
    D = np.zeros((4, 3))
    D[2, 2] = 1.0   # control cost feedthrough
    D[3, 1] = 0.05  # measurement noise
    plant = StateSpaceModel(A, B, C, D)
    from palskit.synthesis import GeneralizedPlant
    bs = BlockStructure((("scalar-real", 1, 1, "dk"),))
    return GeneralizedPlant(plant, bs, n_w=1, n_u=1, n_z=2, n_y=1)


class TestDkIterate:
    def test_log_monotone_and_final_best(self):
        gp = uncertain_msd_plant()
        ctrl = dk_iterate(gp, max_iters=4)
        assert ctrl.kind == "mu"
        peaks = [row[2] for row in ctrl.iteration_log]
        assert all(b <= a + 1e-12 for a, b in zip(peaks, peaks[1:]))
        assert math.isfinite(ctrl.mu_bound)
        assert ctrl.mu_bound <= peaks[0] + 1e-12

    def test_no_uncertainty_matches_plain_hinf(self):
        gp = uncertain_msd_plant()
        nom = gp.nominal()
        g_plain = hinf_synthesize(nom).gamma_achieved
        ctrl = dk_iterate(nom, max_iters=3)
        assert ctrl.gamma_achieved == pytest.approx(g_plain, rel=0.01)

    def test_closed_loop_robustly_stable_when_mu_below_one(self):
        gp = uncertain_msd_plant()
        ctrl = dk_iterate(gp, max_iters=5)
        from palskit.ssmodel import lft_upper
        N = lft_lower(gp.plant, ctrl.K, nu=1, ny=1)
        if ctrl.mu_bound < 1.0:
            for d in (-1.0, -0.5, 0.5, 1.0):
                cl = lft_upper(N, np.array([d]), ndelta=1)
                assert cl.is_stable()


class TestPid:
    def test_zero_angles_zero_output(self, params):
        pid = PidAttitude(PID_GAINS["pals-pid-mu"], params)
        for _ in range(100):
            out = pid.step(0.0, 0.0, 1e-3)
        assert np.allclose(out, 0.0)

    def test_integral_ramps_to_clamp(self, params):
        pid = PidAttitude(PID_GAINS["pals-pid-mu"], params)
        limit = 2.0 * params.torque_peak / params.l_beta
        for _ in range(200000):
            pid.step(math.radians(1.0), 0.0, 1e-3)
        assert pid.i_p == pytest.approx(limit)

    def test_table_gains(self):
        assert PID_GAINS["pals-pid-mu"]["pitch"] == (1000.0, 6000.0, 4.0)
        assert PID_GAINS["pals-pid-mu"]["roll"] == (2000.0, 2500.0, 4.0)
        assert PID_GAINS["pals-pid"]["pitch"] == (1000.0, 20000.0, 4.0)
        assert PID_GAINS["pals-pid-hinf"]["roll"] == (500.0, 2500.0, 4.0)

    def test_distribution_orthogonality(self, params):
        dist = PidAttitude.distribution_matrix()
        G = params.geometry_matrix()
        # pitch effort: zero net heave force and zero roll moment
        gen = G.T @ dist
        assert gen[0, 0] == pytest.approx(0.0, abs=1e-12)  # heave from pitch
        assert gen[2, 0] == pytest.approx(0.0, abs=1e-12)  # roll from pitch
        assert gen[0, 1] == pytest.approx(0.0, abs=1e-12)  # heave from roll
        assert gen[1, 1] == pytest.approx(0.0, abs=1e-12)  # pitch from roll
        # and each effort produces a restoring generalized moment
        assert gen[1, 0] < 0
        assert gen[2, 1] < 0

    def test_pure_pitch_step_response_sign(self, params):
        pid = PidAttitude(PID_GAINS["pals-pid"], params)
        out = pid.step(math.radians(0.5), 0.0, 1e-3)
        # positive pitch -> positive front forces, negative rear forces
        assert out[0] > 0 and out[1] > 0 and out[2] < 0 and out[3] < 0
        assert out[0] == pytest.approx(out[1])


class TestBlendAndSerialization:
    def test_blend_metadata(self, params):
        K = StateSpaceModel(-np.eye(2), np.ones((2, 11)), np.ones((4, 2)),
                            np.zeros((4, 11)))
        high = Controller(K, "mu", gamma_achieved=2.0, mu_bound=0.9)
        pid = pid_controller("pals-pid-mu")
        blended = blend(high, pid)
        assert blended.kind == "blended"
        assert blended.pid_gains == PID_GAINS["pals-pid-mu"]
        assert blended.mu_bound == 0.9

    def test_blend_rejects_bad_channels(self):
        K = StateSpaceModel(-np.eye(1), np.ones((1, 3)), np.ones((2, 1)),
                            np.zeros((2, 3)))
        with pytest.raises(ValueError):
            blend(Controller(K, "mu"), pid_controller("pals-pid-mu"))

    def test_save_load_roundtrip(self, tmp_path):
        K = StateSpaceModel([[-1.0, 0.2], [0.0, -3.0]], np.eye(2),
                            [[1.0, 0.5]], [[0.0, 0.0]])
        ctrl = Controller(K, "hinf", gamma_achieved=4.2,
                          iteration_log=((1, 4.2, math.nan, 0),))
        path = tmp_path / "k.json"
        save_controller(ctrl, path)
        again = load_controller(path)
        assert again.kind == "hinf"
        assert again.gamma_achieved == pytest.approx(4.2)
        assert np.allclose(again.K.A, K.A)
        assert np.allclose(again.K.C, K.C)

    def test_pid_controller_lti_form(self):
        ctrl = pid_controller("pals-pid")
        assert ctrl.K.n_inputs == 2 and ctrl.K.n_outputs == 4
        assert ctrl.kind == "pid"
