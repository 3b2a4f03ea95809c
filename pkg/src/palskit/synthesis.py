"""Controller synthesis: weighting functions, the weighted generalized plant,
H-infinity design, structured-singular-value analysis with D-K iteration, and
the PID attitude controller with its blending wiring.

Interconnection summary (normalized channels):
    disturbances w  = [ref commands (4), road rates (4), pitch torque, roll torque]
    controls     u  = corner force commands (4)
    costs        z  = [weighted u (4), weighted tracking error (4),
                       weighted tire deflection (4), weighted heave/pitch/roll accel]
    measurements y  = [integrator-filtered tracking errors (4),
                       suspension deflections (4), heave/pitch/roll accel]
The tracking error is (W_ref * w_ref - u): the controller output is the total
corner force command during synthesis, forced by the integrator channel to
follow the low-frequency reference exactly, while the deployed loop adds the
reference feed-forward and measures the realized actuator force instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, optimize

from .ssmodel import (
    BlockStructure,
    FrequencyResponse,
    NumericsError,
    StateSpaceModel,
    balanced_truncate,
    freq_response,
    hinf_norm,
    interconnect_series,
    lft_lower,
    ss_from_tf,
    static_gain,
)
from .vehicle import UncertainVehiclePlant, VehicleParams

__all__ = [
    "WeightSet",
    "GeneralizedPlant",
    "Controller",
    "DScaling",
    "DkOptions",
    "PID_GAINS",
    "build_weights",
    "assemble_weighted_plant",
    "hinf_synthesize",
    "mu_upper_bound",
    "fit_d_scalings",
    "dk_iterate",
    "PidAttitude",
    "blend",
    "save_controller",
    "load_controller",
]

TWO_PI = 2.0 * math.pi

# Feed-through regularization for rank-deficient D12/D21 blocks.
EPS_REG = 1e-4
# Near-integrator pole used for the measurement integrators inside the
# synthesis plant (the simulator keeps exact integrators).
M_POLE = 1e-2
# Fast low-pass applied to the uncertainty-channel disturbances inside the
# K-step so the synthesis plant has no direct w->z feed-through; well above
# the 0.01-100 Hz analysis band.
UNC_FILTER_W = TWO_PI * 500.0

# The delivered controller is the central (maximum-entropy) solution at this
# multiple of the smallest feasible gamma: at the optimum the closed loop is
# all-pass at level gamma and amplifies otherwise-quiet bands, while the
# backed-off solution rolls off and improves the whole band.
GAMMA_BACKOFF = 2.0

# Effective sensor-noise scales for the synthesis regularization, ordered as
# the measurement vector [tracking errors (N), suspension deflections (m),
# heave/pitch/roll accelerations (m/s^2, rad/s^2)].  They bound the observer
# aggressiveness: near-noiseless measurements would invert the wheel-hop
# dynamics exactly and lose all parametric robustness.
MEAS_NOISE = np.array([5.0] * 4 + [5e-3] * 4 + [0.25] * 3)

# PID attitude gains (P, I, D) per scheme, acting on degrees of pitch/roll.
PID_GAINS = {
    "pals-pid": {"pitch": (1000.0, 20000.0, 4.0), "roll": (500.0, 5000.0, 4.0)},
    "pals-pid-hinf": {"pitch": (1000.0, 5000.0, 4.0), "roll": (500.0, 2500.0, 4.0)},
    "pals-pid-mu": {"pitch": (1000.0, 6000.0, 4.0), "roll": (2000.0, 2500.0, 4.0)},
}


# ---------------------------------------------------------------------------
# weights


@dataclass(frozen=True)
class WeightSet:
    """Static input scalings and dynamic cost/measurement weights."""

    w_rd: float
    w_tqp: float
    w_tqr: float
    w_ref: float
    w_act: StateSpaceModel
    w_trk: StateSpaceModel
    w_td: StateSpaceModel
    w_cmv: StateSpaceModel
    w_cmp: StateSpaceModel
    w_cmr: StateSpaceModel
    m_i: StateSpaceModel


def _second_order_pair(f_zero, f_pole, gain):
    """gain * ((s/wz + 1)/(s/wp + 1))^2 as a state-space model."""
    wz, wp = TWO_PI * f_zero, TWO_PI * f_pole
    num = np.polymul([1.0 / wz, 1.0], [1.0 / wz, 1.0])
    den = np.polymul([1.0 / wp, 1.0], [1.0 / wp, 1.0])
    return ss_from_tf(gain * num, den)


def build_weights(config: dict | None = None) -> WeightSet:
    """Weighting functions at their published values; entries of config may
    override any member (floats for the static gains, (num, den) pairs for
    the dynamic ones, or the string "identity")."""
    config = dict(config or {})

    def dyn(name, default_fn):
        if name in config:
            val = config[name]
            if val == "identity":
                return static_gain([[1.0]])
            num, den = val
            return ss_from_tf(num, den)
        return default_fn()

    w_act = dyn("w_act", lambda: _second_order_pair(10.0, 100.0, 1.0 / 700.0))
    w_trk = dyn("w_trk", lambda: ss_from_tf([10.0], [1.0 / (TWO_PI * 0.001), 1.0]))
    w_td = dyn("w_td", lambda: ss_from_tf(
        [10.0 / (TWO_PI * 0.001), 10.0],
        [1.0 / (TWO_PI**2 * 3.0), 8.0 / (TWO_PI * 4.0), 1.0]))
    w_cmv = dyn("w_cmv", lambda: ss_from_tf(
        [50.0 / (TWO_PI * 160.0), 50.0], [1.0 / (TWO_PI * 20.0), 1.0]))
    w_cmp = dyn("w_cmp", lambda: ss_from_tf([25.0], [1.0 / TWO_PI, 1.0]))
    w_cmr = dyn("w_cmr", lambda: ss_from_tf([25.0], [1.0 / TWO_PI, 1.0]))
    m_i = dyn("m_i", lambda: ss_from_tf([1.0 / (TWO_PI * 20.0), 1.0], [1.0, M_POLE]))
    return WeightSet(
        w_rd=float(config.get("w_rd", 0.25)),
        w_tqp=float(config.get("w_tqp", 4050.0)),
        w_tqr=float(config.get("w_tqr", 2700.0)),
        w_ref=float(config.get("w_ref", 1800.0)),
        w_act=w_act, w_trk=w_trk, w_td=w_td,
        w_cmv=w_cmv, w_cmp=w_cmp, w_cmr=w_cmr, m_i=m_i,
    )


# ---------------------------------------------------------------------------
# generalized plant


@dataclass(frozen=True)
class GeneralizedPlant:
    """Weighted synthesis interconnection.

    Channel layout of .plant:
      inputs : [uncertainty (n_unc), w (10), u (4)]
      outputs: [uncertainty (n_unc), costs (15), measurements (11)]
    """

    plant: StateSpaceModel
    structure: BlockStructure
    n_w: int = 10
    n_u: int = 4
    n_z: int = 15
    n_y: int = 11

    @property
    def n_unc(self):
        return self.structure.total_rows

    def nominal(self) -> "GeneralizedPlant":
        """Uncertainty channels closed at zero perturbation."""
        if self.n_unc == 0:
            return self
        keep_in = np.arange(self.n_unc, self.plant.n_inputs)
        keep_out = np.arange(self.n_unc, self.plant.n_outputs)
        return GeneralizedPlant(self.plant.subsystem(keep_out, keep_in),
                                BlockStructure(()), self.n_w, self.n_u,
                                self.n_z, self.n_y)


def _filter_bank(w: StateSpaceModel, copies: int) -> StateSpaceModel:
    """copies identical SISO filters as one block-diagonal model."""
    A = linalg.block_diag(*([w.A] * copies)) if w.n_states else np.zeros((0, 0))
    B = linalg.block_diag(*([w.B] * copies)) if w.n_states else np.zeros((0, copies))
    C = linalg.block_diag(*([w.C] * copies)) if w.n_states else np.zeros((copies, 0))
    D = linalg.block_diag(*([w.D] * copies))
    return StateSpaceModel(A, B, C, D)


def assemble_weighted_plant(uv: UncertainVehiclePlant, weights: WeightSet,
                            actuator_tau: float = 0.0) -> GeneralizedPlant:
    """Wire the uncertain vehicle model into the weighted synthesis plant.

    The control channel is normalized: the controller commands u in units of
    the reference scale W_ref, the plant receives W_ref * u newtons, and the
    tracking errors compare reference and realized force on the normalized
    scale, so every weighted signal is dimensionless.

    With actuator_tau > 0, the four force commands pass through the
    first-order torque-tracking lag before reaching the vehicle and the
    tracking errors, mirroring the inner loop of the evaluation model; the
    actuator-effort weight stays on the raw commands.
    """
    veh = uv.plant
    n_unc = uv.structure.total_rows
    if veh.n_inputs != n_unc + 10 or veh.n_outputs != n_unc + 11:
        raise ValueError("vehicle plant has unexpected channel counts")

    lag = (ss_from_tf([1.0], [actuator_tau, 1.0]) if actuator_tau > 0
           else static_gain([[1.0]]))
    nv = veh.n_states
    banks = {
        "act": _filter_bank(weights.w_act, 4),
        "trk": _filter_bank(weights.w_trk, 4),
        "td": _filter_bank(weights.w_td, 4),
        "cmv": _filter_bank(weights.w_cmv, 1),
        "cmp": _filter_bank(weights.w_cmp, 1),
        "cmr": _filter_bank(weights.w_cmr, 1),
        "m": _filter_bank(weights.m_i, 4),
        "lag": _filter_bank(lag, 4),
    }
    order = ["act", "trk", "td", "cmv", "cmp", "cmr", "m", "lag"]
    offs = {}
    pos = nv
    for name in order:
        offs[name] = pos
        pos += banks[name].n_states
    n_total = pos

    m_in = n_unc + 10 + 4
    # input columns
    iu_unc = slice(0, n_unc)
    iu_ref = slice(n_unc, n_unc + 4)
    iu_rd = slice(n_unc + 4, n_unc + 8)
    iu_tp = n_unc + 8
    iu_tr = n_unc + 9
    iu_u = slice(n_unc + 10, n_unc + 14)

    A = np.zeros((n_total, n_total))
    B = np.zeros((n_total, m_in))

    # force commands pass through the lag bank (identity when tau = 0)
    lag_bank = banks["lag"]
    o_lag = offs["lag"]
    n_lag = lag_bank.n_states
    if n_lag:
        A[o_lag:o_lag + n_lag, o_lag:o_lag + n_lag] = lag_bank.A
        B[o_lag:o_lag + n_lag, iu_u] = lag_bank.B * weights.w_ref
    # realized physical corner forces (newtons) from the normalized commands
    F_C = np.zeros((4, n_total))
    if n_lag:
        F_C[:, o_lag:o_lag + n_lag] = lag_bank.C
    F_D = weights.w_ref * (lag_bank.D @ _u_selector(m_in, iu_u))

    # vehicle input map: physical vehicle inputs from normalized channels,
    # with the realized forces entering through the lag output maps
    Bv_map = np.zeros((veh.n_inputs, m_in))
    Bv_map[0:n_unc, iu_unc] = np.eye(n_unc)
    Bv_map[n_unc:n_unc + 4, iu_rd] = weights.w_rd * np.eye(4)
    Bv_map[n_unc + 4, iu_tp] = weights.w_tqp
    Bv_map[n_unc + 5, iu_tr] = weights.w_tqr
    Bv_F = veh.B[:, n_unc + 6:n_unc + 10]
    Dv_F = veh.D[:, n_unc + 6:n_unc + 10]

    A[:nv, :nv] = veh.A
    A[:nv, :] += Bv_F @ F_C
    B[:nv, :] = veh.B @ Bv_map + Bv_F @ F_D

    # vehicle output signal maps (as functions of total state and inputs)
    Cv = np.zeros((veh.n_outputs, n_total))
    Cv[:, :nv] = veh.C
    Cv += Dv_F @ F_C
    Dv = veh.D @ Bv_map + Dv_F @ F_D
    row = {"z_unc": slice(0, n_unc),
           "acc": slice(n_unc, n_unc + 3),
           "dls": slice(n_unc + 3, n_unc + 7),
           "dlt": slice(n_unc + 7, n_unc + 11)}

    # normalized tracking error e = w_ref - F_realized/W_ref (drives W_trk, M)
    E_C = -F_C / weights.w_ref
    E_D = np.zeros((4, m_in))
    E_D[:, iu_ref] = np.eye(4)
    E_D -= F_D / weights.w_ref

    def wire(name, sig_C, sig_D):
        """Feed signal into filter bank `name`; returns its output maps."""
        bank = banks[name]
        k = bank.B.shape[1]
        o = offs[name]
        ns = bank.n_states
        if ns:
            A[o:o + ns, o:o + ns] = bank.A
            A[o:o + ns, :] += bank.B @ sig_C
            B[o:o + ns, :] += bank.B @ sig_D
        outC = np.zeros((k, n_total))
        if ns:
            outC[:, o:o + ns] = bank.C
        outC += bank.D @ sig_C
        outD = bank.D @ sig_D
        return outC, outD

    zact_C, zact_D = wire("act", np.zeros((4, n_total)), _u_selector(m_in, iu_u))
    ztrk_C, ztrk_D = wire("trk", E_C, E_D)
    ztd_C, ztd_D = wire("td", Cv[row["dlt"], :], Dv[row["dlt"], :])
    acc_C = Cv[row["acc"], :]
    acc_D = Dv[row["acc"], :]
    zcmv_C, zcmv_D = wire("cmv", acc_C[0:1, :], acc_D[0:1, :])
    zcmp_C, zcmp_D = wire("cmp", acc_C[1:2, :], acc_D[1:2, :])
    zcmr_C, zcmr_D = wire("cmr", acc_C[2:3, :], acc_D[2:3, :])
    ym_C, ym_D = wire("m", E_C, E_D)

    n_out = n_unc + 15 + 11
    C = np.zeros((n_out, n_total))
    D = np.zeros((n_out, m_in))
    r = 0

    def put(Cb, Db):
        nonlocal r
        k = Cb.shape[0]
        C[r:r + k, :] = Cb
        D[r:r + k, :] = Db
        r += k

    put(Cv[row["z_unc"], :], Dv[row["z_unc"], :])
    put(zact_C, zact_D)
    put(ztrk_C, ztrk_D)
    put(ztd_C, ztd_D)
    put(zcmv_C, zcmv_D)
    put(zcmp_C, zcmp_D)
    put(zcmr_C, zcmr_D)
    put(ym_C, ym_D)
    put(Cv[row["dls"], :], Dv[row["dls"], :])
    put(acc_C, acc_D)

    in_labels = (tuple(veh.input_labels[:n_unc])
                 + tuple(f"w_ref{i+1}" for i in range(4))
                 + tuple(f"w_rd{i+1}" for i in range(4))
                 + ("w_tp", "w_tr")
                 + tuple(f"u{i+1}" for i in range(4)))
    out_labels = (tuple(veh.output_labels[:n_unc])
                  + tuple(f"z_act{i+1}" for i in range(4))
                  + tuple(f"z_trk{i+1}" for i in range(4))
                  + tuple(f"z_td{i+1}" for i in range(4))
                  + ("z_cmv", "z_cmp", "z_cmr")
                  + tuple(f"y_trk{i+1}" for i in range(4))
                  + tuple(f"y_dls{i+1}" for i in range(4))
                  + ("y_zsdd", "y_pitchdd", "y_rolldd"))
    state_labels = tuple(veh.state_labels) + tuple(
        f"w:{i+1}" for i in range(n_total - nv))
    plant = StateSpaceModel(A, B, C, D, in_labels, out_labels, state_labels)
    return GeneralizedPlant(plant, uv.structure)


def _u_selector(m_in, iu_u):
    sel = np.zeros((4, m_in))
    sel[:, iu_u] = np.eye(4)
    return sel


# ---------------------------------------------------------------------------
# H-infinity synthesis (two-Riccati central controller)


@dataclass(frozen=True)
class Controller:
    """Synthesized or PID controller with synthesis metadata.

    aw_input, when present, is the observer-form control-input matrix: the
    simulator drives it with the realized (saturation-limited) normalized
    command so the controller state cannot wind up."""

    K: StateSpaceModel | None
    kind: str
    gamma_achieved: float = math.nan
    mu_bound: float = math.nan
    iteration_log: tuple = ()
    pid_gains: dict | None = None
    aw_input: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("hinf", "mu", "pid", "blended"):
            raise ValueError(f"unknown controller kind {self.kind!r}")


def _ric_stabilizing(Ham, n):
    """Stabilizing solution from a 2n Hamiltonian, Newton-refined; None when
    the gamma level is infeasible (imaginary-axis eigenvalues, sign failure,
    or an irreducibly large residual)."""
    vals = np.linalg.eigvals(Ham)
    if np.any(np.abs(vals.real) < 1e-8):
        return None
    try:
        T, Z, sdim = linalg.schur(Ham, output="real", sort="lhp")
    except Exception:
        return None
    if sdim != n:
        return None
    U11 = Z[:n, :n]
    U21 = Z[n:, :n]
    if np.linalg.cond(U11) > 1e13:
        return None
    X = np.linalg.solve(U11.T, U21.T).T
    X = 0.5 * (X + X.T)

    # Newton (Kleinman) refinement on A'X + XA + Q + XGX = 0
    A = Ham[:n, :n]
    G = Ham[:n, n:]
    Q = -Ham[n:, :n]
    scale = max(np.linalg.norm(Q), np.linalg.norm(X) * np.linalg.norm(A), 1.0)

    def residual(Xc):
        return A.T @ Xc + Xc @ A + Q + Xc @ G @ Xc

    res = residual(X)
    for _ in range(4):
        if np.linalg.norm(res) <= 1e-11 * scale:
            break
        Acl = A + G @ X
        try:
            corr = linalg.solve_continuous_lyapunov(Acl.T, -res)
        except Exception:
            break
        X = 0.5 * (X + X.T + corr + corr.T)
        res = residual(X)
    if np.linalg.norm(res) > 1e-7 * scale:
        return None
    # tolerate rounding-level indefiniteness; the final controller is verified
    if np.min(np.linalg.eigvalsh(X)) < -(1e-3 * np.linalg.norm(X, 2) + 1e-8):
        return None
    return X


def _state_scaling(A, B, C, iters=4):
    """Diagonal similarity scaling (powers of two) equalizing row/column
    norms of [A B; C 0]; leaves the controller's I/O map unchanged."""
    n = A.shape[0]
    s = np.ones(n)
    for _ in range(iters):
        As = A * s[None, :] / s[:, None]
        Bs = B / s[:, None]
        Cs = C * s[None, :]
        row = np.sqrt(np.sum(As**2, axis=1) + np.sum(Bs**2, axis=1))
        col = np.sqrt(np.sum(As**2, axis=0) + np.sum(Cs**2, axis=0))
        upd = np.sqrt(np.maximum(row, 1e-300) / np.maximum(col, 1e-300))
        s *= np.exp2(np.round(np.log2(upd)))
    return s


class _HinfProblem:
    """Normalized four-block data with the transforms needed to recover the
    controller in original coordinates.

    noise: per-measurement fictitious sensor-noise scales appended to D21
    (regularizes the rank and sets the observer aggressiveness); a scalar
    applies uniformly.
    """

    def __init__(self, P: StateSpaceModel, n_y: int, n_u: int, noise=EPS_REG):
        n = P.n_states
        m1 = P.n_inputs - n_u
        p1 = P.n_outputs - n_y
        # balance the realization: the Riccati conditioning depends on it
        s = _state_scaling(P.A, P.B, P.C)
        A = P.A * s[None, :] / s[:, None]
        Bfull = P.B / s[:, None]
        Cfull = P.C * s[None, :]
        B1, B2 = Bfull[:, :m1], Bfull[:, m1:]
        C1, C2 = Cfull[:p1, :], Cfull[p1:, :]
        D11 = P.D[:p1, :m1]
        D12 = P.D[:p1, m1:]
        D21 = P.D[p1:, :m1]
        self.D22 = P.D[p1:, m1:]

        if np.max(np.abs(D11)) > 1e-9:
            raise NumericsError(
                "synthesis requires zero w->z feed-through; filter the offending inputs")

        # regularize rank-deficient D12 (extra eps*u costs) and append the
        # sensor-noise block to D21 (fixes its rank as a side effect)
        if np.linalg.matrix_rank(D12, tol=1e-9) < n_u:
            C1 = np.vstack([C1, np.zeros((n_u, n))])
            D12 = np.vstack([D12, EPS_REG * np.eye(n_u)])
            p1 += n_u
        noise_vec = np.broadcast_to(np.asarray(noise, float), (n_y,)).copy()
        noise_vec = np.maximum(noise_vec, EPS_REG)
        B1 = np.hstack([B1, np.zeros((n, n_y))])
        D21 = np.hstack([D21, np.diag(noise_vec)])
        m1 += n_y

        # normalize D12 -> [0; I]
        U, s, Vt = np.linalg.svd(D12)
        k = n_u
        Tz = np.vstack([U[:, k:].T, U[:, :k].T])      # rows: null part first
        Su = Vt.T / s                                  # u = Su u'
        C1 = Tz @ C1
        B2 = B2 @ Su
        D12 = np.vstack([np.zeros((p1 - k, k)), np.eye(k)])
        self._u_out = Su

        # normalize D21 -> [0 I]
        U2, s2, Vt2 = np.linalg.svd(D21)
        ky = n_y
        Tw = np.hstack([Vt2[ky:, :].T, Vt2[:ky, :].T])  # w = Tw w'
        Sy = (U2 / s2).T                                # y' = Sy y
        B1 = B1 @ Tw
        C2 = Sy @ C2
        D21 = np.hstack([np.zeros((ky, m1 - ky)), np.eye(ky)])
        self._y_in = Sy

        self.A, self.B1, self.B2 = A, B1, B2
        self.C1, self.C2 = C1, C2
        self.n, self.m1, self.p1 = n, m1, p1
        self.n_u, self.n_y = n_u, n_y
        # cross terms (D12 = [0;I], D21 = [0 I])
        self.C1u = C1[p1 - n_u:, :]           # D12^T C1
        self.C1z = C1[: p1 - n_u, :]
        self.B1y = B1[:, m1 - n_y:]           # B1 D21^T
        self.B1z = B1[:, : m1 - n_y]

    def riccatis(self, gamma):
        g2 = 1.0 / gamma**2
        As = self.A - self.B2 @ self.C1u
        Hx = np.block([
            [As, g2 * self.B1 @ self.B1.T - self.B2 @ self.B2.T],
            [-self.C1z.T @ self.C1z, -As.T],
        ])
        X = _ric_stabilizing(Hx, self.n)
        if X is None:
            return None
        At = self.A - self.B1y @ self.C2
        Hy = np.block([
            [At.T, g2 * self.C1.T @ self.C1 - self.C2.T @ self.C2],
            [-self.B1z @ self.B1z.T, -At],
        ])
        Y = _ric_stabilizing(Hy, self.n)
        if Y is None:
            return None
        rho = np.max(np.abs(np.linalg.eigvals(X @ Y)))
        if rho >= gamma**2 * (1.0 - 1e-9):
            return None
        return X, Y

    def central_controller(self, gamma, X, Y):
        """Central controller plus its observer-form control-input matrix.

        The controller is the worst-case observer with state feedback:
        A_K = A_obs + Bu @ C_K with A_obs Hurwitz, so a deployment that
        drives the Bu channel with the realized (saturated) command stays
        stable when the actuator limits, and is identical otherwise.
        """
        g2 = 1.0 / gamma**2
        F = -(self.B2.T @ X + self.C1u)
        L = -(Y @ self.C2.T + self.B1y)
        Z = np.linalg.solve(np.eye(self.n) - g2 * Y @ X, np.eye(self.n))
        ZL = Z @ L
        C2w = self.C2 + g2 * self.B1y.T @ X
        Ak = (self.A + g2 * self.B1 @ self.B1.T @ X + self.B2 @ F + ZL @ C2w)
        Bk = -ZL
        # undo channel normalizations
        Bk = Bk @ self._y_in
        Ck = self._u_out @ F
        Bu = self.B2 @ np.linalg.inv(self._u_out)
        K = StateSpaceModel(Ak, Bk, Ck, np.zeros((self.n_u, self.n_y)))
        # absorb the plant's D22 into the controller realization
        if np.max(np.abs(self.D22)) > 0:
            K = StateSpaceModel(K.A - K.B @ self.D22 @ K.C, K.B, K.C, K.D)
        return K, Bu


def _design_hinf(P: StateSpaceModel, n_y: int, n_u: int, gamma_tol: float,
                 gamma_max: float = 1e6, noise=EPS_REG, backoff: float = None):
    """Bisection on gamma with the two-Riccati feasibility test; returns
    (controller, gamma) with the central controller built at backoff times
    the smallest feasible level."""
    if backoff is None:
        backoff = GAMMA_BACKOFF
    prob = _HinfProblem(P, n_y, n_u, noise=noise)

    hi = 1.0
    sol = prob.riccatis(hi)
    while sol is None:
        hi *= 2.0
        if hi > gamma_max:
            raise NumericsError(f"no stabilizing controller below gamma={gamma_max:g}")
        sol = prob.riccatis(hi)
    lo = 0.0
    best = (hi, sol)
    while hi - lo > gamma_tol * hi:
        mid = 0.5 * (hi + lo)
        sol = prob.riccatis(mid)
        if sol is None:
            lo = mid
        else:
            hi = mid
            best = (mid, sol)
    gamma, (X, Y) = best
    gamma_use = gamma * max(backoff, 1.0 + 5.0 * gamma_tol)
    sol = prob.riccatis(gamma_use)
    if sol is not None:
        X, Y = sol
        gamma = gamma_use
    K, Bu = prob.central_controller(gamma, X, Y)
    return K, gamma, Bu


def hinf_synthesize(gp: GeneralizedPlant, gamma_tol: float = 1e-3,
                    noise=None) -> Controller:
    """Conventional design on the nominal plant (uncertainty channels closed
    at zero): two-Riccati central controller with gamma bisection, verified
    to be internally stabilizing with closed-loop norm within 1% of gamma."""
    nom = gp.nominal()
    if noise is None:
        noise = MEAS_NOISE if nom.n_y == MEAS_NOISE.size else EPS_REG
    K, gamma, Bu = _design_hinf(nom.plant, nom.n_y, nom.n_u, gamma_tol, noise=noise)
    cl = lft_lower(nom.plant, K, nu=nom.n_u, ny=nom.n_y)
    if not cl.is_stable():
        raise NumericsError("closed loop unstable after synthesis")
    achieved = hinf_norm(cl, 1e-4)
    if achieved > gamma * 1.01:
        raise NumericsError(
            f"closed-loop norm {achieved:.4g} exceeds 1.01*gamma ({gamma:.4g})")
    return Controller(K, "hinf", gamma_achieved=gamma,
                      iteration_log=((1, gamma, math.nan, 0),), aw_input=Bu)


# ---------------------------------------------------------------------------
# structured singular value upper bound and D-scale fitting


@dataclass(frozen=True)
class DScaling:
    """Per-channel positive scalings on a frequency grid plus rational fits."""

    omega: np.ndarray
    d_grid: np.ndarray            # (n_freq, n_channels)
    channel_blocks: tuple         # block index per scaled channel
    fits: tuple = ()              # StateSpaceModel per channel, may be empty

    def __post_init__(self):
        omega = np.asarray(self.omega, float)
        d = np.asarray(self.d_grid, float)
        if d.shape[0] != omega.size:
            raise ValueError("d_grid rows must match omega")
        if np.any(d <= 0):
            raise ValueError("scalings must be positive")
        omega.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "d_grid", d)


def _structure_channels(structure: BlockStructure):
    """Block index for each uncertainty channel (repeated scalars expand)."""
    idx = []
    for b, (kind, rows, _, _) in enumerate(structure.blocks):
        idx.extend([b] * rows)
    return tuple(idx)


def _scaled_sv(N, d, n_unc):
    """Largest singular value of diag(d,I) N diag(d,I)^-1."""
    M = N.copy()
    M[:n_unc, :] *= d[:, None]
    M[:, :n_unc] /= d[None, :]
    return np.linalg.norm(M, 2)


D_RANGE_DECADES = 2.0  # scalings confined to [10^-2, 10^2]: flat directions
                       # of the minimization otherwise wander unboundedly


def _optimize_d_at_freq(N, n_unc, d0, tol=1e-6, max_sweeps=200):
    """Coordinate descent on log-d; returns (d, sv, converged)."""
    cap = D_RANGE_DECADES * math.log(10.0)
    d = np.clip(d0, math.exp(-cap), math.exp(cap))
    sv = _scaled_sv(N, d, n_unc)
    converged = False
    for _ in range(max_sweeps):
        prev = sv
        for i in range(n_unc):
            base = math.log(d[i])

            def f(t, i=i):
                d_try = d.copy()
                d_try[i] = math.exp(base + t)
                return _scaled_sv(N, d_try, n_unc)

            lo = max(-2.0, -cap - base)
            hi = min(2.0, cap - base)
            res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                           options={"xatol": 1e-4})
            if res.fun < sv:
                d[i] = math.exp(base + res.x)
                sv = res.fun
        if prev - sv <= tol * max(prev, 1e-30):
            converged = True
            break
    return d, sv, converged


def mu_upper_bound(N: FrequencyResponse, structure: BlockStructure):
    """Structured-singular-value upper bound per grid frequency.

    Channels beyond the structured blocks are treated as one full complex
    block (robust-performance convention) whose scaling is fixed at identity;
    real scalar blocks are treated as complex scalars, so the bound is
    conservative.  Returns (mu_grid, DScaling).
    """
    n_unc_rows = structure.total_rows
    n_unc_cols = structure.total_cols
    nf, p, m = N.H.shape
    if n_unc_rows > p or n_unc_cols > m:
        raise ValueError("structure larger than the response channels")
    channels = _structure_channels(structure)
    n_unc = len(channels)
    mu = np.zeros(nf)
    d_grid = np.ones((nf, n_unc))
    d = np.ones(n_unc)
    for k in range(nf):
        Nk = N.H[k]
        if n_unc == 0:
            mu[k] = np.linalg.norm(Nk, 2)
            continue
        # warm start from the previous frequency
        d, sv, _ = _optimize_d_at_freq(Nk, n_unc, d)
        mu[k] = sv
        d_grid[k] = d
    return mu, DScaling(N.omega, d_grid, channels)


def _fit_channel(omega, d_vals, max_order, weights=None):
    """Stable minimum-phase rational |fit| of positive magnitude data via
    weighted log-magnitude least squares; biproper so the inverse is
    realizable."""
    logd = np.log(d_vals)
    wts = np.ones(omega.size) if weights is None else np.asarray(weights, float)
    wts = np.sqrt(wts / wts.max())
    spread = float(np.max(logd) - np.min(logd))
    # constant data: zeroth-order fit is exact
    if spread < 1e-4:
        g = float(np.exp(np.mean(logd)))
        return static_gain([[g]]), 0.0, 0

    def model_logmag(params, order):
        g = params[0]
        zs = np.exp(params[1:1 + order])
        ps = np.exp(params[1 + order:1 + 2 * order])
        val = np.full(omega.size, g)
        for z in zs:
            val = val + 0.5 * np.log(omega**2 + z**2) - math.log(z)
        for pp in ps:
            val = val - 0.5 * np.log(omega**2 + pp**2) + math.log(pp)
        return val

    best = None
    w_lo, w_hi = math.log(omega[0]), math.log(omega[-1])
    # corner frequencies confined to the grid (faster allowed above): slower
    # corners would add fragile near-integrator states to the scaled plant
    lo_b, hi_b = w_lo, w_hi + 2.3
    for order in (1, 2, max_order):
        starts = []
        rng = np.random.default_rng(0)
        for trial in range(4):
            zs = rng.uniform(w_lo, w_hi, order)
            ps = rng.uniform(w_lo, w_hi, order)
            starts.append(np.concatenate([[np.mean(logd)], zs, ps]))
        lower = np.concatenate([[np.min(logd) - 5.0], np.full(2 * order, lo_b)])
        upper = np.concatenate([[np.max(logd) + 5.0], np.full(2 * order, hi_b)])
        for x0 in starts:
            res = optimize.least_squares(
                lambda p: (model_logmag(p, order) - logd) * wts,
                np.clip(x0, lower + 1e-9, upper - 1e-9),
                bounds=(lower, upper), method="trf", max_nfev=800)
            err_db = (model_logmag(res.x, order) - logd) * 20 / math.log(10.0)
            rms_db = float(np.sqrt(np.mean((err_db * wts) ** 2) / np.mean(wts**2)))
            if best is None or rms_db < best[1]:
                best = (res.x, rms_db, order)
        if best[1] <= 0.25:
            break
    params, rms_db, order = best
    g = math.exp(params[0])
    zs = np.exp(params[1:1 + order])
    ps = np.exp(params[1 + order:1 + 2 * order])
    num = np.array([g])
    den = np.array([1.0])
    for z in zs:
        num = np.polymul(num, [1.0 / z, 1.0])
    for pp in ps:
        den = np.polymul(den, [1.0 / pp, 1.0])
    return ss_from_tf(num, den), rms_db, order


def fit_d_scalings(D: DScaling, max_order: int = 4, weights=None) -> DScaling:
    """Rational minimum-phase fits of the gridded scalings (order escalated
    up to max_order when the RMS target is missed).

    The grid data is lightly smoothed along frequency (flat directions of
    the minimization leave coordinate-descent noise the fit should not
    chase); optional per-frequency weights concentrate accuracy where it
    matters, typically near the mu peak.
    """
    fits = []
    for ch in range(D.d_grid.shape[1]):
        logd = np.log(D.d_grid[:, ch])
        if logd.size >= 5:
            kernel = np.array([0.25, 0.5, 0.25])
            inner = np.convolve(logd, kernel, mode="valid")
            logd = np.concatenate([[logd[0]], inner, [logd[-1]]])
        fit, rms_db, _ = _fit_channel(D.omega, np.exp(logd), max_order, weights)
        fits.append(fit)
    return DScaling(D.omega, D.d_grid, D.channel_blocks, tuple(fits))


def _fit_error_db(D: DScaling):
    errs = []
    for ch, fit in enumerate(D.fits):
        H = np.abs(freq_response(fit, D.omega).H[:, 0, 0])
        errs.append(np.sqrt(np.mean((20 * np.log10(H / D.d_grid[:, ch])) ** 2)))
    return errs


def _invert_biproper_siso(G: StateSpaceModel) -> StateSpaceModel:
    d = G.D[0, 0]
    if abs(d) < 1e-12:
        raise NumericsError("cannot invert a strictly proper scaling")
    dinv = 1.0 / d
    return StateSpaceModel(G.A - G.B @ G.C * dinv, G.B * dinv,
                           -dinv * G.C, [[dinv]])


def _apply_output_filter(P: StateSpaceModel, row: int, filt: StateSpaceModel):
    """Pass one output channel of P through a SISO filter."""
    n, nf = P.n_states, filt.n_states
    A = linalg.block_diag(P.A, filt.A)
    A[n:, :n] = filt.B @ P.C[row:row + 1, :]
    B = np.vstack([P.B, filt.B @ P.D[row:row + 1, :]])
    C = np.hstack([P.C, np.zeros((P.n_outputs, nf))])
    C[row, :n] = (filt.D @ P.C[row:row + 1, :]).ravel()
    C[row, n:] = filt.C.ravel()
    D = P.D.copy()
    D[row, :] = (filt.D @ P.D[row:row + 1, :]).ravel()
    return StateSpaceModel(A, B, C, D, P.input_labels, P.output_labels)


def _apply_input_filter(P: StateSpaceModel, col: int, filt: StateSpaceModel):
    """Pre-filter one input channel of P with a SISO filter."""
    n, nf = P.n_states, filt.n_states
    A = linalg.block_diag(P.A, filt.A)
    A[:n, n:] = P.B[:, col:col + 1] @ filt.C
    B = P.B.copy()
    B[:, col] = (P.B[:, col:col + 1] @ filt.D).ravel()
    B = np.vstack([B, np.zeros((nf, P.n_inputs))])
    B[n:, col] = filt.B.ravel()
    C = np.hstack([P.C, P.D[:, col:col + 1] @ filt.C])
    D = P.D.copy()
    D[:, col] = (P.D[:, col:col + 1] @ filt.D).ravel()
    return StateSpaceModel(A, B, C, D, P.input_labels, P.output_labels)


@dataclass(frozen=True)
class DkOptions:
    max_iters: int = 6
    gamma_tol: float = 1e-3
    grid: np.ndarray = field(default_factory=lambda: TWO_PI * np.geomspace(0.01, 100.0, 60))
    fit_max_order: int = 4
    order_cap: int = 50
    mu_degradation: float = 0.05
    improvement_tol: float = 0.01


def _scaled_kstep_plant(gp: GeneralizedPlant, fits):
    """Wrap the uncertainty channels with the fitted scalings (outputs by
    d_hat, inputs by d_hat^-1) plus the fast low-pass that removes the
    uncertainty feed-through for the Riccati solver."""
    P = gp.plant
    n_unc = gp.n_unc
    lp = ss_from_tf([1.0], [1.0 / UNC_FILTER_W, 1.0])
    for ch in range(n_unc):
        fit = fits[ch] if fits is not None else None
        if fit is not None and fit.n_states == 0 and abs(fit.D[0, 0] - 1.0) < 1e-12:
            fit = None
        if fit is not None:
            P = _apply_output_filter(P, ch, fit)
            pre = interconnect_series(lp, _invert_biproper_siso(fit))
        else:
            pre = lp
        P = _apply_input_filter(P, ch, pre)
    return P


def _truncate_aw(K: StateSpaceModel, Bu: np.ndarray, order_cap: int):
    """Balanced truncation of the (stable) observer realization; returns the
    reduced controller and its transformed anti-windup input matrix."""
    if K.n_states <= order_cap:
        return K, Bu
    A_obs = K.A - Bu @ K.C
    aw = StateSpaceModel(A_obs, np.hstack([K.B, Bu]), K.C,
                         np.zeros((K.n_outputs, K.n_inputs + Bu.shape[1])))
    if not aw.is_stable():
        # unexpected: fall back to plain truncation without anti-windup data
        return _truncate_controller(K, order_cap), None
    red, _ = balanced_truncate(aw, order_cap)
    Bk = red.B[:, :K.n_inputs]
    Bu_r = red.B[:, K.n_inputs:]
    Kr = StateSpaceModel(red.A + Bu_r @ red.C, Bk, red.C,
                         np.zeros((K.n_outputs, K.n_inputs)))
    return Kr, Bu_r


def _truncate_controller(K: StateSpaceModel, order_cap: int):
    """Balanced truncation capped at order_cap; unstable controllers keep the
    antistable part untouched."""
    if K.n_states <= order_cap:
        return K
    eigs = np.linalg.eigvals(K.A)
    if np.max(eigs.real) < 0:
        red, _ = balanced_truncate(K, order_cap)
        return red
    # split off the antistable part via ordered Schur and truncate the rest
    T, Z, sdim = linalg.schur(K.A, output="real", sort="lhp")
    ns = sdim
    if ns == 0:
        return K
    Bs = Z.T @ K.B
    Cs = K.C @ Z
    A11 = T[:ns, :ns]
    A12 = T[:ns, ns:]
    A22 = T[ns:, ns:]
    # decouple through a Sylvester transformation
    Xs = linalg.solve_sylvester(A11, -A22, -A12)
    Bstab = Bs[:ns, :] - Xs @ Bs[ns:, :]
    Cstab = Cs[:, :ns]
    Canti = Cs[:, ns:] + Cs[:, :ns] @ Xs
    stable = StateSpaceModel(A11, Bstab, Cstab, np.zeros((K.n_outputs, K.n_inputs)))
    anti = StateSpaceModel(A22, Bs[ns:, :], Canti, K.D)
    target = max(order_cap - (K.n_states - ns), 1)
    red, _ = balanced_truncate(stable, target)
    A = linalg.block_diag(red.A, anti.A)
    B = np.vstack([red.B, anti.B])
    C = np.hstack([red.C, anti.C])
    return StateSpaceModel(A, B, C, anti.D)


def _closed_loop_mu(gp: GeneralizedPlant, K: StateSpaceModel, grid):
    N = lft_lower(gp.plant, K, nu=gp.n_u, ny=gp.n_y)
    if not N.is_stable():
        return None, None, None, None
    resp = freq_response(N, grid)
    mu_grid, D = mu_upper_bound(resp, gp.structure)
    return float(np.max(mu_grid)), mu_grid, D, resp


def _predicted_scaled_peak(resp: FrequencyResponse, fits, n_unc):
    """Peak over the grid of sigma_max(diag(dhat) N diag(dhat)^-1) for the
    fitted scalings: what the next K-step would have to beat."""
    dmag = np.stack(
        [np.abs(freq_response(f, resp.omega).H[:, 0, 0]) for f in fits], axis=1)
    peak = 0.0
    for k in range(resp.n_freq):
        M = resp.H[k].copy()
        M[:n_unc, :] *= dmag[k][:, None]
        M[:, :n_unc] /= dmag[k][None, :]
        peak = max(peak, float(np.linalg.norm(M, 2)))
    return peak


def dk_iterate(gp: GeneralizedPlant, max_iters: int | None = None,
               options: DkOptions | None = None) -> Controller:
    """Alternating H-infinity synthesis and D-scale optimization; keeps the
    best (lowest peak mu) iterate.  With no uncertainty channels this reduces
    to plain H-infinity synthesis."""
    opts = options or DkOptions()
    if max_iters is not None:
        opts = replace(opts, max_iters=max_iters)
    if gp.n_unc == 0:
        ctrl = hinf_synthesize(gp, opts.gamma_tol)
        return Controller(ctrl.K, "mu", gamma_achieved=ctrl.gamma_achieved,
                          mu_bound=math.nan, iteration_log=ctrl.iteration_log,
                          aw_input=ctrl.aw_input)

    noise = MEAS_NOISE if gp.n_y == MEAS_NOISE.size else EPS_REG
    fits = None
    best_K = None
    best_Bu = None
    best_peak = math.inf
    best_gamma = math.nan
    log = []
    for it in range(1, opts.max_iters + 1):
        P_step = _scaled_kstep_plant(gp, fits)
        try:
            K_full, gamma, Bu_full = _design_hinf(P_step, gp.n_y, gp.n_u,
                                                  opts.gamma_tol, noise=noise)
        except NumericsError:
            if it == 1:
                raise
            break
        K, Bu = _truncate_aw(K_full, Bu_full, opts.order_cap)
        peak, mu_grid, D, resp = _closed_loop_mu(gp, K, opts.grid)
        if peak is not None and K.n_states < K_full.n_states:
            # verify the truncation kept the mu peak (within tolerance)
            peak_full, _, _, _ = _closed_loop_mu(gp, K_full, opts.grid)
            order = K.n_states
            while (peak_full is not None and peak is not None
                   and peak > peak_full * (1 + opts.mu_degradation)
                   and order < K_full.n_states):
                order += 10
                K, Bu = _truncate_aw(K_full, Bu_full, order)
                peak, mu_grid, D, resp = _closed_loop_mu(gp, K, opts.grid)
        if peak is None:
            log.append((it, gamma, math.inf, _d_orders(fits)))
            break
        improved = peak < best_peak * (1 - 1e-12)
        rel_gain = 0.0
        if improved:
            rel_gain = (best_peak - peak) / best_peak if math.isfinite(best_peak) else 1.0
            best_K, best_Bu, best_peak, best_gamma = K, Bu, peak, gamma
            best_D, best_resp, best_mu = D, resp, mu_grid
        log.append((it, gamma, best_peak, _d_orders(fits)))
        if best_peak <= 1.0:
            break
        if it > 1 and rel_gain < opts.improvement_tol:
            break
        if it < opts.max_iters:
            # D-step: candidate fits with different near-peak emphasis;
            # keep the one whose predicted scaled peak is lowest
            candidates = []
            for power, floor, order in ((0, 1.0, 2), (2, 0.25, 2),
                                        (4, 0.1, opts.fit_max_order),
                                        (2, 0.25, opts.fit_max_order)):
                wts = np.maximum((best_mu / np.max(best_mu)) ** power, floor)
                Dfit = fit_d_scalings(best_D, order, weights=wts)
                pred = _predicted_scaled_peak(best_resp, Dfit.fits, gp.n_unc)
                candidates.append((pred, Dfit))
            # pred >= best_peak always; the excess measures fit infidelity
            pred, Dfit = min(candidates, key=lambda c: c[0])
            if pred > best_peak * (1 + 10 * opts.improvement_tol):
                break  # fits too loose for the K-step to gain anything
            fits = Dfit.fits
    if best_K is None:
        raise NumericsError("D-K iteration produced no stabilizing iterate")
    return Controller(best_K, "mu", gamma_achieved=best_gamma,
                      mu_bound=best_peak, iteration_log=tuple(log),
                      aw_input=best_Bu)


def _d_orders(fits):
    if fits is None:
        return 0
    return max((f.n_states for f in fits), default=0)


# ---------------------------------------------------------------------------
# PID attitude control and blending


class PidAttitude:
    """Two parallel PIDs (pitch, roll) with filtered derivatives, integral
    anti-windup clamping, and the fixed four-corner force distribution.

    Gains act on angle errors in degrees.  The anti-windup clamp keeps each
    corner's force request within what the actuator peak torque can realize.
    """

    DERIV_POLE = 100.0  # rad/s

    def __init__(self, gains: dict, params: VehicleParams):
        self.kp_p, self.ki_p, self.kd_p = gains["pitch"]
        self.kp_r, self.ki_r, self.kd_r = gains["roll"]
        # effort limit: distribution halves the effort per corner
        self.limit = 2.0 * params.torque_peak / params.l_beta
        self.reset()

    def reset(self):
        self.i_p = 0.0
        self.i_r = 0.0
        self.df_p = 0.0
        self.df_r = 0.0
        self.e_p_prev = 0.0
        self.e_r_prev = 0.0

    def step(self, pitch: float, roll: float, dt: float) -> np.ndarray:
        """Angles in radians; returns the four corner force references."""
        e_p = math.degrees(pitch)
        e_r = math.degrees(roll)
        a = math.exp(-self.DERIV_POLE * dt)
        # filtered derivative states track the error through a first-order lag
        self.df_p = e_p + (self.df_p - e_p) * a
        self.df_r = e_r + (self.df_r - e_r) * a
        d_p = self.DERIV_POLE * (e_p - self.df_p)
        d_r = self.DERIV_POLE * (e_r - self.df_r)
        self.i_p += self.ki_p * 0.5 * (e_p + self.e_p_prev) * dt
        self.i_r += self.ki_r * 0.5 * (e_r + self.e_r_prev) * dt
        self.i_p = min(max(self.i_p, -self.limit), self.limit)
        self.i_r = min(max(self.i_r, -self.limit), self.limit)
        self.e_p_prev = e_p
        self.e_r_prev = e_r
        u_p = self.kp_p * e_p + self.i_p + self.kd_p * d_p
        u_r = self.kp_r * e_r + self.i_r + self.kd_r * d_r
        return 0.5 * np.array([u_p + u_r, u_p - u_r, -u_p + u_r, -u_p - u_r])

    @staticmethod
    def distribution_matrix():
        """Columns map (pitch effort, roll effort) to corner forces."""
        return 0.5 * np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])


def pid_controller(scheme: str) -> Controller:
    """PID attitude controller for one of the pid-bearing schemes; the LTI
    part of K maps (pitch, roll) to the four forces (clamping is applied by
    the runtime stepper)."""
    if scheme not in PID_GAINS:
        raise ValueError(f"no PID gains defined for scheme {scheme!r}")
    gains = PID_GAINS[scheme]
    deg = 180.0 / math.pi
    wd = PidAttitude.DERIV_POLE

    def axis_pid(kp, ki, kd):
        # kp + ki/s + kd s wd/(s+wd), inputs in rad
        num = np.polyadd(np.polyadd(
            np.polymul([kp], [1.0, wd, 0.0]),
            np.polymul([ki], [1.0, wd])),
            np.polymul([kd * wd], [1.0, 0.0, 0.0]))
        return ss_from_tf(deg * num, [1.0, wd, 0.0])

    gp = axis_pid(*gains["pitch"])
    gr = axis_pid(*gains["roll"])
    dist = PidAttitude.distribution_matrix()
    A = linalg.block_diag(gp.A, gr.A)
    B = linalg.block_diag(gp.B, gr.B)
    C = dist @ linalg.block_diag(gp.C, gr.C)
    D = dist @ linalg.block_diag(gp.D, gr.D)
    K = StateSpaceModel(A, B, C, D,
                        ("pitch", "roll"),
                        ("Fref1", "Fref2", "Fref3", "Fref4"))
    return Controller(K, "pid", pid_gains=gains)


def blend(K_high: Controller, pid: Controller) -> Controller:
    """Combine a synthesized high-frequency controller with the PID attitude
    controller: the PID force references drive the tracking-error channels
    and add to the high-frequency force commands."""
    if K_high.K is None or K_high.kind not in ("hinf", "mu"):
        raise ValueError("blend needs a synthesized hinf/mu controller")
    if pid.kind != "pid" or pid.pid_gains is None:
        raise ValueError("blend needs a pid controller")
    if K_high.K.n_inputs != 11 or K_high.K.n_outputs != 4:
        raise ValueError("high-frequency controller has unexpected channels")
    return Controller(K_high.K, "blended",
                      gamma_achieved=K_high.gamma_achieved,
                      mu_bound=K_high.mu_bound,
                      iteration_log=K_high.iteration_log,
                      pid_gains=pid.pid_gains,
                      aw_input=K_high.aw_input)


# ---------------------------------------------------------------------------
# serialization


def save_controller(ctrl: Controller, path) -> None:
    """Plain-JSON matrix container: A/B/C/D, labels and metadata."""
    import json

    payload = {
        "kind": ctrl.kind,
        "gamma_achieved": None if math.isnan(ctrl.gamma_achieved) else ctrl.gamma_achieved,
        "mu_bound": None if math.isnan(ctrl.mu_bound) else ctrl.mu_bound,
        "iteration_log": [list(row) for row in ctrl.iteration_log],
        "pid_gains": ctrl.pid_gains,
    }
    if ctrl.K is not None:
        payload["K"] = {
            "A": ctrl.K.A.tolist(), "B": ctrl.K.B.tolist(),
            "C": ctrl.K.C.tolist(), "D": ctrl.K.D.tolist(),
            "input_labels": list(ctrl.K.input_labels),
            "output_labels": list(ctrl.K.output_labels),
        }
    if ctrl.aw_input is not None:
        payload["aw_input"] = np.asarray(ctrl.aw_input).tolist()
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


def load_controller(path) -> Controller:
    import json

    with open(path, "r") as fh:
        payload = json.load(fh)
    K = None
    if "K" in payload:
        kd = payload["K"]
        K = StateSpaceModel(np.array(kd["A"]), np.array(kd["B"]),
                            np.array(kd["C"]), np.array(kd["D"]),
                            tuple(kd["input_labels"]), tuple(kd["output_labels"]))
    gamma = payload.get("gamma_achieved")
    mu = payload.get("mu_bound")
    aw = payload.get("aw_input")
    return Controller(
        K, payload["kind"],
        gamma_achieved=math.nan if gamma is None else float(gamma),
        mu_bound=math.nan if mu is None else float(mu),
        iteration_log=tuple(tuple(row) for row in payload.get("iteration_log", [])),
        pid_gains=payload.get("pid_gains"),
        aw_input=None if aw is None else np.array(aw, dtype=float),
    )
