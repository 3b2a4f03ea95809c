"""Linear-equivalent PALS full-car model and its uncertain LFT form.

Builds the 14-state linear model used for control synthesis (heave, pitch,
roll, four unsprung masses, suspension deflections and independent tire
deflections), the exact LFT pull-out of the sprung-mass and axle-damping
parameter uncertainties, and the nonlinear ingredients of the evaluation
model: piecewise-linear damper maps, the rocker-torque conversion and the
first-order actuator lag.

State ordering of the design model (14):
    [zs_rate, pitch_rate, roll_rate, zu_rate(4), dls(4), dlt(3)]
The fourth tire deflection is not an independent state: the warp combination
of total corner compression is driven only by road warp, carries no force to
the chassis, and is not stabilizable from the actuators, so it is eliminated
and dlt4 is reconstructed from the remaining deflections.  The time-domain
simulator integrates positions directly and keeps the full physics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .ssmodel import BlockStructure, StateSpaceModel

__all__ = [
    "DamperMap",
    "VehicleParams",
    "UncertainVehiclePlant",
    "default_damper_map",
    "damper_force",
    "build_fullcar",
    "build_uncertain",
    "beta_convert",
    "beta_invert",
    "actuator_step",
    "load_params",
    "params_to_dict",
    "params_from_dict",
]


@dataclass(frozen=True)
class DamperMap:
    """Odd-symmetric piecewise-linear damper characteristic.

    Breakpoints are (velocity m/s, force N) pairs with strictly increasing
    velocities; beyond the last breakpoint the final segment slope is
    extrapolated.
    """

    breakpoints: tuple

    def __post_init__(self):
        pts = tuple((float(v), float(f)) for v, f in self.breakpoints)
        if len(pts) < 2:
            raise ValueError("damper map needs at least two breakpoints")
        v = np.array([p[0] for p in pts])
        f = np.array([p[1] for p in pts])
        if np.any(np.diff(v) <= 0):
            raise ValueError("damper velocities must be strictly increasing")
        if np.any(np.diff(f) < 0):
            raise ValueError("damper map must be monotone nondecreasing")
        # odd symmetry about the origin
        if not (np.allclose(v, -v[::-1], atol=1e-12) and np.allclose(f, -f[::-1], atol=1e-9)):
            raise ValueError("damper map must be odd-symmetric")
        object.__setattr__(self, "breakpoints", pts)

    @property
    def velocities(self):
        return np.array([p[0] for p in self.breakpoints])

    @property
    def forces(self):
        return np.array([p[1] for p in self.breakpoints])

    def secant(self, v=0.5):
        """Average slope over [-v, +v]."""
        return damper_force(self, v) / v


def default_damper_map(c_nominal: float) -> DamperMap:
    """Five-segment knee-shaped map: 1.6x nominal slope at low speed,
    0.55x at high speed, secant-calibrated to c_nominal at +-0.5 m/s."""
    v = np.array([0.1, 0.5, 1.0])
    f = c_nominal * np.array([0.16, 0.5, 0.775])
    pts = [(-vv, -ff) for vv, ff in zip(v[::-1], f[::-1])]
    pts += [(vv, ff) for vv, ff in zip(v, f)]
    return DamperMap(tuple(pts))


def damper_force(dmap: DamperMap, v: float) -> float:
    """Interpolated damper force; extrapolates with the final segment slope."""
    vx = dmap.velocities
    fx = dmap.forces
    if v > vx[-1]:
        slope = (fx[-1] - fx[-2]) / (vx[-1] - vx[-2])
        return float(fx[-1] + slope * (v - vx[-1]))
    if v < vx[0]:
        slope = (fx[1] - fx[0]) / (vx[1] - vx[0])
        return float(fx[0] + slope * (v - vx[0]))
    return float(np.interp(v, vx, fx))


@dataclass(frozen=True)
class VehicleParams:
    """Full-car parameter set: SUV defaults with configurable estimates."""

    M_nom: float = 2700.0            # nominal sprung mass, kg
    m_u: float = 62.5                # unsprung mass per corner, kg
    k_eq_f: float = 53.5e3           # front equivalent suspension stiffness, N/m
    k_eq_r: float = 50.0e3           # rear (spring stiffness x installation ratio^2)
    c_eq_f_nom: float = 2355.0       # nominal front axle damping, N s/m
    c_eq_r_nom: float = 2002.0
    k_t: float = 290e3               # tire vertical stiffness, N/m
    c_t: float = 300.0               # tire damping, N s/m
    t_f: float = 1.677               # front track width, m
    t_r: float = 1.696
    a_f: float = 1.538               # CMC-to-front-axle distance, m
    a_r: float = 1.538
    h_cmc: float = 0.71              # CMC height, m
    I_pitch: float = 3100.0          # chassis pitch inertia estimate, kg m^2
    I_roll: float = 950.0
    delta_M_frac: float = 0.11       # sprung-mass uncertainty fraction
    delta_c_frac: float = 0.30       # axle damping uncertainty fraction
    l_beta: float = 0.0922           # rocker lever arm, m
    beta_kappa1: float = 0.0         # optional geometry polynomial terms
    beta_kappa2: float = 0.0
    torque_continuous: float = 166.0  # LSS continuous torque, N m
    torque_peak: float = 273.0        # LSS peak torque, N m
    actuator_tau: float = 0.005       # torque-tracking lag, s
    F_rc_max: float = 1800.0          # linear-equivalent force normalization, N
    damper_map_f: DamperMap = None
    damper_map_r: DamperMap = None

    def __post_init__(self):
        if self.damper_map_f is None:
            object.__setattr__(self, "damper_map_f", default_damper_map(self.c_eq_f_nom))
        if self.damper_map_r is None:
            object.__setattr__(self, "damper_map_r", default_damper_map(self.c_eq_r_nom))
        positive = [
            ("M_nom", self.M_nom), ("m_u", self.m_u),
            ("k_eq_f", self.k_eq_f), ("k_eq_r", self.k_eq_r),
            ("c_eq_f_nom", self.c_eq_f_nom), ("c_eq_r_nom", self.c_eq_r_nom),
            ("k_t", self.k_t), ("t_f", self.t_f), ("t_r", self.t_r),
            ("a_f", self.a_f), ("a_r", self.a_r), ("h_cmc", self.h_cmc),
            ("I_pitch", self.I_pitch), ("I_roll", self.I_roll),
            ("l_beta", self.l_beta), ("actuator_tau", self.actuator_tau),
            ("F_rc_max", self.F_rc_max),
        ]
        for name, value in positive:
            if value <= 0:
                raise ValueError(f"{name} must be strictly positive, got {value}")
        for axle, dmap, c_nom in (("front", self.damper_map_f, self.c_eq_f_nom),
                                  ("rear", self.damper_map_r, self.c_eq_r_nom)):
            sec = dmap.secant(0.5)
            if abs(sec - c_nom) > 0.02 * c_nom:
                raise ValueError(
                    f"{axle} damper secant {sec:.1f} deviates more than 2% "
                    f"from nominal {c_nom:.1f}")

    @property
    def wheelbase(self):
        return self.a_f + self.a_r

    @property
    def total_mass(self):
        return self.M_nom + 4 * self.m_u

    @property
    def M_min(self):
        return self.M_nom * (1.0 - self.delta_M_frac)

    @property
    def M_max(self):
        return self.M_nom * (1.0 + self.delta_M_frac)

    def corner_stiffness(self):
        return np.array([self.k_eq_f, self.k_eq_f, self.k_eq_r, self.k_eq_r])

    def corner_damping(self, c_f=None, c_r=None):
        c_f = self.c_eq_f_nom if c_f is None else c_f
        c_r = self.c_eq_r_nom if c_r is None else c_r
        return np.array([c_f, c_f, c_r, c_r])

    def geometry_matrix(self):
        """Rows map [zs, pitch, roll] to corner heights: FL, FR, RL, RR."""
        return np.array([
            [1.0, -self.a_f, -self.t_f / 2],
            [1.0, -self.a_f, +self.t_f / 2],
            [1.0, +self.a_r, -self.t_r / 2],
            [1.0, +self.a_r, +self.t_r / 2],
        ])

    def warp_vector(self):
        """Null direction of the corner-geometry map (road warp pattern)."""
        return np.array([self.t_r / self.t_f, -self.t_r / self.t_f, -1.0, 1.0])


OUTPUT_LABELS = ("zsdd", "pitchdd", "rolldd",
                 "dls1", "dls2", "dls3", "dls4",
                 "dlt1", "dlt2", "dlt3", "dlt4")
INPUT_LABELS = ("zr_rate1", "zr_rate2", "zr_rate3", "zr_rate4",
                "Tp", "Tr", "Frc1", "Frc2", "Frc3", "Frc4")
STATE_LABELS = ("zs_rate", "pitch_rate", "roll_rate",
                "zu_rate1", "zu_rate2", "zu_rate3", "zu_rate4",
                "dls1", "dls2", "dls3", "dls4",
                "dlt1", "dlt2", "dlt3")
UNC_LABELS = ("dMs", "dcf1", "dcf2", "dcr3", "dcr4")


def _assemble(params: VehicleParams, M_s, c_f, c_r, uncertain: bool):
    """Shared matrix assembly for the nominal model and the LFT channels.

    With uncertain=True the heave equation uses 1/M_nom with an exact
    mass-channel correction and the corner damping uses the nominal values
    plus per-corner perturbation-force inputs.
    """
    n = 14
    G = params.geometry_matrix()
    v = params.warp_vector()
    k = params.corner_stiffness()
    c = params.corner_damping(c_f, c_r)
    mu = params.m_u
    inertia = np.array([M_s, params.I_pitch, params.I_roll])

    S_q = np.zeros((3, n)); S_q[:, 0:3] = np.eye(3)
    S_zu = np.zeros((4, n)); S_zu[:, 3:7] = np.eye(4)
    S_dls = np.zeros((4, n)); S_dls[:, 7:11] = np.eye(4)
    # tire deflection expansion: first three are states, the fourth is
    # reconstructed from the warp constraint v.(dls + dlt) = 0
    EXP = np.zeros((4, n))
    EXP[0:3, 11:14] = np.eye(3)
    EXP[3, 7:11] = -v
    EXP[3, 11:14] = -v[:3]

    dls_rate = S_zu - G @ S_q                      # 4 x n
    Fs_x = np.diag(k) @ S_dls + np.diag(c) @ dls_rate
    Ft_x = params.k_t * EXP - params.c_t * S_zu

    m_unc = 5 if uncertain else 0
    m = m_unc + 10
    A = np.zeros((n, n))
    B = np.zeros((n, m))

    col = {"zr": m_unc, "Tp": m_unc + 4, "Tr": m_unc + 5, "F": m_unc + 6}

    # chassis: inertia * qddot = G^T Fs + [0, Tp, Tr]
    Minv = np.diag(1.0 / inertia)
    A[0:3, :] = Minv @ G.T @ Fs_x
    B[0:3, col["F"]:col["F"] + 4] = Minv @ G.T
    B[1, col["Tp"]] = 1.0 / inertia[1]
    B[2, col["Tr"]] = 1.0 / inertia[2]

    # unsprung: m_u zudd = -Fs + Ft
    A[3:7, :] = (Ft_x - Fs_x) / mu
    B[3:7, col["F"]:col["F"] + 4] = -np.eye(4) / mu
    B[3:7, col["zr"]:col["zr"] + 4] = params.c_t * np.eye(4) / mu

    # deflection kinematics
    A[7:11, :] = dls_rate
    for i in range(3):
        A[11 + i, 3 + i] = -1.0
        B[11 + i, col["zr"] + i] = 1.0

    if uncertain:
        alpha = params.delta_M_frac
        beta = params.delta_c_frac
        c_nom = params.corner_damping()
        # mass channel: exact LFT of 1/(M_nom (1 + alpha*delta))
        B[0, 0] = -alpha
        # damping channels act like extra corner forces of size beta*c_nom
        for i in range(4):
            B[:, 1 + i] += beta * c_nom[i] * B[:, col["F"] + i]

    # outputs: accelerations are the velocity-state derivative rows
    C = np.zeros((11, n))
    D = np.zeros((11, m))
    C[0:3, :] = A[0:3, :]
    D[0:3, :] = B[0:3, :]
    C[3:7, :] = S_dls
    C[7:11, :] = EXP
    return A, B, C, D


def build_fullcar(params: VehicleParams, M_s=None, c_f=None, c_r=None) -> StateSpaceModel:
    """14-state linear-equivalent full-car model at the given sprung mass and
    axle damping values (defaults: nominal)."""
    M_s = params.M_nom if M_s is None else float(M_s)
    if M_s <= 0:
        raise ValueError("sprung mass must be positive")
    c_f = params.c_eq_f_nom if c_f is None else float(c_f)
    c_r = params.c_eq_r_nom if c_r is None else float(c_r)
    if c_f <= 0 or c_r <= 0:
        raise ValueError("damping must be positive")
    A, B, C, D = _assemble(params, M_s, c_f, c_r, uncertain=False)
    return StateSpaceModel(A, B, C, D, INPUT_LABELS, OUTPUT_LABELS, STATE_LABELS)


@dataclass(frozen=True)
class UncertainVehiclePlant:
    """Full-car model with normalized parametric-uncertainty channels.

    The five leading input/output channel pairs carry the three scalar
    perturbations (sprung mass once, each axle damping repeated per corner);
    closing them with diag(d1, d2 I2, d3 I2), |d_i| <= 1, reproduces the
    directly built model exactly.
    """

    plant: StateSpaceModel
    structure: BlockStructure

    @property
    def n_unc(self):
        return self.structure.total_rows


def build_uncertain(params: VehicleParams) -> UncertainVehiclePlant:
    A, B, C, D = _assemble(params, params.M_nom, None, None, uncertain=True)
    # uncertainty outputs: realized heave acceleration (mass channel) and the
    # four suspension deflection rates (damping channels)
    Cu = np.vstack([A[0:1, :], A[7:9, :], A[9:11, :]])
    Du = np.vstack([B[0:1, :], B[7:9, :], B[9:11, :]])
    plant = StateSpaceModel(
        A, B,
        np.vstack([Cu, C]), np.vstack([Du, D]),
        UNC_LABELS + INPUT_LABELS,
        UNC_LABELS + OUTPUT_LABELS,
        STATE_LABELS,
    )
    structure = BlockStructure((
        ("scalar-real", 1, 1, "delta_Ms"),
        ("scalar-real", 2, 2, "delta_ceq_f"),
        ("scalar-real", 2, 2, "delta_ceq_r"),
    ))
    return UncertainVehiclePlant(plant, structure)


def delta_to_values(params: VehicleParams, deltas):
    """Map normalized block deltas (d_M, d_cf, d_cr) to physical values."""
    d = np.asarray(deltas, float).ravel()
    if d.size != 3:
        raise ValueError("expected three normalized deltas")
    M_s = params.M_nom * (1.0 + params.delta_M_frac * d[0])
    c_f = params.c_eq_f_nom * (1.0 + params.delta_c_frac * d[1])
    c_r = params.c_eq_r_nom * (1.0 + params.delta_c_frac * d[2])
    return M_s, c_f, c_r


def beta_convert(F_rc: float, delta_l_s: float, params: VehicleParams) -> float:
    """Linear-equivalent corner force to rocker torque through the lever
    geometry, with an optional deflection-dependent polynomial correction."""
    lever = params.l_beta * (1.0 + params.beta_kappa1 * delta_l_s
                             + params.beta_kappa2 * delta_l_s**2)
    return F_rc * lever


def beta_invert(torque: float, delta_l_s: float, params: VehicleParams) -> float:
    """Rocker torque back to the linear-equivalent corner force."""
    lever = params.l_beta * (1.0 + params.beta_kappa1 * delta_l_s
                             + params.beta_kappa2 * delta_l_s**2)
    return torque / lever


def actuator_step(T_ref: float, T_state: float, dt: float, params: VehicleParams) -> float:
    """Advance the torque-tracking lag one step and apply the peak-torque
    saturation."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    decay = math.exp(-dt / params.actuator_tau)
    T_new = T_ref + (T_state - T_ref) * decay
    limit = params.torque_peak
    return float(min(max(T_new, -limit), limit))


def params_to_dict(params: VehicleParams) -> dict:
    d = {}
    for name in ("M_nom", "m_u", "k_eq_f", "k_eq_r", "c_eq_f_nom", "c_eq_r_nom",
                 "k_t", "c_t", "t_f", "t_r", "a_f", "a_r", "h_cmc",
                 "I_pitch", "I_roll", "delta_M_frac", "delta_c_frac",
                 "l_beta", "beta_kappa1", "beta_kappa2",
                 "torque_continuous", "torque_peak", "actuator_tau", "F_rc_max"):
        d[name] = float(getattr(params, name))
    d["damper_map_f"] = [list(p) for p in params.damper_map_f.breakpoints]
    d["damper_map_r"] = [list(p) for p in params.damper_map_r.breakpoints]
    return d


def params_from_dict(d: dict) -> VehicleParams:
    d = dict(d)
    for key in ("damper_map_f", "damper_map_r"):
        if key in d and d[key] is not None:
            d[key] = DamperMap(tuple((float(v), float(f)) for v, f in d[key]))
    return VehicleParams(**d)


def load_params(path) -> VehicleParams:
    """Vehicle parameters from a YAML config file; missing entries fall back
    to the SUV defaults."""
    with open(path, "r") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"vehicle config {path} must be a mapping")
    return params_from_dict(data)


def save_params(params: VehicleParams, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(params_to_dict(params), fh, sort_keys=True)
