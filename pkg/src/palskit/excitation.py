"""Road profiles and handling-maneuver disturbance inputs.

Random roads are synthesized spectrally from the ISO roughness law
G_d(n) = 1e-6 * 2^(2k) * (n/n0)^-2 with n0 = 0.1 cycles/m (classes A-H for
k = 2..9); speed bumps use a raised-cosine shape.  Handling maneuvers are
prescribed kinematically and enter the model only through the exogenous
pitch/roll torques produced by load transfer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .vehicle import VehicleParams

__all__ = [
    "RoadProfile",
    "ManeuverSpec",
    "iso_psd",
    "gen_random_road",
    "gen_bump",
    "bump_height_at",
    "bump_slope_at",
    "maneuver_accels",
    "maneuver_torques",
    "road_to_csv",
    "road_from_csv",
]

REFERENCE_WAVENUMBER = 0.1     # cycles/m
PSD_EXPONENT = 2.0
MIN_WAVENUMBER = 0.01          # cycles/m, lower band edge of the synthesis

MANEUVER_KINDS = ("random_road", "bump", "steady_state_corner",
                  "step_steer", "brake_in_turn")
ROAD_KINDS = ("random_road", "bump")


def iso_psd(n, class_k: int):
    """One-sided displacement PSD G_d(n) in m^3 for roughness class k."""
    n = np.asarray(n, dtype=float)
    return 1e-6 * 2.0 ** (2 * class_k) * (n / REFERENCE_WAVENUMBER) ** (-PSD_EXPONENT)


@dataclass(frozen=True)
class RoadProfile:
    """Left/right road height samples on a uniform travel-distance grid."""

    x: np.ndarray
    z_left: np.ndarray
    z_right: np.ndarray
    class_k: int = 0
    seed: int = 0
    dz_left: np.ndarray = None
    dz_right: np.ndarray = None

    def __post_init__(self):
        x = np.asarray(self.x, float)
        zl = np.asarray(self.z_left, float)
        zr = np.asarray(self.z_right, float)
        if not (x.size == zl.size == zr.size):
            raise ValueError("x, z_left, z_right must have equal lengths")
        steps = np.diff(x)
        if x.size > 1 and not np.allclose(steps, steps[0], rtol=1e-9):
            raise ValueError("x grid must be uniform")
        if not (np.all(np.isfinite(zl)) and np.all(np.isfinite(zr))):
            raise ValueError("road heights must be finite")
        dzl = self.dz_left if self.dz_left is not None else np.gradient(zl, x)
        dzr = self.dz_right if self.dz_right is not None else np.gradient(zr, x)
        for arr in (x, zl, zr, dzl, dzr):
            np.asarray(arr).setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z_left", zl)
        object.__setattr__(self, "z_right", zr)
        object.__setattr__(self, "dz_left", np.asarray(dzl, float))
        object.__setattr__(self, "dz_right", np.asarray(dzr, float))

    @property
    def dx(self):
        return float(self.x[1] - self.x[0]) if self.x.size > 1 else 0.0

    def heights_at(self, xq, side="left"):
        z = self.z_left if side == "left" else self.z_right
        return np.interp(xq, self.x, z, left=0.0, right=float(z[-1]))

    def slopes_at(self, xq, side="left"):
        dz = self.dz_left if side == "left" else self.dz_right
        return np.interp(xq, self.x, dz, left=0.0, right=0.0)


def _synth_track(rng, n_bins, n_samples, dn, class_k):
    wavenumbers = np.arange(n_bins) * dn
    amp = np.zeros(n_bins)
    band = wavenumbers >= MIN_WAVENUMBER
    amp[band] = np.sqrt(2.0 * iso_psd(wavenumbers[band], class_k) * dn)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_bins)
    spectrum = 0.5 * n_samples * amp * np.exp(1j * phases)
    spectrum[0] = 0.0
    z = np.fft.irfft(spectrum, n=n_samples)
    dz = np.fft.irfft(spectrum * (2j * np.pi * wavenumbers), n=n_samples)
    return z, dz


def gen_random_road(class_k: int, length: float, dx: float, seed: int) -> RoadProfile:
    """Spectral-synthesis ISO road: independent left/right phases, identical
    target PSD, reproducible from the seed."""
    if not 2 <= class_k <= 9:
        raise ValueError(f"road class k must be in 2..9, got {class_k}")
    if dx <= 0:
        raise ValueError("dx must be positive")
    if length <= dx:
        raise ValueError("length must exceed dx")
    n_samples = int(round(length / dx))
    x = np.arange(n_samples) * dx
    dn = 1.0 / (n_samples * dx)
    n_bins = n_samples // 2 + 1
    rng = np.random.default_rng(seed)
    z_l, dz_l = _synth_track(rng, n_bins, n_samples, dn, class_k)
    z_r, dz_r = _synth_track(rng, n_bins, n_samples, dn, class_k)
    return RoadProfile(x, z_l, z_r, class_k=class_k, seed=seed,
                       dz_left=dz_l, dz_right=dz_r)


def bump_height_at(x, height=0.05, length=2.0, start=0.0):
    """Raised-cosine bump height h(x) = (height/2)(1 - cos(2 pi (x-start)/length))
    inside [start, start+length], zero elsewhere."""
    x = np.asarray(x, dtype=float)
    s = x - start
    inside = (s >= 0.0) & (s <= length)
    out = np.zeros_like(x)
    out[inside] = 0.5 * height * (1.0 - np.cos(2.0 * np.pi * s[inside] / length))
    return out


def bump_slope_at(x, height=0.05, length=2.0, start=0.0):
    x = np.asarray(x, dtype=float)
    s = x - start
    inside = (s >= 0.0) & (s <= length)
    out = np.zeros_like(x)
    out[inside] = (0.5 * height * 2.0 * np.pi / length
                   * np.sin(2.0 * np.pi * s[inside] / length))
    return out


def gen_bump(height: float, length_bump: float, x) -> RoadProfile:
    """Sampled raised-cosine bump starting at x = 0, identical left/right."""
    if height <= 0 or length_bump <= 0:
        raise ValueError("bump height and length must be positive")
    x = np.asarray(x, dtype=float)
    z = bump_height_at(x, height, length_bump)
    dz = bump_slope_at(x, height, length_bump)
    return RoadProfile(x, z, z.copy(), class_k=0, seed=0, dz_left=dz, dz_right=dz)


@dataclass(frozen=True)
class ManeuverSpec:
    """Driving-maneuver description: excitation kind plus its parameters.

    speed is the constant forward speed (initial speed for brake_in_turn).
    """

    kind: str
    speed: float
    duration: float
    class_k: int = 4
    road_dx: float = 0.01
    bump_height: float = 0.05
    bump_length: float = 2.0
    bump_start: float = 5.0
    ay_ramp_max: float = 6.0      # steady-state corner sweep endpoint, m/s^2
    ay_plateau: float = 8.0       # step-steer lateral acceleration, m/s^2
    steer_tau: float = 0.25       # step-steer first-order rise, s
    turn_radius: float = 100.0    # brake-in-turn path radius, m
    decel: float = 5.0            # brake-in-turn deceleration, m/s^2

    def __post_init__(self):
        if self.kind not in MANEUVER_KINDS:
            raise ValueError(f"unknown maneuver kind {self.kind!r}")
        if self.speed <= 0:
            raise ValueError("forward speed must be positive")
        if self.duration <= 0:
            raise ValueError("duration must be positive")

    @property
    def is_road(self):
        return self.kind in ROAD_KINDS

    def speed_at(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "brake_in_turn":
            return np.maximum(self.speed - self.decel * t, 0.0)
        return np.full_like(t, self.speed)

    def distance_at(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "brake_in_turn":
            t_stop = self.speed / self.decel
            tc = np.minimum(t, t_stop)
            return self.speed * tc - 0.5 * self.decel * tc**2
        return self.speed * t


def maneuver_accels(spec: ManeuverSpec, t):
    """Prescribed longitudinal/lateral accelerations (a_x, a_y) over time."""
    t = np.asarray(t, dtype=float)
    ax = np.zeros_like(t)
    ay = np.zeros_like(t)
    if spec.kind == "steady_state_corner":
        ay = spec.ay_ramp_max * t / spec.duration
    elif spec.kind == "step_steer":
        ay = spec.ay_plateau * (1.0 - np.exp(-t / spec.steer_tau))
    elif spec.kind == "brake_in_turn":
        v = spec.speed_at(t)
        ay = v**2 / spec.turn_radius
        ax = np.where(v > 0.0, -spec.decel, 0.0)
    return ax, ay


def maneuver_torques(spec: ManeuverSpec, params: VehicleParams, t, M_s=None):
    """Load-transfer pitch/roll torques (T_p, T_r) induced by the maneuver."""
    if spec.kind not in MANEUVER_KINDS:
        raise ValueError(f"unknown maneuver kind {spec.kind!r}")
    M_s = params.M_nom if M_s is None else float(M_s)
    ax, ay = maneuver_accels(spec, t)
    T_r = M_s * ay * params.h_cmc
    T_p = -M_s * ax * params.h_cmc
    return T_p, T_r


def road_to_csv(profile: RoadProfile, path) -> None:
    """Write a profile as x,zL,zR columns with generator metadata comments."""
    with open(path, "w") as fh:
        fh.write(f"# class_k={profile.class_k} seed={profile.seed} dx={profile.dx:.10g}\n")
        fh.write("x,z_left,z_right\n")
        for xv, zl, zr in zip(profile.x, profile.z_left, profile.z_right):
            fh.write(f"{xv:.10g},{zl:.12g},{zr:.12g}\n")


def road_from_csv(path) -> RoadProfile:
    """Read a two-column (x,z) or three-column (x,zL,zR) profile CSV."""
    class_k, seed = 0, 0
    rows = []
    with open(path, "r") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    if "=" in token:
                        key, val = token.split("=", 1)
                        if key == "class_k":
                            class_k = int(val)
                        elif key == "seed":
                            seed = int(val)
                continue
            parts = line.split(",")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                continue  # header line
    data = np.asarray(rows)
    if data.ndim != 2 or data.shape[1] not in (2, 3):
        raise ValueError(f"{path}: expected 2 or 3 numeric columns")
    x = data[:, 0]
    z_l = data[:, 1]
    z_r = data[:, 2] if data.shape[1] == 3 else data[:, 1].copy()
    return RoadProfile(x, z_l, z_r, class_k=class_k, seed=seed)
