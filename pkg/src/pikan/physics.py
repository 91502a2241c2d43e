"""Empirical resistance model, cube-law prior, and fuel-energy relation.

The physics targets used by the physics-informed loss are computed here, in
SI units throughout. Resistance decomposes into calm-water, wind, and wave
parts with the simplest standard empirical forms: quadratic drag in speed
and apparent wind, wave term proportional to Hs^2 with a raised-cosine
directional factor. All coefficients live in ``PhysicsConfig`` and can be
least-squares calibrated from training data, so none of the stand-in
defaults is load-bearing.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import nnls

from .dataset import VesselDataset
from .errors import ArgumentError, CalibrationError, ConfigError

CUBE_MODE_RPM = "rpm"
CUBE_MODE_SPEED = "speed"


@dataclass(frozen=True)
class PhysicsConfig:
    """Resistance coefficients plus engine-side constants.

    eta/lhv defaults follow the marine-diesel convention (0.40 effective
    efficiency, 42.7 MJ/kg lower heating value); they are configuration, not
    truths. ``cube_k_mode`` records whether the cube-law constant is against
    shaft RPM or speed through water, preventing unit mix-ups.
    """

    c_calm: float = 0.0     # kg/m   -> R = c_calm * V^2
    c_wind: float = 0.0     # kg/m   -> R = c_wind * w^2 * max(0, cos dir)
    c_wave: float = 0.0     # N/m^2  -> R = c_wave * Hs^2 * (1 + cos dir)/2
    cube_k: float | None = None   # W/rpm^3 or W*s^3/m^3 depending on mode
    cube_k_mode: str = CUBE_MODE_RPM
    eta: float = 0.40       # effective engine efficiency, (0, 1]
    lhv: float = 42.7e6     # lower heating value, J/kg
    clamp_tailwind: bool = True
    min_rpm: float = 10.0   # idle floor for cube-law calibration
    calibrate_resistance: bool = True
    calibrate_cube_k: bool = True

    def __post_init__(self):
        for name in ("c_calm", "c_wind", "c_wave"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.cube_k is not None and self.cube_k < 0:
            raise ConfigError("cube_k must be >= 0")
        if self.cube_k_mode not in (CUBE_MODE_RPM, CUBE_MODE_SPEED):
            raise ConfigError(f"unknown cube_k_mode {self.cube_k_mode!r}")
        if not 0.0 < self.eta <= 1.0:
            raise ConfigError("eta must be in (0, 1]")
        if self.lhv <= 0:
            raise ConfigError("lhv must be > 0")


def calm_resistance(stw, cfg: PhysicsConfig):
    """Calm-water drag, quadratic in speed through water. [N]"""
    return cfg.c_calm * np.asarray(stw, dtype=float) ** 2


def wind_resistance(wind_speed, wind_dir_deg, cfg: PhysicsConfig):
    """Apparent-wind drag. Headwind adds resistance; with the default clamp
    a tailwind contributes zero rather than negative resistance. [N]"""
    cos_term = np.cos(np.radians(wind_dir_deg))
    if cfg.clamp_tailwind:
        cos_term = np.maximum(0.0, cos_term)
    return cfg.c_wind * np.asarray(wind_speed, dtype=float) ** 2 * cos_term


def wave_resistance(wave_hs, wave_dir_deg, cfg: PhysicsConfig):
    """Added wave resistance, raised-cosine in apparent direction: head seas
    (0 deg) maximal, following seas (180 deg) zero. [N]"""
    factor = (1.0 + np.cos(np.radians(wave_dir_deg))) / 2.0
    return cfg.c_wave * np.asarray(wave_hs, dtype=float) ** 2 * factor


def physical_power(ds: VesselDataset, cfg: PhysicsConfig) -> np.ndarray:
    """Physics-target shaft power: total resistance times speed. [W]"""
    stw = ds.column("stw")
    r = (
        calm_resistance(stw, cfg)
        + wind_resistance(ds.column("wind_speed_apparent"), ds.column("wind_dir_apparent"), cfg)
        + wave_resistance(ds.column("wave_Hs"), ds.column("wave_dir_apparent"), cfg)
    )
    return r * stw


def cube_law_power(n, k: float):
    """Propeller cube law P = k * n^3 (n in the units matching k's mode)."""
    return k * np.asarray(n, dtype=float) ** 3


def calibrate_k(
    train: VesselDataset,
    mode: str = CUBE_MODE_RPM,
    min_signal: float | None = None,
) -> float:
    """Vessel-specific cube-law constant k = median(P / n^3) on valid rows.

    Valid rows have the reference signal above the idle floor and finite
    targets; the median keeps single bad segments from skewing k.
    """
    if mode == CUBE_MODE_RPM:
        signal = train.target("rpm")
        floor = 10.0 if min_signal is None else min_signal
    elif mode == CUBE_MODE_SPEED:
        signal = train.column("stw")
        floor = 0.5 if min_signal is None else min_signal
    else:
        raise ArgumentError(f"unknown cube-law mode {mode!r}")
    power = train.target("power")
    valid = (signal >= floor) & np.isfinite(power) & np.isfinite(signal)
    if not valid.any():
        raise CalibrationError(
            f"no rows with {mode} signal >= {floor} for cube-law calibration"
        )
    return float(np.median(power[valid] / signal[valid] ** 3))


def calibrate_resistance(train: VesselDataset, cfg: PhysicsConfig) -> PhysicsConfig:
    """Non-negative least squares for (c_calm, c_wind, c_wave) on train rows.

    Solves power ~ c_calm*V^3 + c_wind*w^2*cos*V + c_wave*Hs^2*(1+cos)/2*V;
    nnls keeps the resistance-coefficient invariants (all >= 0) intact.
    """
    stw = train.column("stw")
    power = train.target("power")
    cos_wind = np.cos(np.radians(train.column("wind_dir_apparent")))
    if cfg.clamp_tailwind:
        cos_wind = np.maximum(0.0, cos_wind)
    basis = np.column_stack(
        [
            stw**3,
            train.column("wind_speed_apparent") ** 2 * cos_wind * stw,
            train.column("wave_Hs") ** 2
            * (1.0 + np.cos(np.radians(train.column("wave_dir_apparent"))))
            / 2.0
            * stw,
        ]
    )
    if not np.any(basis):
        raise CalibrationError("resistance basis is identically zero on train data")
    coeffs, _ = nnls(basis, power)
    return replace(cfg, c_calm=coeffs[0], c_wind=coeffs[1], c_wave=coeffs[2])


def fuel_rate_from_power(power, cfg: PhysicsConfig):
    """Thermal-efficiency fuel relation: mdot = P / (eta * lhv). [kg/s]"""
    return np.asarray(power, dtype=float) / (cfg.eta * cfg.lhv)


def power_from_torque(n_rpm, torque_nm):
    """Shaft power from speed and torque, P = 2*pi*(n/60)*Q. [W]"""
    n_rpm = np.asarray(n_rpm, dtype=float)
    if np.any(n_rpm < 0):
        raise ArgumentError("shaft speed must be >= 0")
    return 2.0 * np.pi * (n_rpm / 60.0) * np.asarray(torque_nm, dtype=float)
