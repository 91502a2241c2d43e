"""Synthetic vessel datasets from a known ground-truth propulsion model.

The generator exists so that recovery, interpretability, and extrapolation
behaviour can be tested at desk scale against closed-form truth:

    rpm   = a * V + b                                   (+ noise)
    power = k3 * V^3                                    cube-law core
          + cw * w^2 * cos(wind_dir) * V                wind loading
          + cv * Hs^2 * (1 + cos(wave_dir))/2 * V       head-sea raised cosine
          + cT * (T - T_opt)^2 * V                      off-optimum draught
                                                        (+ noise, clamped >= 0)
    fuel  = power / (eta * lhv)                         (+ noise, clamped >= 0)

Head seas (wave_dir = 0) give maximum added resistance; following seas give
zero. Noise is proportional to the clean value per row; clamping after noise
keeps physical invariants and the clamp count is reported so tests can keep
noise small enough that clamping stays rare.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from .dataset import VesselDataset, VoyageRecord, engineered_schema
from .errors import ArgumentError

_EPOCH = datetime(2023, 1, 1, tzinfo=timezone.utc)


@dataclass(frozen=True)
class SynthConfig:
    n_rows: int = 5000
    seed: int = 0
    vessel_id: str = "synth-00"

    # input distributions (uniform over the ranges; directions uniform [0, 360))
    speed_range: tuple[float, float] = (4.0, 10.0)        # m/s
    draught_range: tuple[float, float] = (8.0, 12.0)      # m
    depth_range: tuple[float, float] = (30.0, 200.0)      # m
    temp_range: tuple[float, float] = (5.0, 25.0)         # degC
    wave_hs_range: tuple[float, float] = (0.0, 4.0)       # m
    wave_tp_range: tuple[float, float] = (4.0, 12.0)      # s
    swell_hs_range: tuple[float, float] = (0.0, 3.0)      # m
    swell_tp_range: tuple[float, float] = (6.0, 16.0)     # s
    wind_speed_range: tuple[float, float] = (0.0, 12.0)   # m/s

    # ground-truth constants
    rpm_slope: float = 8.0          # rpm per (m/s)
    rpm_intercept: float = 15.0     # rpm
    cube_coeff: float = 5000.0      # W * s^3 / m^3
    wind_coeff: float = 300.0       # kg/m
    wave_coeff: float = 4000.0      # N/m^2
    draught_optimum: float = 10.0   # m
    draught_curvature: float = 2000.0
    eta_true: float = 0.40
    lhv_true: float = 42.7e6        # J/kg

    # relative noise std per target (vs. the clean per-row value)
    noise_rpm: float = 0.0
    noise_power: float = 0.0
    noise_fuel: float = 0.0

    def __post_init__(self):
        if self.n_rows < 1:
            raise ArgumentError("n_rows must be >= 1")
        for name in (
            "speed_range",
            "draught_range",
            "depth_range",
            "temp_range",
            "wave_hs_range",
            "wave_tp_range",
            "swell_hs_range",
            "swell_tp_range",
            "wind_speed_range",
        ):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ArgumentError(f"{name} must be non-degenerate, got {(lo, hi)}")
        if min(self.noise_rpm, self.noise_power, self.noise_fuel) < 0:
            raise ArgumentError("noise levels must be >= 0")
        if self.cube_coeff <= 0:
            raise ArgumentError("cube_coeff must be > 0")
        if not 0 < self.eta_true <= 1:
            raise ArgumentError("eta_true must be in (0, 1]")
        if self.lhv_true <= 0:
            raise ArgumentError("lhv_true must be > 0")


@dataclass(frozen=True)
class SynthReport:
    clamped_power: int
    clamped_fuel: int
    columns: dict = field(default_factory=dict, repr=False)


def clean_power(cfg: SynthConfig, stw, draught, wave_hs, wave_dir, wind_speed, wind_dir):
    """Closed-form noiseless shaft power for the generator's ground truth."""
    stw = np.asarray(stw, dtype=float)
    cube = cfg.cube_coeff * stw**3
    wind = cfg.wind_coeff * np.asarray(wind_speed) ** 2 * np.cos(np.radians(wind_dir)) * stw
    wave = (
        cfg.wave_coeff
        * np.asarray(wave_hs) ** 2
        * (1.0 + np.cos(np.radians(wave_dir)))
        / 2.0
        * stw
    )
    draught_term = cfg.draught_curvature * (np.asarray(draught) - cfg.draught_optimum) ** 2 * stw
    return cube + wind + wave + draught_term


def generate_with_report(cfg: SynthConfig) -> tuple[VesselDataset, SynthReport]:
    """Deterministic generation for a given config (seed included)."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_rows

    def draw(rg):
        return rng.uniform(rg[0], rg[1], n)

    stw = draw(cfg.speed_range)
    draught = draw(cfg.draught_range)
    sea_depth = draw(cfg.depth_range)
    sea_temp = draw(cfg.temp_range)
    wave_hs = draw(cfg.wave_hs_range)
    wave_tp = draw(cfg.wave_tp_range)
    swell_hs = draw(cfg.swell_hs_range)
    swell_tp = draw(cfg.swell_tp_range)
    swell_dir = rng.uniform(0.0, 360.0, n)
    wave_dir = rng.uniform(0.0, 360.0, n)
    wind_speed = draw(cfg.wind_speed_range)
    wind_dir = rng.uniform(0.0, 360.0, n)

    rpm_clean = cfg.rpm_slope * stw + cfg.rpm_intercept
    power_clean = clean_power(cfg, stw, draught, wave_hs, wave_dir, wind_speed, wind_dir)

    rpm = rpm_clean + cfg.noise_rpm * np.abs(rpm_clean) * rng.standard_normal(n)
    power_noisy = power_clean + cfg.noise_power * np.abs(power_clean) * rng.standard_normal(n)
    power = np.maximum(power_noisy, 0.0)
    clamped_power = int(np.count_nonzero(power_noisy < 0.0))

    fuel_clean = power / (cfg.eta_true * cfg.lhv_true)
    fuel_noisy = fuel_clean + cfg.noise_fuel * np.abs(fuel_clean) * rng.standard_normal(n)
    fuel = np.maximum(fuel_noisy, 0.0)
    clamped_fuel = int(np.count_nonzero(fuel_noisy < 0.0))

    records = tuple(
        VoyageRecord(
            timestamp=_EPOCH + timedelta(minutes=15 * i),
            stw=stw[i],
            draught=draught[i],
            sea_depth=sea_depth[i],
            sea_temp=sea_temp[i],
            wave_hs=wave_hs[i],
            wave_tp=wave_tp[i],
            swell_hs=swell_hs[i],
            swell_tp=swell_tp[i],
            swell_dir=swell_dir[i],
            wave_dir=wave_dir[i],
            wind_speed=wind_speed[i],
            wind_dir=wind_dir[i],
            shaft_rpm=rpm[i],
            shaft_power=power[i],
            fuel_rate=fuel[i],
        )
        for i in range(n)
    )
    ds = VesselDataset(
        vessel_id=cfg.vessel_id,
        records=records,
        schema=engineered_schema(),
        derived={
            "stw_cubed": stw**3,
            "wave_dir_cos": np.cos(np.radians(wave_dir)),
        },
    )
    report = SynthReport(
        clamped_power=clamped_power,
        clamped_fuel=clamped_fuel,
        columns={"rpm_clean": rpm_clean, "power_clean": power_clean, "fuel_clean": fuel_clean},
    )
    return ds, report


def generate(cfg: SynthConfig) -> VesselDataset:
    return generate_with_report(cfg)[0]
