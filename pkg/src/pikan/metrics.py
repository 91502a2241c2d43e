"""Regression metrics, benchmark reports, and interpretability exports.

R-squared is reported in percent. MAPE and signed mean error exclude rows
whose true value sits within ``zero_tolerance`` of zero instead of flooring
the denominator — a vessel at anchor genuinely burns zero fuel, and flooring
would fabricate huge percentages; exclusion counts are always reported.
Signed mean error is mean((pred - true)/true)*100, so positive means
over-prediction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .dataset import (
    INTERVAL_SECONDS,
    KW_TO_W,
    VesselDataset,
)
from .errors import ArgumentError, MetricUndefinedError
from .kan import KanModel, univariate_response
from .pipeline import ChainedModels, chained_predict

ZERO_TOLERANCE = 1e-9

TARGETS = ("shaft_rpm", "shaft_power", "fuel_consumed")

#: conversion from internal SI targets to report units
#: (rpm stays rpm; power W -> kW; fuel kg/s -> kg per 15-min interval)
_REPORT_UNIT = {
    "shaft_rpm": ("rpm", 1.0),
    "shaft_power": ("kW", 1.0 / KW_TO_W),
    "fuel_consumed": ("kg/15min", INTERVAL_SECONDS),
}


def _check_pair(y, y_hat):
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape or y.size == 0:
        raise ArgumentError("metric needs equal-length non-empty vectors")
    return y, y_hat


def mae(y, y_hat) -> float:
    y, y_hat = _check_pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def rmse(y, y_hat) -> float:
    y, y_hat = _check_pair(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def mape(y, y_hat, zero_tolerance: float = ZERO_TOLERANCE) -> tuple[float, int]:
    """Mean absolute percentage error; returns (percent, excluded rows)."""
    y, y_hat = _check_pair(y, y_hat)
    keep = np.abs(y) > zero_tolerance
    excluded = int(np.count_nonzero(~keep))
    if not keep.any():
        raise MetricUndefinedError("MAPE undefined: every true value is (near) zero")
    value = float(np.mean(np.abs((y[keep] - y_hat[keep]) / y[keep])) * 100.0)
    return value, excluded


def signed_me(y, y_hat, zero_tolerance: float = ZERO_TOLERANCE) -> tuple[float, int]:
    """Signed mean percentage error (positive = over-prediction)."""
    y, y_hat = _check_pair(y, y_hat)
    keep = np.abs(y) > zero_tolerance
    excluded = int(np.count_nonzero(~keep))
    if not keep.any():
        raise MetricUndefinedError("signed ME undefined: every true value is (near) zero")
    value = float(np.mean((y_hat[keep] - y[keep]) / y[keep]) * 100.0)
    return value, excluded


def r2(y, y_hat) -> float:
    """Coefficient of determination in percent: (1 - SSE/SST) * 100."""
    y, y_hat = _check_pair(y, y_hat)
    if y.size < 2:
        raise MetricUndefinedError("R^2 needs at least two rows")
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        raise MetricUndefinedError("R^2 undefined for a constant target")
    sse = float(np.sum((y - y_hat) ** 2))
    return (1.0 - sse / sst) * 100.0


@dataclass(frozen=True)
class TargetMetrics:
    mae: float
    rmse: float
    mape_pct: float
    r2_pct: float
    me_signed_pct: float
    n: int
    excluded_n: int

    def __post_init__(self):
        assert self.rmse >= self.mae >= 0.0, "power-mean inequality violated"


@dataclass(frozen=True)
class MetricsReport:
    vessel_id: str
    method: str
    per_target: Mapping[str, TargetMetrics]
    n_rows: int
    config_hash: str = ""


def target_metrics(y, y_hat) -> TargetMetrics:
    mape_val, excluded = mape(y, y_hat)
    me_val, _ = signed_me(y, y_hat)
    return TargetMetrics(
        mae=mae(y, y_hat),
        rmse=rmse(y, y_hat),
        mape_pct=mape_val,
        r2_pct=r2(y, y_hat),
        me_signed_pct=me_val,
        n=int(np.asarray(y).size),
        excluded_n=excluded,
    )


def evaluate_chain(models: ChainedModels, test: VesselDataset) -> MetricsReport:
    """Chained predictions against the true targets of one test set."""
    rpm_hat, power_hat, fuel_hat = chained_predict(models, test)
    pairs = {
        "shaft_rpm": (test.target("rpm"), rpm_hat),
        "shaft_power": (test.target("power"), power_hat),
        "fuel_consumed": (test.target("fuel"), fuel_hat),
    }
    per_target = {}
    for name, (y, y_hat) in pairs.items():
        factor = _REPORT_UNIT[name][1]
        per_target[name] = target_metrics(y * factor, y_hat * factor)
    return MetricsReport(
        vessel_id=test.vessel_id,
        method=models.method,
        per_target=per_target,
        n_rows=test.n_rows,
        config_hash=models.config_hash,
    )


def benchmark(
    models_by_method: Mapping[str, Mapping[str, ChainedModels]],
    tests_by_vessel: Mapping[str, VesselDataset],
) -> tuple[list[MetricsReport], str]:
    """Evaluate every (method, vessel) pair; returns reports and a text table."""
    reports: list[MetricsReport] = []
    for method, per_vessel in models_by_method.items():
        for vessel, models in per_vessel.items():
            test = tests_by_vessel.get(vessel)
            if test is None:
                continue
            if test.n_rows == 0:
                warnings.warn(f"empty test set for vessel {vessel!r}; skipped")
                continue
            reports.append(evaluate_chain(models, test))
    return reports, format_benchmark_table(reports)


def format_benchmark_table(reports: list[MetricsReport]) -> str:
    header = (
        f"{'vessel':<10} {'method':<14} "
        + " ".join(f"{t + ' MAE':>16} {'RMSE':>10} {'R2%':>8}" for t in TARGETS)
    )
    lines = [header, "-" * len(header)]
    for rep in sorted(reports, key=lambda r: (r.vessel_id, r.method)):
        cells = []
        for t in TARGETS:
            m = rep.per_target[t]
            cells.append(f"{m.mae:>16.4f} {m.rmse:>10.4f} {m.r2_pct:>8.2f}")
        lines.append(f"{rep.vessel_id:<10} {rep.method:<14} " + " ".join(cells))
    return "\n".join(lines)


def reports_to_csv(reports: list[MetricsReport], path, config_hash: str = "") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        fh.write(
            "vessel,method,target,mae,rmse,mape_pct,r2_pct,me_signed_pct,n,excluded_n\n"
        )
        for rep in reports:
            for t in TARGETS:
                m = rep.per_target[t]
                fh.write(
                    f"{rep.vessel_id},{rep.method},{t},{m.mae!r},{m.rmse!r},"
                    f"{m.mape_pct!r},{m.r2_pct!r},{m.me_signed_pct!r},{m.n},{m.excluded_n}\n"
                )


def export_responses(model: KanModel, grid_size: int = 100) -> list[tuple[str, np.ndarray]]:
    """Per-feature response curves over each feature's training range.

    Returns (feature name, (grid_size, 2) array) pairs, plot-ready. The grid
    endpoints are exactly the training min/max seen by the model.
    """
    if model.feature_min is None or model.feature_max is None:
        raise ArgumentError("model carries no training feature ranges")
    out = []
    for p, name in enumerate(model.schema.names):
        lo, hi = model.feature_min[p], model.feature_max[p]
        grid = np.linspace(lo, hi, grid_size)
        out.append((name, univariate_response(model, p, grid)))
    return out


def responses_to_csv(
    responses_by_stage: Mapping[str, list[tuple[str, np.ndarray]]],
    path,
    config_hash: str = "",
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        fh.write("stage,feature,x,response\n")
        for stage, responses in responses_by_stage.items():
            for name, arr in responses:
                for x, resp in arr:
                    fh.write(f"{stage},{name},{x!r},{resp!r}\n")
