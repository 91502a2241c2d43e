"""Vessel log ingestion, validation, feature engineering, splits, and scaling.

Unit convention: everything inside the package is SI (speed m/s, power W,
fuel kg/s) plus shaft RPM in 1/min. The CSV boundary uses the conventional
log units instead (speed knots, power kW, fuel kg per 15-min interval);
``load_csv`` / ``write_csv`` convert exactly once. Directions are stored in
degrees in [0, 360) and converted to radians only inside feature
engineering.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ArgumentError, DataError, SchemaError

KNOTS_TO_MS = 0.514444
KW_TO_W = 1000.0
INTERVAL_SECONDS = 900.0  # one 15-minute log interval

#: CSV header, in order. Boundary units: stw knots, shaft_power kW,
#: fuel_consumed kg per 15-min interval; everything else as labelled.
CSV_COLUMNS = (
    "timestamp",
    "stw",
    "draught",
    "sea_depth",
    "sea_temp",
    "wave_Hs",
    "wave_Tp",
    "swell_Hs",
    "swell_Tp",
    "swell_dir_apparent",
    "wave_dir_apparent",
    "wind_speed_apparent",
    "wind_dir_apparent",
    "shaft_rpm",
    "shaft_power",
    "fuel_consumed",
)

TARGET_COLUMNS = ("shaft_rpm", "shaft_power", "fuel_consumed")

#: Map feature name -> VoyageRecord attribute for the raw input features.
_BASE_FEATURE_ATTRS = {
    "stw": "stw",
    "draught": "draught",
    "sea_depth": "sea_depth",
    "sea_temp": "sea_temp",
    "wave_Hs": "wave_hs",
    "wave_Tp": "wave_tp",
    "swell_Hs": "swell_hs",
    "swell_Tp": "swell_tp",
    "swell_dir_apparent": "swell_dir",
    "wave_dir_apparent": "wave_dir",
    "wind_speed_apparent": "wind_speed",
    "wind_dir_apparent": "wind_dir",
}

_BASE_FEATURE_UNITS = {
    "stw": "m/s",
    "draught": "m",
    "sea_depth": "m",
    "sea_temp": "degC",
    "wave_Hs": "m",
    "wave_Tp": "s",
    "swell_Hs": "m",
    "swell_Tp": "s",
    "swell_dir_apparent": "deg",
    "wave_dir_apparent": "deg",
    "wind_speed_apparent": "m/s",
    "wind_dir_apparent": "deg",
}

DERIVED_STW_CUBED = "stw_cubed"
DERIVED_WAVE_DIR_COS = "wave_dir_cos"
STACKED_RPM = "predicted_rpm"
STACKED_POWER = "predicted_shaft_power"

STAGES = ("rpm", "power", "fuel")


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    unit: str
    derived: bool = False
    stacked: bool = False


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered model-input features with derived/stacked provenance flags."""

    features: tuple[FeatureSpec, ...]

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate feature names in schema: {names}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    @property
    def stacked_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features if f.stacked)

    def index_of(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise SchemaError(f"feature {name!r} not in schema")

    def __len__(self) -> int:
        return len(self.features)


def base_schema() -> FeatureSchema:
    """The twelve raw operational/environmental input features."""
    return FeatureSchema(
        tuple(FeatureSpec(n, _BASE_FEATURE_UNITS[n]) for n in _BASE_FEATURE_ATTRS)
    )


def engineered_schema() -> FeatureSchema:
    """Base features plus the cube-law and wave-direction proxies."""
    extra = (
        FeatureSpec(DERIVED_STW_CUBED, "m^3/s^3", derived=True),
        FeatureSpec(DERIVED_WAVE_DIR_COS, "1", derived=True),
    )
    return FeatureSchema(base_schema().features + extra)


def stage_schema(stage: str) -> FeatureSchema:
    """Model-input schema for one chained stage.

    Downstream stages carry exactly one stacked feature, produced by the
    immediately preceding stage.
    """
    if stage not in STAGES:
        raise ArgumentError(f"unknown stage {stage!r}; expected one of {STAGES}")
    feats = engineered_schema().features
    if stage == "power":
        feats = feats + (FeatureSpec(STACKED_RPM, "1/min", stacked=True),)
    elif stage == "fuel":
        feats = feats + (FeatureSpec(STACKED_POWER, "W", stacked=True),)
    return FeatureSchema(feats)


@dataclass(frozen=True)
class VoyageRecord:
    """One validated 15-minute log row, SI units internally.

    Targets are optional so that inference-only rows (no measured RPM,
    power, or fuel) can flow through prediction.
    """

    timestamp: datetime
    stw: float            # speed through water, m/s
    draught: float        # m
    sea_depth: float      # m
    sea_temp: float       # degC
    wave_hs: float        # significant wave height, m
    wave_tp: float        # wave peak period, s
    swell_hs: float       # m
    swell_tp: float       # s
    swell_dir: float      # deg relative to heading, [0, 360)
    wave_dir: float       # deg relative to heading, [0, 360)
    wind_speed: float     # apparent, m/s
    wind_dir: float       # deg relative to vessel, [0, 360)
    shaft_rpm: float | None = None    # 1/min
    shaft_power: float | None = None  # W
    fuel_rate: float | None = None    # kg/s

    def __post_init__(self):
        for name in ("swell_dir", "wave_dir", "wind_dir"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} is not finite")
            object.__setattr__(self, name, v % 360.0)
        non_negative = ("stw", "wave_hs", "swell_hs", "wind_speed")
        positive = ("sea_depth", "draught")
        for name in non_negative + positive + ("sea_temp", "wave_tp", "swell_tp"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} is not finite")
        for name in non_negative:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("shaft_rpm", "shaft_power", "fuel_rate"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise ValueError(f"target {name} is not finite")

    @property
    def has_targets(self) -> bool:
        return None not in (self.shaft_rpm, self.shaft_power, self.fuel_rate)


@dataclass(frozen=True)
class RowRejection:
    line: int   # 1-based physical line in the source file (header = 1)
    reason: str


@dataclass(frozen=True)
class VesselDataset:
    """Per-vessel collection of validated records, strictly time-ordered."""

    vessel_id: str
    records: tuple[VoyageRecord, ...]
    schema: FeatureSchema
    derived: Mapping[str, np.ndarray] = field(default_factory=dict)
    rejections: tuple[RowRejection, ...] = ()

    def __post_init__(self):
        ts = [r.timestamp for r in self.records]
        for a, b in zip(ts, ts[1:]):
            if not a < b:
                raise DataError(
                    f"timestamps not strictly increasing near {b.isoformat()}"
                )
        for name, col in self.derived.items():
            if len(col) != len(self.records):
                raise DataError(f"derived column {name!r} has wrong length")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def n_rows(self) -> int:
        return len(self.records)

    def timestamps(self) -> list[datetime]:
        return [r.timestamp for r in self.records]

    def column(self, name: str) -> np.ndarray:
        """Raw values for one base or derived feature column."""
        if name in self.derived:
            return np.asarray(self.derived[name], dtype=float)
        attr = _BASE_FEATURE_ATTRS.get(name)
        if attr is None:
            raise SchemaError(f"unknown feature column {name!r}")
        return np.array([getattr(r, attr) for r in self.records], dtype=float)

    def target(self, stage: str) -> np.ndarray:
        attr = {"rpm": "shaft_rpm", "power": "shaft_power", "fuel": "fuel_rate"}.get(stage)
        if attr is None:
            raise ArgumentError(f"unknown stage {stage!r}")
        vals = [getattr(r, attr) for r in self.records]
        if any(v is None for v in vals):
            raise DataError(f"dataset {self.vessel_id!r} lacks {attr} targets")
        return np.array(vals, dtype=float)

    def feature_matrix(
        self,
        schema: FeatureSchema | None = None,
        stacked: Mapping[str, np.ndarray] | None = None,
    ) -> np.ndarray:
        """Assemble the (rows x features) matrix in schema order.

        Stacked columns are never part of the dataset itself; they must be
        supplied by the caller that produced them.
        """
        schema = schema or self.schema
        stacked = stacked or {}
        cols = []
        for spec in schema.features:
            if spec.stacked:
                if spec.name not in stacked:
                    raise SchemaError(
                        f"stacked feature {spec.name!r} required but not provided"
                    )
                col = np.asarray(stacked[spec.name], dtype=float)
                if len(col) != self.n_rows:
                    raise SchemaError(f"stacked column {spec.name!r} has wrong length")
            else:
                col = self.column(spec.name)
            cols.append(col)
        return np.column_stack(cols) if cols else np.empty((self.n_rows, 0))

    def subset(self, indices: Sequence[int]) -> "VesselDataset":
        idx = np.asarray(indices, dtype=int)
        return dataclasses.replace(
            self,
            records=tuple(self.records[i] for i in idx),
            derived={k: np.asarray(v)[idx] for k, v in self.derived.items()},
            rejections=(),
        )


def _parse_timestamp(raw: str) -> datetime:
    ts = datetime.fromisoformat(raw.strip().replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def load_csv(
    path: str | Path,
    schema: FeatureSchema | None = None,
    vessel_id: str | None = None,
    require_targets: bool = True,
) -> VesselDataset:
    """Load and validate one vessel log CSV.

    Rows that fail validation are rejected (never coerced) and recorded with
    their line number on the returned dataset. Duplicate timestamps keep the
    first occurrence. Raises ``SchemaError`` for missing columns and
    ``DataError`` when no valid rows remain.
    """
    path = Path(path)
    schema = schema or base_schema()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        required = list(CSV_COLUMNS) if require_targets else [
            c for c in CSV_COLUMNS if c not in TARGET_COLUMNS
        ]
        for col in required:
            if col not in header:
                raise SchemaError(f"{path}: missing required column {col!r}")
        col_idx = {c: header.index(c) for c in CSV_COLUMNS if c in header}

        records: list[VoyageRecord] = []
        rejections: list[RowRejection] = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals: dict[str, float | None] = {}
                for col, idx in col_idx.items():
                    if col == "timestamp":
                        continue
                    cell = row[idx].strip() if idx < len(row) else ""
                    if col in TARGET_COLUMNS and not require_targets and cell == "":
                        vals[col] = None
                        continue
                    vals[col] = float(cell)
                rec = VoyageRecord(
                    timestamp=_parse_timestamp(row[col_idx["timestamp"]]),
                    stw=vals["stw"] * KNOTS_TO_MS,
                    draught=vals["draught"],
                    sea_depth=vals["sea_depth"],
                    sea_temp=vals["sea_temp"],
                    wave_hs=vals["wave_Hs"],
                    wave_tp=vals["wave_Tp"],
                    swell_hs=vals["swell_Hs"],
                    swell_tp=vals["swell_Tp"],
                    swell_dir=vals["swell_dir_apparent"],
                    wave_dir=vals["wave_dir_apparent"],
                    wind_speed=vals["wind_speed_apparent"],
                    wind_dir=vals["wind_dir_apparent"],
                    shaft_rpm=vals.get("shaft_rpm"),
                    shaft_power=None
                    if vals.get("shaft_power") is None
                    else vals["shaft_power"] * KW_TO_W,
                    fuel_rate=None
                    if vals.get("fuel_consumed") is None
                    else vals["fuel_consumed"] / INTERVAL_SECONDS,
                )
            except (ValueError, IndexError) as exc:
                rejections.append(RowRejection(line_no, str(exc)))
                continue
            records.append((rec, line_no))

    records.sort(key=lambda pair: pair[0].timestamp)
    deduped: list[VoyageRecord] = []
    for rec, line_no in records:
        if deduped and rec.timestamp == deduped[-1].timestamp:
            rejections.append(RowRejection(line_no, "duplicate timestamp"))
            continue
        deduped.append(rec)
    if not deduped:
        raise DataError(f"{path}: no valid rows after validation")
    return VesselDataset(
        vessel_id=vessel_id or path.stem,
        records=tuple(deduped),
        schema=schema,
        rejections=tuple(rejections),
    )


def write_csv(ds: VesselDataset, path: str | Path) -> None:
    """Write a dataset back to the boundary CSV format (knots, kW, kg/15min)."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in ds.records:
            writer.writerow(
                [
                    r.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ"),
                    repr(r.stw / KNOTS_TO_MS),
                    repr(r.draught),
                    repr(r.sea_depth),
                    repr(r.sea_temp),
                    repr(r.wave_hs),
                    repr(r.wave_tp),
                    repr(r.swell_hs),
                    repr(r.swell_tp),
                    repr(r.swell_dir),
                    repr(r.wave_dir),
                    repr(r.wind_speed),
                    repr(r.wind_dir),
                    "" if r.shaft_rpm is None else repr(r.shaft_rpm),
                    "" if r.shaft_power is None else repr(r.shaft_power / KW_TO_W),
                    "" if r.fuel_rate is None else repr(r.fuel_rate * INTERVAL_SECONDS),
                ]
            )


def engineer_features(ds: VesselDataset) -> VesselDataset:
    """Add the cube-law speed proxy and the wave-direction cosine proxy.

    Idempotent; original columns are left untouched. Directions are converted
    to radians here and nowhere else.
    """
    stw = ds.column("stw")
    wave_dir = ds.column("wave_dir_apparent")
    derived = dict(ds.derived)
    derived[DERIVED_STW_CUBED] = stw**3
    derived[DERIVED_WAVE_DIR_COS] = np.cos(np.radians(wave_dir))
    schema = ds.schema
    have = set(schema.names)
    if DERIVED_STW_CUBED not in have or DERIVED_WAVE_DIR_COS not in have:
        extra = tuple(
            spec
            for spec in engineered_schema().features
            if spec.derived and spec.name not in have
        )
        schema = FeatureSchema(schema.features + extra)
    return dataclasses.replace(ds, schema=schema, derived=derived)


def chronological_split(
    ds: VesselDataset, train_fraction: float
) -> tuple[VesselDataset, VesselDataset]:
    """Time-ordered split: first ceil(fraction * N) rows train, rest test."""
    if not 0.0 < train_fraction < 1.0:
        raise ArgumentError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if ds.n_rows == 0:
        raise DataError("cannot split an empty dataset")
    n_train = math.ceil(train_fraction * ds.n_rows)
    idx = np.arange(ds.n_rows)
    return ds.subset(idx[:n_train]), ds.subset(idx[n_train:])


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    fold_of_row: np.ndarray  # int fold id per row

    def __post_init__(self):
        object.__setattr__(
            self, "fold_of_row", np.asarray(self.fold_of_row, dtype=int)
        )
        if self.fold_of_row.min(initial=0) < 0 or (
            self.fold_of_row.size and self.fold_of_row.max() >= self.k
        ):
            raise ArgumentError("fold ids out of range")

    @property
    def n_rows(self) -> int:
        return int(self.fold_of_row.size)

    def heldout_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row == fold)

    def training_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row != fold)


def assign_folds(
    ds: VesselDataset, k: int, seed: int = 0, shuffle: bool = False
) -> FoldAssignment:
    """Contiguous time-block folds (default) or seeded random folds.

    Block i covers rows [i*N/K, (i+1)*N/K); the leading blocks take the
    ceiling when N % K != 0. The seed only matters with ``shuffle=True``.
    """
    n = ds.n_rows
    if k < 2:
        raise ArgumentError(f"fold count must be >= 2, got {k}")
    if k > n:
        raise ArgumentError(f"fold count {k} exceeds row count {n}")
    block = (np.arange(n) * k) // n
    if shuffle:
        perm = np.random.default_rng(seed).permutation(n)
        fold_of_row = np.empty(n, dtype=int)
        fold_of_row[perm] = block
    else:
        fold_of_row = block
    return FoldAssignment(k=k, fold_of_row=fold_of_row)


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-scaling fitted on training rows only (population std)."""

    names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    constant_mask: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x - self.mean) / self.std

    def inverse_transform(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.std + self.mean

    def transform_feature(self, name: str, values: np.ndarray) -> np.ndarray:
        i = self.names.index(name)
        return (np.asarray(values, dtype=float) - self.mean[i]) / self.std[i]


def fit_standardizer_matrix(x: np.ndarray, names: Sequence[str]) -> Standardizer:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise DataError("cannot fit standardizer on empty data")
    mean = x.mean(axis=0)
    std = x.std(axis=0)  # population std: deterministic on tiny fixtures
    constant = std == 0.0
    if constant.any():
        bad = [names[i] for i in np.flatnonzero(constant)]
        warnings.warn(
            f"constant feature(s) {bad}; standard deviation replaced by 1",
            stacklevel=2,
        )
        std = np.where(constant, 1.0, std)
    return Standardizer(tuple(names), mean, std, constant)


def fit_standardizer(
    train: VesselDataset,
    schema: FeatureSchema | None = None,
    stacked: Mapping[str, np.ndarray] | None = None,
) -> Standardizer:
    """Fit feature scaling from training rows; targets are never scaled."""
    if train.n_rows == 0:
        raise DataError("cannot fit standardizer on empty training set")
    schema = schema or train.schema
    x = train.feature_matrix(schema, stacked)
    return fit_standardizer_matrix(x, schema.names)


def apply_standardizer(
    std: Standardizer,
    ds: VesselDataset,
    stacked: Mapping[str, np.ndarray] | None = None,
) -> np.ndarray:
    schema_names = std.names
    cols = []
    stacked = stacked or {}
    for name in schema_names:
        if name in stacked:
            cols.append(np.asarray(stacked[name], dtype=float))
        else:
            cols.append(ds.column(name))
    return std.transform(np.column_stack(cols))
