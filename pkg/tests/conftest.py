from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from pikan.dataset import VesselDataset, VoyageRecord, base_schema, engineer_features

EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)

RECORD_DEFAULTS = dict(
    stw=5.0,
    draught=9.0,
    sea_depth=60.0,
    sea_temp=12.0,
    wave_hs=1.0,
    wave_tp=7.0,
    swell_hs=0.5,
    swell_tp=9.0,
    swell_dir=45.0,
    wave_dir=30.0,
    wind_speed=6.0,
    wind_dir=120.0,
    shaft_rpm=55.0,
    shaft_power=9.0e5,
    fuel_rate=0.05,
)


def make_record(i=0, **overrides):
    kw = {**RECORD_DEFAULTS, **overrides}
    return VoyageRecord(timestamp=EPOCH + timedelta(minutes=15 * i), **kw)


def make_dataset(n=6, vessel_id="test", per_row=None, **overrides):
    """Small dataset; per_row maps field -> sequence of per-row values."""
    per_row = per_row or {}
    records = []
    for i in range(n):
        kw = dict(overrides)
        for name, vals in per_row.items():
            kw[name] = vals[i]
        records.append(make_record(i, **kw))
    return VesselDataset(vessel_id=vessel_id, records=tuple(records), schema=base_schema())


@pytest.fixture
def tiny_dataset():
    return make_dataset(n=6)


@pytest.fixture
def engineered_dataset():
    rng = np.random.default_rng(42)
    n = 40
    return engineer_features(
        make_dataset(
            n=n,
            per_row={
                "stw": rng.uniform(3, 9, n),
                "wave_dir": rng.uniform(0, 360, n),
                "wind_speed": rng.uniform(0, 10, n),
                "shaft_rpm": rng.uniform(40, 90, n),
                "shaft_power": rng.uniform(2e5, 4e6, n),
                "fuel_rate": rng.uniform(0.01, 0.2, n),
            },
        )
    )
