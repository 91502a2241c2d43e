"""Experiment configuration: one JSON file drives every CLI command.

The file has nested sections mirroring the runtime dataclasses::

    {
      "seed": 7,
      "out_dir": "runs/demo",
      "method": "pikan",              // pikan | polynomial | mlp | kan_noPhysics
      "folds": 5,
      "train_fraction": 0.8,
      "lambda_candidates": [0.01, 0.1, 1.0, 10.0],
      "data": {
        "synth": {"vessels": 2, "n_rows": 1500, "noise_power": 0.02, ...}
        // or: "csv_paths": {"vessel-a": "data/a.csv"}
      },
      "physics": {"eta": 0.4, "lhv": 42.7e6, ...},
      "loss_weights": {"lambda": 1.0, "lambda_min": 1e-4, ...},
      "train": {"learning_rate": 1e-3, "batch_size": 32, ...},
      "model": {"hidden_width": 16, "layer_norm": false, "pm_features": [...]}
    }

Exactly one data source must be present. Every artifact a run produces
embeds the sha256 hash of the resolved configuration for provenance.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .baselines import PM_DEFAULT_FEATURES
from .dataset import VesselDataset, engineer_features, load_csv
from .errors import ConfigError
from .physics import PhysicsConfig
from .pipeline import PipelineConfig
from .serialize import canonical_json, sha256_hex
from .synth import SynthConfig, generate
from .train import LossWeights, TrainConfig

_METHODS = ("pikan", "polynomial", "mlp", "kan_noPhysics")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    out_dir: str
    method: str
    folds: int
    train_fraction: float
    lambda_candidates: tuple[float, ...]
    csv_paths: Mapping[str, str] | None
    synth_template: SynthConfig | None
    synth_vessels: int
    physics: PhysicsConfig
    weights: LossWeights
    train: TrainConfig
    hidden_width: int
    layer_norm: bool
    pm_features: tuple[str, ...]
    config_hash: str

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            method=self.method,
            physics=self.physics,
            weights=self.weights,
            train=self.train,
            hidden_width=self.hidden_width,
            layer_norm=self.layer_norm,
            pm_features=self.pm_features,
            folds=self.folds,
            seed=self.seed,
            config_hash=self.config_hash,
        )


def _take(section: dict, cls, rename: Mapping[str, str] | None = None):
    rename = rename or {}
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, val in section.items():
        name = rename.get(key, key)
        if name not in known:
            raise ConfigError(f"unknown key {key!r} in {cls.__name__} section")
        kwargs[name] = tuple(val) if isinstance(val, list) else val
    return cls(**kwargs)


def load_experiment_config(path, seed_override: int | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return parse_experiment_config(raw, seed_override)


def parse_experiment_config(raw: dict, seed_override: int | None = None) -> ExperimentConfig:
    raw = dict(raw)
    if seed_override is not None:
        raw["seed"] = seed_override
    method = raw.get("method", "pikan")
    if method not in _METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {_METHODS}")

    data = raw.get("data", {})
    csv_paths = data.get("csv_paths")
    synth_section = data.get("synth")
    if (csv_paths is None) == (synth_section is None):
        raise ConfigError("config must name exactly one data source (csv_paths or synth)")

    synth_template = None
    synth_vessels = 0
    if synth_section is not None:
        synth_section = dict(synth_section)
        synth_vessels = int(synth_section.pop("vessels", 1))
        if synth_vessels < 1:
            raise ConfigError("synth.vessels must be >= 1")
        synth_template = _take(synth_section, SynthConfig)

    cfg = ExperimentConfig(
        seed=int(raw.get("seed", 0)),
        out_dir=raw.get("out_dir", "runs/out"),
        method=method,
        folds=int(raw.get("folds", 5)),
        train_fraction=float(raw.get("train_fraction", 0.8)),
        lambda_candidates=tuple(float(c) for c in raw.get("lambda_candidates", [1.0])),
        csv_paths=csv_paths,
        synth_template=synth_template,
        synth_vessels=synth_vessels,
        physics=_take(raw.get("physics", {}), PhysicsConfig),
        weights=_take(raw.get("loss_weights", {}), LossWeights, rename={"lambda": "lam"}),
        train=_take(raw.get("train", {}), TrainConfig),
        hidden_width=int(raw.get("model", {}).get("hidden_width", 16)),
        layer_norm=bool(raw.get("model", {}).get("layer_norm", False)),
        pm_features=tuple(raw.get("model", {}).get("pm_features", PM_DEFAULT_FEATURES)),
        config_hash="",
    )
    resolved = {
        **{
            k: getattr(cfg, k)
            for k in (
                "seed",
                "method",
                "folds",
                "train_fraction",
                "hidden_width",
                "layer_norm",
            )
        },
        "lambda_candidates": list(cfg.lambda_candidates),
        "pm_features": list(cfg.pm_features),
        "csv_paths": None if csv_paths is None else dict(csv_paths),
        "synth": None
        if synth_template is None
        else {**dataclasses.asdict(synth_template), "vessels": synth_vessels},
        "physics": dataclasses.asdict(cfg.physics),
        "loss_weights": dataclasses.asdict(cfg.weights),
        "train": dataclasses.asdict(cfg.train),
    }
    return dataclasses.replace(cfg, config_hash=sha256_hex(canonical_json(resolved)))


def synth_vessel_configs(cfg: ExperimentConfig) -> list[SynthConfig]:
    """Per-vessel generator configs with derived seeds and ids."""
    if cfg.synth_template is None:
        raise ConfigError("config has no synthetic data section")
    out = []
    for v in range(cfg.synth_vessels):
        seed = int(np.random.SeedSequence([cfg.seed, 1000 + v]).generate_state(1)[0])
        out.append(
            dataclasses.replace(
                cfg.synth_template, seed=seed, vessel_id=f"synth-{v:02d}"
            )
        )
    return out


def load_datasets(cfg: ExperimentConfig) -> list[VesselDataset]:
    """Materialize the configured data source, feature-engineered."""
    if cfg.csv_paths is not None:
        out = []
        for vessel_id, p in sorted(cfg.csv_paths.items()):
            if not Path(p).exists():
                raise ConfigError(f"data path {p} for vessel {vessel_id!r} does not exist")
            out.append(engineer_features(load_csv(p, vessel_id=vessel_id)))
        return out
    return [generate(sc) for sc in synth_vessel_configs(cfg)]
