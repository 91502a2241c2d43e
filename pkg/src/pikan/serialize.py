"""Versioned JSON envelope for trained chained models.

One file carries all three stage models (any method), each with its schema
and schema hash, standardizer statistics, raw-feature training ranges, every
parameter, and the physics/loss/training configuration in force when it was
trained. Serialization is canonical (sorted keys) so identical models produce
bit-identical files.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np

from .baselines import MlpModel, PolynomialModel
from .dataset import FeatureSchema, FeatureSpec, Standardizer
from .errors import ArgumentError
from .kan import KanModel
from .physics import PhysicsConfig
from .pipeline import ChainedModels
from .train import LossWeights, TrainConfig

FORMAT_NAME = "vessel-chain-models"
FORMAT_VERSION = 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def schema_to_dict(schema: FeatureSchema) -> dict:
    return {
        "features": [
            {"name": f.name, "unit": f.unit, "derived": f.derived, "stacked": f.stacked}
            for f in schema.features
        ]
    }


def schema_from_dict(d: dict) -> FeatureSchema:
    return FeatureSchema(
        tuple(
            FeatureSpec(f["name"], f["unit"], f["derived"], f["stacked"])
            for f in d["features"]
        )
    )


def schema_hash(schema: FeatureSchema) -> str:
    return sha256_hex(canonical_json(schema_to_dict(schema)))


def _std_to_dict(std: Standardizer | None) -> dict | None:
    if std is None:
        return None
    return {
        "names": list(std.names),
        "mean": std.mean.tolist(),
        "std": std.std.tolist(),
        "constant_mask": std.constant_mask.astype(bool).tolist(),
    }


def _std_from_dict(d: dict | None) -> Standardizer | None:
    if d is None:
        return None
    return Standardizer(
        names=tuple(d["names"]),
        mean=np.array(d["mean"]),
        std=np.array(d["std"]),
        constant_mask=np.array(d["constant_mask"], dtype=bool),
    )


def _stage_to_dict(model) -> dict:
    if isinstance(model, KanModel):
        return {
            "kind": "kan",
            "schema": schema_to_dict(model.schema),
            "schema_hash": schema_hash(model.schema),
            "layer_norm": model.layer_norm,
            "standardizer": _std_to_dict(model.standardizer),
            "feature_min": None if model.feature_min is None else model.feature_min.tolist(),
            "feature_max": None if model.feature_max is None else model.feature_max.tolist(),
            "params": {
                "w1": model.w1.tolist(),
                "b1": model.b1.tolist(),
                "w2": model.w2.tolist(),
                "b2": model.b2.tolist(),
                "head_w": model.head_w.tolist(),
                "head_b": model.head_b.tolist(),
            },
        }
    if isinstance(model, PolynomialModel):
        return {
            "kind": "polynomial",
            "schema": schema_to_dict(model.schema),
            "schema_hash": schema_hash(model.schema),
            "params": {
                "feature_names": list(model.feature_names),
                "coeffs": model.coeffs.tolist(),
                "scale": model.scale,
                "feature_lo": model.feature_lo.tolist(),
                "feature_hi": model.feature_hi.tolist(),
            },
        }
    if isinstance(model, MlpModel):
        return {
            "kind": "mlp",
            "schema": schema_to_dict(model.schema),
            "schema_hash": schema_hash(model.schema),
            "standardizer": _std_to_dict(model.standardizer),
            "params": {
                "weights": [w.tolist() for w in model.weights],
                "biases": [b.tolist() for b in model.biases],
            },
        }
    raise ArgumentError(f"cannot serialize model of type {type(model).__name__}")


def _stage_from_dict(d: dict):
    schema = schema_from_dict(d["schema"])
    params = d["params"]
    if d["kind"] == "kan":
        return KanModel(
            w1=np.array(params["w1"]),
            b1=np.array(params["b1"]),
            w2=np.array(params["w2"]),
            b2=np.array(params["b2"]),
            head_w=np.array(params["head_w"]),
            head_b=np.array(params["head_b"]),
            schema=schema,
            layer_norm=d["layer_norm"],
            standardizer=_std_from_dict(d["standardizer"]),
            feature_min=None if d["feature_min"] is None else np.array(d["feature_min"]),
            feature_max=None if d["feature_max"] is None else np.array(d["feature_max"]),
        )
    if d["kind"] == "polynomial":
        return PolynomialModel(
            feature_names=tuple(params["feature_names"]),
            coeffs=np.array(params["coeffs"]),
            scale=params["scale"],
            feature_lo=np.array(params["feature_lo"]),
            feature_hi=np.array(params["feature_hi"]),
            schema=schema,
        )
    if d["kind"] == "mlp":
        return MlpModel(
            weights=[np.array(w) for w in params["weights"]],
            biases=[np.array(b) for b in params["biases"]],
            schema=schema,
            standardizer=_std_from_dict(d["standardizer"]),
        )
    raise ArgumentError(f"unknown stage model kind {d['kind']!r}")


def chained_to_dict(models: ChainedModels) -> dict:
    return {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "method": models.method,
        "vessel_id": models.vessel_id,
        "config_hash": models.config_hash,
        "physics": dataclasses.asdict(models.physics),
        "loss_weights": dataclasses.asdict(models.weights),
        "train": dataclasses.asdict(models.train_cfg),
        "stages": {
            "rpm": _stage_to_dict(models.rpm),
            "power": _stage_to_dict(models.power),
            "fuel": _stage_to_dict(models.fuel),
        },
    }


def chained_from_dict(d: dict) -> ChainedModels:
    if d.get("format") != FORMAT_NAME:
        raise ArgumentError(f"not a {FORMAT_NAME} file")
    if d.get("format_version") != FORMAT_VERSION:
        raise ArgumentError(f"unsupported format version {d.get('format_version')}")
    return ChainedModels(
        method=d["method"],
        rpm=_stage_from_dict(d["stages"]["rpm"]),
        power=_stage_from_dict(d["stages"]["power"]),
        fuel=_stage_from_dict(d["stages"]["fuel"]),
        physics=PhysicsConfig(**d["physics"]),
        weights=LossWeights(**d["loss_weights"]),
        train_cfg=TrainConfig(**d["train"]),
        vessel_id=d["vessel_id"],
        config_hash=d["config_hash"],
    )


def save_chained(models: ChainedModels, path) -> None:
    Path(path).write_text(
        json.dumps(chained_to_dict(models), sort_keys=True, indent=1) + "\n",
        encoding="utf-8",
    )


def load_chained(path) -> ChainedModels:
    return chained_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
