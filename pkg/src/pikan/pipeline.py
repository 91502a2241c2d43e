"""Leakage-free chained training: RPM -> shaft power -> fuel consumption.

Each stage is trained K-fold out-of-fold so the stacked input a downstream
stage consumes for row r was produced by a model that never saw r's fold.
Deployable models are then refit on the full training set, still using the
out-of-fold columns as stacked inputs (one serving model per stage, rather
than a fold ensemble). Provenance of every out-of-fold prediction is stored
so the no-leakage property is directly assertable.

All methods (the physics-informed model, its no-physics ablation, and both
baselines) run through the identical pipeline so comparisons isolate the
modeling choice rather than the plumbing.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .baselines import (
    PM_DEFAULT_FEATURES,
    mlp_fit,
    mlp_train_config,
    pm_fit,
)
from .dataset import (
    STACKED_POWER,
    STACKED_RPM,
    FoldAssignment,
    VesselDataset,
    assign_folds,
    chronological_split,
    fit_standardizer_matrix,
    stage_schema,
)
from .errors import ArgumentError, PikanError
from .kan import init_model
from .physics import (
    PhysicsConfig,
    calibrate_k,
    calibrate_resistance,
    cube_law_power,
    physical_power,
)
from .train import LossWeights, PhysicsTargets, TrainConfig, TrainLog, fit

METHODS = ("pikan", "polynomial", "mlp", "kan_noPhysics")
_STAGE_SALT = {"rpm": 0, "power": 1, "fuel": 2}


@dataclass(frozen=True)
class PipelineConfig:
    """Everything needed to train one vessel's chained models."""

    method: str = "pikan"
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    train: TrainConfig = field(default_factory=TrainConfig)
    hidden_width: int = 16
    layer_norm: bool = False
    pm_features: tuple[str, ...] = PM_DEFAULT_FEATURES
    folds: int = 5
    seed: int = 0
    config_hash: str = ""

    def __post_init__(self):
        if self.method not in METHODS:
            raise ArgumentError(f"unknown method {self.method!r}; expected {METHODS}")


@dataclass
class OofTable:
    """Out-of-fold predictions plus the fold that produced each one."""

    folds: FoldAssignment
    predicted_rpm: np.ndarray
    predicted_shaft_power: np.ndarray
    provenance_rpm: np.ndarray    # fold id of the held-out model per row
    provenance_power: np.ndarray

    def assert_no_leakage(self) -> None:
        """Every stacked value must come from the model that excluded its row."""
        for name, prov in (
            ("predicted_rpm", self.provenance_rpm),
            ("predicted_shaft_power", self.provenance_power),
        ):
            if not np.array_equal(prov, self.folds.fold_of_row):
                raise PikanError(f"leakage: {name} provenance does not match folds")

    def to_csv(self, path, config_hash: str = "") -> None:
        with open(path, "w", encoding="utf-8") as fh:
            if config_hash:
                fh.write(f"# config_hash={config_hash}\n")
            fh.write("row,fold,predicted_rpm,predicted_shaft_power\n")
            for i in range(self.folds.n_rows):
                fh.write(
                    f"{i},{self.folds.fold_of_row[i]},"
                    f"{self.predicted_rpm[i]!r},{self.predicted_shaft_power[i]!r}\n"
                )


@dataclass
class ChainedModels:
    """The three deployable stage models plus the configs they were trained with."""

    method: str
    rpm: object
    power: object
    fuel: object
    physics: PhysicsConfig
    weights: LossWeights
    train_cfg: TrainConfig
    vessel_id: str = ""
    config_hash: str = ""

    def __post_init__(self):
        # downstream schemas must carry exactly one stacked feature, from the
        # immediately preceding stage
        for model, stage in ((self.rpm, "rpm"), (self.power, "power"), (self.fuel, "fuel")):
            schema = getattr(model, "schema", None)
            if schema is not None and schema.stacked_names != stage_schema(stage).stacked_names:
                raise ArgumentError(f"{stage} model schema has wrong stacked features")


@dataclass
class ChainedTrainResult:
    models: ChainedModels
    oof: OofTable
    logs: dict[str, TrainLog]
    fold_models: dict[str, list]


def _derived_seeds(root: int, stage: str, fold: int) -> tuple[int, int]:
    ss = np.random.SeedSequence([root, _STAGE_SALT[stage], fold])
    init_seed, fit_seed = (int(s) for s in ss.generate_state(2))
    return init_seed, fit_seed


def _stage_physics(
    ds: VesselDataset,
    stage: str,
    stacked: Mapping[str, np.ndarray],
    cfg: PipelineConfig,
) -> tuple[PhysicsTargets | None, PhysicsConfig]:
    """Precompute per-row physics reference values for one stage's training set."""
    pc = cfg.physics
    if stage == "rpm" or cfg.method == "kan_noPhysics":
        return None, pc
    if stage == "power":
        if pc.calibrate_resistance:
            pc = calibrate_resistance(ds, pc)
        cube = None
        if cfg.weights.gamma > 0.0:
            if pc.calibrate_cube_k or pc.cube_k is None:
                pc = dataclasses.replace(pc, cube_k=calibrate_k(ds, mode=pc.cube_k_mode))
            rpm_signal = stacked.get(STACKED_RPM)
            if rpm_signal is None:
                rpm_signal = ds.target("rpm")
            cube = cube_law_power(rpm_signal, pc.cube_k)
        return PhysicsTargets(primary=physical_power(ds, pc), cube=cube), pc
    # fuel stage: consistency with the upstream power *input* signal, never
    # the true power target
    p_input = stacked.get(STACKED_POWER)
    if p_input is None:
        raise ArgumentError("fuel stage needs a stacked predicted_shaft_power column")
    return PhysicsTargets(primary=np.asarray(p_input) / (pc.eta * pc.lhv)), pc


def fit_stage_model(
    ds: VesselDataset,
    stage: str,
    stacked: Mapping[str, np.ndarray],
    cfg: PipelineConfig,
    fold: int,
) -> tuple[object, TrainLog | None]:
    """Train one stage model of the configured method on the given rows."""
    schema = stage_schema(stage)
    x_raw = ds.feature_matrix(schema, stacked)
    y = ds.target(stage)
    init_seed, fit_seed = _derived_seeds(cfg.seed, stage, fold)

    if cfg.method == "polynomial":
        return pm_fit(x_raw, y, schema, feature_names=cfg.pm_features), None

    if cfg.method == "mlp":
        model, log = mlp_fit(
            x_raw, y, schema, cfg=dataclasses.replace(mlp_train_config(), seed=fit_seed),
            seed=init_seed,
        )
        return model, log

    physics_targets, pc = _stage_physics(ds, stage, stacked, cfg)
    std = fit_standardizer_matrix(x_raw, schema.names)
    model = init_model(schema, cfg.hidden_width, seed=init_seed, layer_norm=cfg.layer_norm)
    log = fit(
        model,
        std.transform(x_raw),
        y,
        dataclasses.replace(cfg.train, seed=fit_seed, stage=stage),
        cfg.weights,
        stage=stage,
        physics=physics_targets,
    )
    model.standardizer = std
    model.feature_min = x_raw.min(axis=0)
    model.feature_max = x_raw.max(axis=0)
    model.meta = {"stage": stage, "physics": pc, "method": cfg.method}
    return model, log


def oof_stage(
    stage: str,
    ds: VesselDataset,
    folds: FoldAssignment,
    cfg: PipelineConfig,
    stacked: Mapping[str, np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray, list, list[TrainLog | None]]:
    """K held-out models, each predicting exactly the fold it never saw.

    Returns (out-of-fold column, provenance fold ids, fold models, logs).
    """
    stacked = stacked or {}
    n = ds.n_rows
    if folds.n_rows != n:
        raise ArgumentError("fold assignment does not match dataset size")
    oof = np.full(n, np.nan)
    provenance = np.full(n, -1, dtype=int)
    schema = stage_schema(stage)
    models, logs = [], []
    for k in range(folds.k):
        train_idx = folds.training_indices(k)
        held_idx = folds.heldout_indices(k)
        try:
            model, log = fit_stage_model(
                ds.subset(train_idx),
                stage,
                {name: col[train_idx] for name, col in stacked.items()},
                cfg,
                fold=k,
            )
        except PikanError as exc:
            raise type(exc)(f"{stage} stage, fold {k}: {exc}") from exc
        x_held = ds.subset(held_idx).feature_matrix(
            schema, {name: col[held_idx] for name, col in stacked.items()}
        )
        oof[held_idx] = model.predict(x_held)
        provenance[held_idx] = k
        models.append(model)
        logs.append(log)
    assert not np.isnan(oof).any(), "out-of-fold coverage has gaps"
    return oof, provenance, models, logs


#: fold id used to derive seeds for full-training-set refits (no held-out fold)
FINAL_FOLD = 1_000_000


def chained_train(
    ds: VesselDataset,
    folds: FoldAssignment,
    cfg: PipelineConfig,
) -> ChainedTrainResult:
    """Out-of-fold stacking through the chain, then final full-set refits.

    The fuel stage trains on the out-of-fold *predicted* power column; the
    true shaft power never appears in any downstream training matrix.
    """
    oof_rpm, prov_rpm, rpm_folds, _ = oof_stage("rpm", ds, folds, cfg)
    final_rpm, log_rpm = fit_stage_model(ds, "rpm", {}, cfg, fold=FINAL_FOLD)

    power_stack = {STACKED_RPM: oof_rpm}
    oof_power, prov_power, power_folds, _ = oof_stage("power", ds, folds, cfg, power_stack)
    final_power, log_power = fit_stage_model(ds, "power", power_stack, cfg, fold=FINAL_FOLD)

    fuel_stack = {STACKED_POWER: oof_power}
    final_fuel, log_fuel = fit_stage_model(ds, "fuel", fuel_stack, cfg, fold=FINAL_FOLD)

    oof = OofTable(
        folds=folds,
        predicted_rpm=oof_rpm,
        predicted_shaft_power=oof_power,
        provenance_rpm=prov_rpm,
        provenance_power=prov_power,
    )
    oof.assert_no_leakage()
    physics_used = getattr(final_power, "meta", {}).get("physics", cfg.physics)
    models = ChainedModels(
        method=cfg.method,
        rpm=final_rpm,
        power=final_power,
        fuel=final_fuel,
        physics=physics_used,
        weights=cfg.weights,
        train_cfg=cfg.train,
        vessel_id=ds.vessel_id,
        config_hash=cfg.config_hash,
    )
    logs = {k: v for k, v in (("rpm", log_rpm), ("power", log_power), ("fuel", log_fuel)) if v}
    return ChainedTrainResult(
        models=models,
        oof=oof,
        logs=logs,
        fold_models={"rpm": rpm_folds, "power": power_folds},
    )


def chained_predict(
    models: ChainedModels, ds: VesselDataset
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pure chained inference from raw features; true targets never consumed."""
    rpm_hat = models.rpm.predict(ds.feature_matrix(stage_schema("rpm")))
    x_power = ds.feature_matrix(stage_schema("power"), {STACKED_RPM: rpm_hat})
    power_hat = models.power.predict(x_power)
    x_fuel = ds.feature_matrix(stage_schema("fuel"), {STACKED_POWER: power_hat})
    fuel_hat = models.fuel.predict(x_fuel)
    return rpm_hat, power_hat, fuel_hat


def select_best_lambda(candidates: Sequence[float], medians: Sequence[float]) -> float:
    """Smallest median wins; exact ties resolve to the smaller lambda."""
    pairs = [
        (m if np.isfinite(m) else np.inf, c) for c, m in zip(candidates, medians)
    ]
    if not pairs:
        raise ArgumentError("need at least one candidate")
    if all(not np.isfinite(m) or m == np.inf for m, _ in pairs):
        raise PikanError("every lambda candidate failed on every vessel")
    return min(pairs)[1]


@dataclass
class TuneResult:
    lambda_star: float
    candidates: list[float]
    medians: list[float]
    per_vessel_mae: dict[float, dict[str, float]]


def tune_lambda_fleet(
    datasets: Sequence[VesselDataset],
    candidates: Sequence[float],
    cfg: PipelineConfig,
    train_fraction: float = 0.8,
    objective_stage: str = "fuel",
) -> TuneResult:
    """Fleet-wide physics-weight sweep.

    For each candidate, every vessel trains the full chain with lambda held
    fixed (auto-balancing disabled so candidates stay comparable) and is
    scored by validation MAE on the chain's final target; the candidate with
    the lowest median across vessels wins, ties to the smaller lambda.
    """
    candidates = [float(c) for c in candidates]
    if not candidates:
        raise ArgumentError("need at least one lambda candidate")
    if not datasets:
        raise ArgumentError("need at least one vessel dataset")
    stage_index = {"rpm": 0, "power": 1, "fuel": 2}[objective_stage]

    medians: list[float] = []
    per_vessel: dict[float, dict[str, float]] = {}
    for cand in candidates:
        weights = dataclasses.replace(
            cfg.weights,
            lam=cand,
            lambda_min=min(cfg.weights.lambda_min, cand),
            lambda_max=max(cfg.weights.lambda_max, cand),
            auto_balance=False,
        )
        cand_cfg = dataclasses.replace(cfg, weights=weights)
        maes: dict[str, float] = {}
        for ds in datasets:
            try:
                tr, val = chronological_split(ds, train_fraction)
                folds = assign_folds(tr, cfg.folds)
                result = chained_train(tr, folds, cand_cfg)
                preds = chained_predict(result.models, val)[stage_index]
                maes[ds.vessel_id] = float(
                    np.mean(np.abs(preds - val.target(objective_stage)))
                )
            except PikanError:
                continue
        per_vessel[cand] = maes
        medians.append(float(np.median(list(maes.values()))) if maes else np.inf)
    lam = select_best_lambda(candidates, medians)
    return TuneResult(
        lambda_star=lam, candidates=candidates, medians=medians, per_vessel_mae=per_vessel
    )
