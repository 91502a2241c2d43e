"""Losses, the auto-balanced objective, Adam, and the training loop.

The total objective is

    L = L_data + lambda * L_physics + L_reg

with MAE data fidelity, a stage-dependent physics term (none for the RPM
stage, resistance-power plus optional cube-law prior for the power stage,
fuel-energy consistency for the fuel stage), and an elastic-net penalty over
weights (biases excluded). The physics weight lambda is a multiplicative
controller updated once per epoch on epoch-mean component losses:

    lambda_new = clip(lambda * exp(rate * (L_data - L_physics)), lo, hi)

Per-epoch cadence is deliberate; per-batch updates oscillate on small
batches. lambda is held constant inside an epoch's gradients — the
controller is a heuristic balancer, not part of the differentiated
objective. Physics targets never depend on model parameters, so they are
precomputed per row before training.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import ArgumentError, ConfigError, TrainingDivergedError
from .physics import PhysicsConfig, cube_law_power

#: Minimum drop in validation MAE that counts as an improvement.
MIN_VAL_IMPROVEMENT = 1e-6

STAGES_WITH_PHYSICS = ("power", "fuel")


@dataclass(frozen=True)
class LossWeights:
    """Mixing knobs of the training objective.

    ``lam`` is the physics weight (lambda); ``balance_rate`` is the
    controller's exponent rate, named to avoid clashing with the engine
    efficiency eta. ``gamma`` weights the optional cube-law prior inside the
    power-stage physics term.
    """

    lam: float = 1.0
    lambda_min: float = 1e-4
    lambda_max: float = 10.0
    balance_rate: float = 0.01
    gamma: float = 0.0
    alpha: float = 1e-2
    rho: float = 0.5
    auto_balance: bool = True

    def __post_init__(self):
        if not 0.0 < self.lambda_min <= self.lam <= self.lambda_max:
            raise ConfigError(
                f"need 0 < lambda_min <= lambda <= lambda_max, got "
                f"({self.lambda_min}, {self.lam}, {self.lambda_max})"
            )
        if self.balance_rate <= 0:
            raise ConfigError("balance_rate must be > 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must be in [0, 1]")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError("rho must be in [0, 1]")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 150
    patience: int = 10
    val_fraction: float = 0.2
    seed: int = 0
    stage: str = "rpm"

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 0:
            raise ConfigError("learning rate, batch size must be positive; epochs >= 0")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.max_epochs > 0 and self.patience > self.max_epochs:
            raise ConfigError("patience must not exceed max_epochs")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must be in [0, 1)")
        if self.stage not in ("rpm", "power", "fuel"):
            raise ConfigError(f"unknown stage {self.stage!r}")


@dataclass
class EpochRecord:
    epoch: int
    data_loss: float
    physics_loss: float
    lam: float
    val_mae: float
    wall_time: float


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    stop_epoch: int = 0
    stop_reason: str = ""

    def to_csv(self, path) -> None:
        # wall_time deliberately omitted: exported logs stay bit-reproducible
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,data_loss,physics_loss,lambda,val_mae\n")
            for e in self.epochs:
                fh.write(
                    f"{e.epoch},{e.data_loss!r},{e.physics_loss!r},"
                    f"{e.lam!r},{e.val_mae!r}\n"
                )


@dataclass(frozen=True)
class PhysicsTargets:
    """Per-row physics reference values, fixed before training starts."""

    primary: np.ndarray | None = None  # resistance power (power stage) or P/(eta*lhv) (fuel)
    cube: np.ndarray | None = None     # k * n^3, only when the cube prior is active

    def take(self, idx) -> "PhysicsTargets":
        return PhysicsTargets(
            primary=None if self.primary is None else self.primary[idx],
            cube=None if self.cube is None else self.cube[idx],
        )


@dataclass(frozen=True)
class LossComponents:
    total: float
    data: float
    physics: float
    reg: float


def data_loss(y_hat, y) -> float:
    """Mean absolute error between predictions and observations."""
    y_hat = np.asarray(y_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    if y_hat.shape != y.shape or y.size == 0:
        raise ArgumentError("data_loss needs equal, non-empty vectors")
    return float(np.mean(np.abs(y_hat - y)))


def mse_loss(y_hat, y) -> float:
    y_hat = np.asarray(y_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    if y_hat.shape != y.shape or y.size == 0:
        raise ArgumentError("mse_loss needs equal, non-empty vectors")
    return float(np.mean((y_hat - y) ** 2))


def physics_component(y_hat, targets: PhysicsTargets | None, gamma: float) -> float:
    if targets is None or targets.primary is None:
        return 0.0
    val = data_loss(y_hat, targets.primary)
    if gamma > 0.0:
        if targets.cube is None:
            raise ConfigError("cube-law prior requested (gamma > 0) but no cube target")
        val += gamma * data_loss(y_hat, targets.cube)
    return val


def physics_loss_power(
    p_hat,
    features: Mapping[str, np.ndarray],
    cfg: PhysicsConfig,
    weights: LossWeights,
) -> float:
    """Power-stage physics term from raw feature columns.

    ``features`` must carry stw (m/s), wind_speed_apparent, wind_dir_apparent,
    wave_Hs, wave_dir_apparent, and — when the cube prior is active — ``rpm``,
    the RPM signal the model consumes (the stacked prediction in the chained
    pipeline). The cube term is skipped entirely at gamma = 0.
    """
    from .physics import calm_resistance, wave_resistance, wind_resistance

    stw = np.asarray(features["stw"], dtype=float)
    resistance = (
        calm_resistance(stw, cfg)
        + wind_resistance(features["wind_speed_apparent"], features["wind_dir_apparent"], cfg)
        + wave_resistance(features["wave_Hs"], features["wave_dir_apparent"], cfg)
    )
    cube = None
    if weights.gamma > 0.0:
        if cfg.cube_k is None:
            raise ConfigError("gamma > 0 requires a calibrated cube-law constant k")
        cube = cube_law_power(features["rpm"], cfg.cube_k)
    return physics_component(
        p_hat, PhysicsTargets(primary=resistance * stw, cube=cube), weights.gamma
    )


def physics_loss_fuel(m_hat, p_input, cfg: PhysicsConfig) -> float:
    """Fuel-stage physics term: consistency with P/(eta*lhv).

    ``p_input`` is the upstream power signal the model consumes as input
    (stacked/out-of-fold prediction, never the true power target).
    """
    target = np.asarray(p_input, dtype=float) / (cfg.eta * cfg.lhv)
    return data_loss(m_hat, target)


def elastic_penalty(model, alpha: float, rho: float) -> float:
    """alpha * (rho * sum|w| + (1-rho)/2 * sum w^2) over weights, biases excluded."""
    params = model.parameters()
    l1 = sum(float(np.abs(params[i]).sum()) for i in model.WEIGHT_PARAMS)
    l2 = sum(float((params[i] ** 2).sum()) for i in model.WEIGHT_PARAMS)
    return alpha * (rho * l1 + (1.0 - rho) / 2.0 * l2)


def elastic_gradients(model, alpha: float, rho: float) -> dict[int, np.ndarray]:
    """Subgradient of the elastic penalty (|.|' at 0 taken as 0)."""
    params = model.parameters()
    return {
        i: alpha * (rho * np.sign(params[i]) + (1.0 - rho) * params[i])
        for i in model.WEIGHT_PARAMS
    }


def total_loss(
    stage: str,
    y_hat,
    y,
    physics: PhysicsTargets | None,
    model,
    weights: LossWeights,
    data_loss_kind: str = "mae",
) -> LossComponents:
    """Composite objective; components are returned for logging and the
    lambda controller and always sum exactly to the total."""
    if stage == "rpm":
        physics = None
    l_data = data_loss(y_hat, y) if data_loss_kind == "mae" else mse_loss(y_hat, y)
    l_phys = physics_component(y_hat, physics, weights.gamma)
    l_reg = elastic_penalty(model, weights.alpha, weights.rho)
    return LossComponents(
        total=l_data + weights.lam * l_phys + l_reg,
        data=l_data,
        physics=l_phys,
        reg=l_reg,
    )


def loss_gradient_wrt_output(
    y_hat,
    y,
    physics: PhysicsTargets | None,
    weights: LossWeights,
    data_loss_kind: str = "mae",
) -> np.ndarray:
    """dL/dyhat per row for the composite objective (reg term excluded)."""
    y_hat = np.asarray(y_hat, dtype=float)
    n = y_hat.size
    if data_loss_kind == "mae":
        g = np.sign(y_hat - y) / n
    else:
        g = 2.0 * (y_hat - y) / n
    if physics is not None and physics.primary is not None:
        g = g + weights.lam * np.sign(y_hat - physics.primary) / n
        if weights.gamma > 0.0 and physics.cube is not None:
            g = g + weights.lam * weights.gamma * np.sign(y_hat - physics.cube) / n
    return g


def update_lambda(weights: LossWeights, l_data: float, l_physics: float) -> float:
    """One controller step on epoch-mean losses; clipped to the bounds."""
    if not (np.isfinite(l_data) and np.isfinite(l_physics)):
        raise ArgumentError("lambda update needs finite losses")
    lam = weights.lam * np.exp(weights.balance_rate * (l_data - l_physics))
    return float(np.clip(lam, weights.lambda_min, weights.lambda_max))


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    t: int | None = None,
) -> AdamState:
    """Standard bias-corrected Adam update, applied in place.

    ``lr`` may be a scalar or one value per parameter array.
    """
    if t is None:
        state.t += 1
        t = state.t
    else:
        state.t = t
    if t < 1:
        raise ArgumentError("Adam step index t must be >= 1")
    lrs = [lr] * len(params) if np.isscalar(lr) else list(lr)
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g, m, v, lri in zip(params, grads, state.m, state.v, lrs):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g**2
        p -= lri * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


def _loss_and_grads(model, x, y, physics, weights, stage, data_loss_kind):
    y_hat, cache = model.forward(x)
    comps = total_loss(stage, y_hat, y, physics, model, weights, data_loss_kind)
    dl_dy = loss_gradient_wrt_output(
        y_hat, y, None if stage == "rpm" else physics, weights, data_loss_kind
    )
    grads = model.backward(cache, dl_dy)
    for i, g_reg in elastic_gradients(model, weights.alpha, weights.rho).items():
        grads[i] = grads[i] + g_reg
    return comps, grads


def fit(
    model,
    x: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    weights: LossWeights,
    stage: str | None = None,
    physics: PhysicsTargets | None = None,
    data_loss_kind: str = "mae",
) -> TrainLog:
    """Mini-batch Adam with chronological-tail validation and early stopping.

    Mutates ``model`` in place and leaves it at the best-validation snapshot.
    The head parameter group trains with its step size scaled by the target
    spread: the pinned zero-mean initialization otherwise cannot reach
    physical-unit outputs (megawatt-scale targets) within the epoch budget.
    Raises ``TrainingDivergedError`` carrying the last finite log if the loss
    leaves the reals.
    """
    stage = stage or cfg.stage
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < cfg.batch_size:
        raise ArgumentError(f"need at least batch_size={cfg.batch_size} rows, got {n}")
    if stage == "rpm":
        physics = None

    n_fit = int(np.ceil((1.0 - cfg.val_fraction) * n))
    x_fit, y_fit = x[:n_fit], y[:n_fit]
    x_val, y_val = x[n_fit:], y[n_fit:]
    phys_fit = physics.take(slice(0, n_fit)) if physics is not None else None

    log = TrainLog()
    if cfg.max_epochs == 0:
        log.stop_reason = "max_epochs"
        return log

    params = model.parameters()
    lrs = [cfg.learning_rate] * len(params)
    # optimal head parameters live at the target's own magnitude; the pinned
    # zero-scale init must be able to reach it within the epoch budget
    head_scale = max(1.0, abs(float(y_fit.mean())) + float(y_fit.std()))
    for i in model.HEAD_PARAMS:
        lrs[i] = cfg.learning_rate * head_scale

    rng = np.random.default_rng(cfg.seed)
    state = AdamState.for_params(params)
    best_val = np.inf
    best_snap = model.snapshot()
    epochs_without_improvement = 0
    lam_weights = weights

    for epoch in range(1, cfg.max_epochs + 1):
        tic = time.perf_counter()
        perm = rng.permutation(n_fit)
        data_sum = phys_sum = 0.0
        for start in range(0, n_fit, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            comps, grads = _loss_and_grads(
                model,
                x_fit[idx],
                y_fit[idx],
                phys_fit.take(idx) if phys_fit is not None else None,
                lam_weights,
                stage,
                data_loss_kind,
            )
            if not np.isfinite(comps.total):
                log.stop_epoch = epoch
                log.stop_reason = "diverged"
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} ({stage} stage)", log=log
                )
            data_sum += comps.data * idx.size
            phys_sum += comps.physics * idx.size
            adam_step(params, grads, state, lrs)

        l_data = data_sum / n_fit
        l_phys = phys_sum / n_fit
        if y_val.size:
            val_pred, _ = model.forward(x_val)
            val_mae = float(np.mean(np.abs(val_pred - y_val)))
        else:
            val_mae = float("nan")
        log.epochs.append(
            EpochRecord(epoch, l_data, l_phys, lam_weights.lam, val_mae,
                        time.perf_counter() - tic)
        )

        if physics is not None and lam_weights.auto_balance:
            lam_weights = replace(
                lam_weights, lam=update_lambda(lam_weights, l_data, l_phys)
            )

        if y_val.size:
            if best_val - val_mae >= MIN_VAL_IMPROVEMENT:
                best_val = val_mae
                best_snap = model.snapshot()
                epochs_without_improvement = 0
            else:
                epochs_without_improvement += 1
                if epochs_without_improvement >= cfg.patience:
                    log.stop_epoch = epoch
                    log.stop_reason = "early_stop"
                    break
    if not log.stop_reason:
        log.stop_epoch = len(log.epochs)
        log.stop_reason = "max_epochs"
    if y_val.size:
        model.restore(best_snap)
    return log
