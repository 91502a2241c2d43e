"""Reference methods behind the same train/predict surface as the main model.

Two comparison methods: a multiplicative product of per-feature cubic
polynomials (strong on near-linear targets such as shaft RPM), and a plain
two-hidden-layer ReLU network. Both plug into the chained pipeline and the
evaluator unchanged.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import FeatureSchema, Standardizer, fit_standardizer_matrix
from .errors import ArgumentError, ConditioningError
from .train import LossWeights, TrainConfig, TrainLog, fit

#: Feature set used when no explicit selection is supplied: speed through
#: water, draught, apparent wind speed, swell height.
PM_DEFAULT_FEATURES = ("stw", "draught", "wind_speed_apparent", "swell_Hs")

PM_MAX_SWEEPS = 50
PM_REL_TOL = 1e-6
PM_CORR_THRESHOLD = 0.05
PM_MAX_FEATURES = 4
_RIDGE = 1e-8


# ---------------------------------------------------------------------------
# multiplicative polynomial model
# ---------------------------------------------------------------------------

@dataclass
class PolynomialModel:
    """prediction = scale * prod_i p_i(u_i), cubic p_i per selected feature.

    Features are affinely mapped so the training range lands on [1, 2],
    keeping every factor bounded away from zero and the product
    well-conditioned; ``scale`` carries the target magnitude so the factors
    stay O(1).
    """

    feature_names: tuple[str, ...]
    coeffs: np.ndarray        # (n_features, 4), ascending powers
    scale: float
    feature_lo: np.ndarray    # raw train minima of the selected features
    feature_hi: np.ndarray
    schema: FeatureSchema
    train_predictions: np.ndarray | None = field(default=None, repr=False)

    def _unit_space(self, x_raw: np.ndarray) -> np.ndarray:
        cols = [x_raw[:, self.schema.index_of(n)] for n in self.feature_names]
        u = np.column_stack(cols)
        return 1.0 + (u - self.feature_lo) / (self.feature_hi - self.feature_lo)

    def factor_values(self, u: np.ndarray) -> np.ndarray:
        return np.stack(
            [np.polynomial.polynomial.polyval(u[:, i], self.coeffs[i])
             for i in range(len(self.feature_names))],
            axis=1,
        )

    def predict(self, x_raw: np.ndarray) -> np.ndarray:
        u = self._unit_space(np.atleast_2d(np.asarray(x_raw, dtype=float)))
        return self.scale * self.factor_values(u).prod(axis=1)


def _lstsq_cubic(u: np.ndarray, target: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    v = np.vander(u, N=4, increasing=True)
    if ridge:
        a = v.T @ v + ridge * np.eye(4)
        return np.linalg.solve(a, v.T @ target)
    coeffs, *_ = np.linalg.lstsq(v, target, rcond=None)
    return coeffs


def pm_fit(
    x_raw: np.ndarray,
    y: np.ndarray,
    schema: FeatureSchema,
    feature_names=PM_DEFAULT_FEATURES,
    max_sweeps: int = PM_MAX_SWEEPS,
) -> PolynomialModel:
    """Alternating least-squares fit of the multiplicative model.

    Each cyclic step refits one factor against y / (product of the others),
    excluding rows where that partial product falls under eps; a refit is
    kept only if it does not increase train MAE, so the MAE trace is
    monotone non-increasing by construction. Stops on relative improvement
    < 1e-6 or after ``max_sweeps`` sweeps.
    """
    x_raw = np.atleast_2d(np.asarray(x_raw, dtype=float))
    y = np.asarray(y, dtype=float)
    feature_names = tuple(feature_names)
    cols = np.column_stack([x_raw[:, schema.index_of(n)] for n in feature_names])
    lo, hi = cols.min(axis=0), cols.max(axis=0)
    if np.any(hi == lo):
        flat = [n for n, l, h in zip(feature_names, lo, hi) if l == h]
        raise ArgumentError(f"constant feature(s) on train data: {flat}")

    scale = float(np.mean(np.abs(y))) or 1.0
    yn = y / scale
    eps = 1e-6 * float(np.max(np.abs(yn)))

    model = PolynomialModel(
        feature_names=feature_names,
        coeffs=np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (len(feature_names), 1)),
        scale=scale,
        feature_lo=lo,
        feature_hi=hi,
        schema=schema,
    )
    u = model._unit_space(x_raw)
    model.coeffs[0] = _lstsq_cubic(u[:, 0], yn)

    def train_mae() -> float:
        return float(np.mean(np.abs(model.scale * model.factor_values(u).prod(axis=1) - y)))

    mae_cur = train_mae()
    for _ in range(max_sweeps):
        mae_sweep_start = mae_cur
        for i in range(len(feature_names)):
            factors = model.factor_values(u)
            partial = np.delete(factors, i, axis=1).prod(axis=1)
            mask = np.abs(partial) >= eps
            if not mask.any():
                raise ConditioningError(
                    f"all rows excluded while refitting factor {feature_names[i]!r}"
                )
            old = model.coeffs[i].copy()
            model.coeffs[i] = _lstsq_cubic(u[mask, i], yn[mask] / partial[mask])
            mae_new = train_mae()
            if mae_new <= mae_cur:
                mae_cur = mae_new
            else:
                model.coeffs[i] = old
        if (mae_sweep_start - mae_cur) < PM_REL_TOL * max(mae_sweep_start, 1e-300):
            break

    # conditioning guard: factors must stay bounded away from zero on train
    factors = model.factor_values(u)
    for i in range(len(feature_names)):
        if np.abs(factors[:, i]).min() < eps:
            partial = np.delete(factors, i, axis=1).prod(axis=1)
            mask = np.abs(partial) >= eps
            if not mask.any():
                raise ConditioningError(
                    f"all rows excluded in ridge refit of {feature_names[i]!r}"
                )
            model.coeffs[i] = _lstsq_cubic(
                u[mask, i], yn[mask] / partial[mask], ridge=_RIDGE
            )
            factors = model.factor_values(u)
            if np.abs(factors[:, i]).min() < eps:
                warnings.warn(
                    f"factor {feature_names[i]!r} remains near zero after ridge refit",
                    stacklevel=2,
                )
    model.train_predictions = model.scale * factors.prod(axis=1)
    return model


def pm_predict(model: PolynomialModel, x_raw: np.ndarray) -> np.ndarray:
    return model.predict(x_raw)


def pm_select_features(
    x_raw: np.ndarray,
    y: np.ndarray,
    schema: FeatureSchema,
    candidates=None,
    max_features: int = PM_MAX_FEATURES,
    corr_threshold: float = PM_CORR_THRESHOLD,
) -> tuple[str, ...]:
    """Greedy residual-correlation feature selection for the product model.

    Starts from the mean predictor, repeatedly adds the candidate with the
    highest absolute Pearson correlation against the current residuals, and
    refits; stops at ``max_features`` or when no correlation exceeds the
    threshold.
    """
    x_raw = np.atleast_2d(np.asarray(x_raw, dtype=float))
    y = np.asarray(y, dtype=float)
    if candidates is None:
        candidates = [f.name for f in schema.features if not f.stacked]
    candidates = list(candidates)
    if not candidates:
        raise ArgumentError("need at least one candidate feature")

    selected: list[str] = []
    residual = y - y.mean()
    while len(selected) < max_features:
        best_name, best_corr = None, corr_threshold
        r_std = residual.std()
        if r_std > 0:
            for name in candidates:
                if name in selected:
                    continue
                col = x_raw[:, schema.index_of(name)]
                c_std = col.std()
                if c_std == 0:
                    continue
                corr = abs(float(np.mean((col - col.mean()) * (residual - residual.mean())))
                           / (c_std * r_std))
                if corr > best_corr:
                    best_name, best_corr = name, corr
        if best_name is None:
            break
        selected.append(best_name)
        model = pm_fit(x_raw, y, schema, feature_names=tuple(selected))
        residual = y - model.train_predictions
    return tuple(selected)


# ---------------------------------------------------------------------------
# MLP baseline
# ---------------------------------------------------------------------------

MLP_HIDDEN = (37, 28)


@dataclass
class MlpCache:
    x: np.ndarray
    pre: list[np.ndarray]
    act: list[np.ndarray]


@dataclass
class MlpModel:
    """Dense ReLU network: input -> hidden widths -> linear scalar head."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    schema: FeatureSchema
    standardizer: Standardizer | None = None

    # parameters() layout: [W0, b0, W1, b1, W2, b2]
    WEIGHT_PARAMS = (0, 2, 4)
    HEAD_PARAMS = (4, 5)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def snapshot(self) -> list[np.ndarray]:
        return [p.copy() for p in self.parameters()]

    def restore(self, snap) -> None:
        for dst, src in zip(self.parameters(), snap):
            dst[...] = src

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, MlpCache]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        pre, act = [], []
        a = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            pre.append(z)
            a = z if i == last else np.maximum(z, 0.0)
            act.append(a)
        return act[-1][:, 0], MlpCache(x=x, pre=pre, act=act)

    def backward(self, cache: MlpCache, dl_dy: np.ndarray) -> list[np.ndarray]:
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))
        delta = np.asarray(dl_dy, dtype=float)[:, None]
        for i in range(len(self.weights) - 1, -1, -1):
            a_prev = cache.x if i == 0 else cache.act[i - 1]
            grads[2 * i] = a_prev.T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (cache.pre[i - 1] > 0)
        return grads

    def predict(self, x_raw: np.ndarray) -> np.ndarray:
        if self.standardizer is None:
            raise ArgumentError("model has no fitted standardizer")
        return self.forward(self.standardizer.transform(x_raw))[0]


def init_mlp(schema: FeatureSchema, hidden=MLP_HIDDEN, seed: int = 0) -> MlpModel:
    rng = np.random.default_rng(seed)
    sizes = [len(schema), *hidden, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights=weights, biases=biases, schema=schema)


def mlp_train_config(seed: int = 0) -> TrainConfig:
    return TrainConfig(
        learning_rate=1e-2, batch_size=8, max_epochs=200, patience=10, seed=seed
    )


def mlp_loss_weights() -> LossWeights:
    return LossWeights(alpha=0.01, rho=0.5, auto_balance=False)


def mlp_fit(
    x_raw: np.ndarray,
    y: np.ndarray,
    schema: FeatureSchema,
    cfg: TrainConfig | None = None,
    hidden=MLP_HIDDEN,
    seed: int = 0,
) -> tuple[MlpModel, TrainLog]:
    """Squared-error + elastic-net training of the dense baseline.

    Shares the Adam/early-stopping machinery of the main trainer; no physics
    term. Inputs standardized, outputs in physical units.
    """
    x_raw = np.atleast_2d(np.asarray(x_raw, dtype=float))
    cfg = cfg or mlp_train_config(seed)
    std = fit_standardizer_matrix(x_raw, schema.names)
    model = init_mlp(schema, hidden=hidden, seed=seed)
    log = fit(
        model,
        std.transform(x_raw),
        y,
        cfg,
        mlp_loss_weights(),
        stage="rpm",  # no physics term in this baseline's objective
        data_loss_kind="mse",
    )
    model.standardizer = std
    return model, log


def mlp_predict(model: MlpModel, x_raw: np.ndarray) -> np.ndarray:
    return model.predict(x_raw)
