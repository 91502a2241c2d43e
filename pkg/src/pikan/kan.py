"""Additive univariate-network regressor with exact analytic gradients.

Each input feature x_p passes through its own tiny two-layer network
phi_p (1 -> m hidden sigmoid units -> 1); the prediction is the linear
combination

    yhat = sum_p w_p * phi_p(x_p) + b .

No cross-feature term exists anywhere in the parameterization, so the
influence of feature p on the prediction is exactly w_p * phi_p and can be
plotted directly. An optional per-subnet layer-normalization step (applied
after the hidden activation, without affine parameters — the output layer
already provides scale and shift) reproduces the stacked
linear/activation/norm variant.

Inputs are standardized; outputs live in physical target units so the
physics losses compare like with like.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import FeatureSchema, Standardizer
from .errors import ArgumentError, DataError

_LN_EPS = 1e-5


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class UnivariateSubnet:
    """Parameters of one per-feature transformation (views into the model)."""

    w1: np.ndarray  # (m,) input-to-hidden weights
    b1: np.ndarray  # (m,)
    w2: np.ndarray  # (m,) hidden-to-output weights
    b2: float


@dataclass
class ForwardCache:
    """Everything backprop needs from one forward pass."""

    x: np.ndarray            # (n, d) standardized inputs
    pre_act: np.ndarray      # (n, d, m)
    act: np.ndarray          # (n, d, m) sigmoid outputs
    normed: np.ndarray | None  # (n, d, m) after layer norm, if enabled
    inv_std: np.ndarray | None  # (n, d, 1) layer-norm 1/sqrt(var+eps)
    h: np.ndarray            # (n, d) subnet outputs


@dataclass
class KanGradients:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray  # shape (1,)

    def as_list(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2, self.head_w, self.head_b]


@dataclass
class KanModel:
    """Per-feature subnets stacked as (d, m) arrays plus the linear head."""

    w1: np.ndarray           # (d, m)
    b1: np.ndarray           # (d, m)
    w2: np.ndarray           # (d, m)
    b2: np.ndarray           # (d,)
    head_w: np.ndarray       # (d,)
    head_b: np.ndarray       # (1,)
    schema: FeatureSchema
    layer_norm: bool = False
    standardizer: Standardizer | None = None
    feature_min: np.ndarray | None = None  # raw train minima, for response grids
    feature_max: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_width(self) -> int:
        return self.w1.shape[1]

    def subnet(self, p: int) -> UnivariateSubnet:
        return UnivariateSubnet(self.w1[p], self.b1[p], self.w2[p], float(self.b2[p]))

    def parameters(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2, self.head_w, self.head_b]

    # indices into parameters(): arrays regularized as weights, and the head
    # group whose step size follows the target scale during training
    WEIGHT_PARAMS = (0, 2, 4)
    HEAD_PARAMS = (4, 5)

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def snapshot(self) -> list[np.ndarray]:
        return [p.copy() for p in self.parameters()]

    def restore(self, snap: list[np.ndarray]) -> None:
        for dst, src in zip(self.parameters(), snap):
            dst[...] = src

    def clone(self) -> "KanModel":
        return KanModel(
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            w2=self.w2.copy(),
            b2=self.b2.copy(),
            head_w=self.head_w.copy(),
            head_b=self.head_b.copy(),
            schema=self.schema,
            layer_norm=self.layer_norm,
            standardizer=self.standardizer,
            feature_min=None if self.feature_min is None else self.feature_min.copy(),
            feature_max=None if self.feature_max is None else self.feature_max.copy(),
            meta=dict(self.meta),
        )

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
        return forward(self, x)

    def backward(self, cache: ForwardCache, dl_dy: np.ndarray) -> list[np.ndarray]:
        return gradient(self, cache, dl_dy).as_list()

    def predict(self, x_raw: np.ndarray) -> np.ndarray:
        """Predict from raw (unstandardized) features, one column per schema name."""
        if self.standardizer is None:
            raise DataError("model has no fitted standardizer")
        yhat, _ = forward(self, self.standardizer.transform(x_raw))
        return yhat


def init_model(
    schema: FeatureSchema,
    hidden_width: int = 16,
    seed: int = 0,
    layer_norm: bool = False,
) -> KanModel:
    """Deterministic initialization: uniform +-sqrt(6/(fan_in+fan_out))
    subnet weights, zero biases, head weights uniform +-1/sqrt(d)."""
    if hidden_width < 1:
        raise ArgumentError("hidden_width must be >= 1")
    d, m = len(schema), hidden_width
    rng = np.random.default_rng(seed)
    bound = np.sqrt(6.0 / (1 + m))  # fan_in 1, fan_out m (and symmetric for w2)
    model = KanModel(
        w1=rng.uniform(-bound, bound, (d, m)),
        b1=np.zeros((d, m)),
        w2=rng.uniform(-bound, bound, (d, m)),
        b2=np.zeros(d),
        head_w=rng.uniform(-1.0 / np.sqrt(d), 1.0 / np.sqrt(d), d),
        head_b=np.zeros(1),
        schema=schema,
        layer_norm=layer_norm,
    )
    expected = d * (3 * m + 1) + d + 1
    assert model.parameter_count() == expected, "parameter bookkeeping drifted"
    return model


def forward(model: KanModel, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Batch forward pass; returns predictions and the backprop cache."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != model.n_features:
        raise ArgumentError(
            f"input has {x.shape[1]} columns, model expects {model.n_features}"
        )
    if not np.all(np.isfinite(x)):
        row, col = np.argwhere(~np.isfinite(x))[0]
        name = model.schema.names[col]
        raise DataError(f"non-finite input at row {row}, feature {name!r}")
    pre = x[:, :, None] * model.w1[None] + model.b1[None]
    act = sigmoid(pre)
    normed = inv_std = None
    hidden = act
    if model.layer_norm:
        mu = act.mean(axis=-1, keepdims=True)
        var = act.var(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + _LN_EPS)
        normed = (act - mu) * inv_std
        hidden = normed
    h = (hidden * model.w2[None]).sum(axis=-1) + model.b2[None]
    yhat = h @ model.head_w + model.head_b[0]
    return yhat, ForwardCache(x=x, pre_act=pre, act=act, normed=normed, inv_std=inv_std, h=h)


def gradient(model: KanModel, cache: ForwardCache, dl_dy: np.ndarray) -> KanGradients:
    """Exact gradients of the scalar batch loss given dL/dyhat per row."""
    dl_dy = np.asarray(dl_dy, dtype=float)
    if dl_dy.shape != (cache.x.shape[0],):
        raise ArgumentError(
            f"dl_dy has shape {dl_dy.shape}, expected ({cache.x.shape[0]},)"
        )
    g_head_b = np.array([dl_dy.sum()])
    g_head_w = cache.h.T @ dl_dy
    dh = dl_dy[:, None] * model.head_w[None, :]            # (n, d)
    hidden = cache.normed if model.layer_norm else cache.act
    g_w2 = (dh[:, :, None] * hidden).sum(axis=0)
    g_b2 = dh.sum(axis=0)
    d_hidden = dh[:, :, None] * model.w2[None]             # (n, d, m)
    if model.layer_norm:
        nhat, inv_s = cache.normed, cache.inv_std
        mean_d = d_hidden.mean(axis=-1, keepdims=True)
        mean_dn = (d_hidden * nhat).mean(axis=-1, keepdims=True)
        d_act = (d_hidden - mean_d - nhat * mean_dn) * inv_s
    else:
        d_act = d_hidden
    d_pre = d_act * cache.act * (1.0 - cache.act)
    g_w1 = (d_pre * cache.x[:, :, None]).sum(axis=0)
    g_b1 = d_pre.sum(axis=0)
    return KanGradients(g_w1, g_b1, g_w2, g_b2, g_head_w, g_head_b)


def subnet_response(model: KanModel, p: int, z: np.ndarray) -> np.ndarray:
    """phi_p over standardized inputs z (no head weight applied)."""
    pre = np.asarray(z, dtype=float)[:, None] * model.w1[p] + model.b1[p]
    act = sigmoid(pre)
    if model.layer_norm:
        mu = act.mean(axis=-1, keepdims=True)
        var = act.var(axis=-1, keepdims=True)
        act = (act - mu) / np.sqrt(var + _LN_EPS)
    return act @ model.w2[p] + model.b2[p]


def univariate_response(model: KanModel, p: int, grid) -> np.ndarray:
    """Contribution w_p * phi_p along raw feature values.

    Returns an (len(grid), 2) array of (x, response) pairs. Values of other
    features are irrelevant by construction: the architecture has no
    interaction terms.
    """
    if not 0 <= p < model.n_features:
        raise ArgumentError(f"feature index {p} out of range")
    grid = np.asarray(grid, dtype=float)
    if model.standardizer is not None:
        z = model.standardizer.transform_feature(model.schema.names[p], grid)
    else:
        z = grid
    resp = model.head_w[p] * subnet_response(model, p, z)
    return np.column_stack([grid, resp])
