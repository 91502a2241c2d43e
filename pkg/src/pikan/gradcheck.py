"""Central finite-difference verification of every analytic gradient path.

Checks both architectures under every loss variant: plain MAE, the power
physics term with and without the cube-law prior, the fuel consistency term,
squared error, and the elastic-net penalty. The check is valid only where
the objective is differentiable, so the harness constructs test points with
margins: loss residuals are offset away from zero, ReLU pre-activations are
redrawn until none sits near its kink, and penalized weights are nudged off
zero. The subgradient conventions at the kinks themselves are covered by
direct unit tests instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import init_mlp
from .dataset import FeatureSchema, FeatureSpec
from .kan import init_model
from .train import (
    LossWeights,
    PhysicsTargets,
    elastic_gradients,
    elastic_penalty,
    loss_gradient_wrt_output,
    total_loss,
)

FD_STEP = 1e-5
REL_TOLERANCE = 1e-4
#: absolute floor folded into the relative comparison:
#: |a - f| <= max(ABS_FLOOR, REL_TOLERANCE * max(|a|, |f|))
ABS_FLOOR = 1e-6


@dataclass(frozen=True)
class GradCheckCase:
    arch: str
    variant: str
    seed: int
    max_rel_err: float


@dataclass(frozen=True)
class GradCheckReport:
    cases: list[GradCheckCase]
    tolerance: float = REL_TOLERANCE

    @property
    def max_rel_err(self) -> float:
        return max(c.max_rel_err for c in self.cases)

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


def _toy_schema(d: int) -> FeatureSchema:
    return FeatureSchema(tuple(FeatureSpec(f"x{i}", "1") for i in range(d)))


def _nudge_weights(model, margin: float = 0.05) -> None:
    """Move penalized weights away from the |.| kink at zero."""
    params = model.parameters()
    for i in model.WEIGHT_PARAMS:
        params[i] += margin * np.sign(params[i])


def _offset_targets(y_hat: np.ndarray, rng, lo: float = 0.3, hi: float = 1.0) -> np.ndarray:
    """Targets whose residuals are bounded away from the MAE kink."""
    signs = rng.choice([-1.0, 1.0], size=y_hat.shape)
    return y_hat + signs * rng.uniform(lo, hi, size=y_hat.shape)


def _mlp_batch(model, rng, n_rows: int, margin: float = 1e-3) -> np.ndarray:
    """Draw inputs until every ReLU pre-activation clears the kink margin."""
    for _ in range(200):
        x = rng.standard_normal((n_rows, len(model.schema)))
        _, cache = model.forward(x)
        if min(np.abs(z).min() for z in cache.pre[:-1]) >= margin:
            return x
    raise RuntimeError("could not find a kink-free batch for the ReLU net")


def _variants(stage_targets):
    y, phys_primary, phys_cube = stage_targets
    return {
        "data_mae": ("rpm", y, None, LossWeights(alpha=0.0), "mae"),
        "data_mse": ("rpm", y, None, LossWeights(alpha=0.0), "mse"),
        "power_gamma0": (
            "power",
            y,
            PhysicsTargets(primary=phys_primary),
            LossWeights(lam=0.7, alpha=0.0),
            "mae",
        ),
        "power_gamma05": (
            "power",
            y,
            PhysicsTargets(primary=phys_primary, cube=phys_cube),
            LossWeights(lam=0.7, gamma=0.5, alpha=0.0),
            "mae",
        ),
        "fuel": (
            "fuel",
            y,
            PhysicsTargets(primary=phys_primary),
            LossWeights(lam=1.3, alpha=0.0),
            "mae",
        ),
        "total_with_elastic": (
            "power",
            y,
            PhysicsTargets(primary=phys_primary),
            LossWeights(lam=0.7, alpha=0.01, rho=0.5),
            "mae",
        ),
    }


def _max_violation(analytic: np.ndarray, fd: np.ndarray) -> float:
    denom = np.maximum(ABS_FLOOR / REL_TOLERANCE, np.maximum(np.abs(analytic), np.abs(fd)))
    return float(np.max(np.abs(analytic - fd) / denom))


def check_model_losses(model, x: np.ndarray, seed: int, arch: str) -> list[GradCheckCase]:
    rng = np.random.default_rng(seed + 77)
    y_hat0, _ = model.forward(x)
    y = _offset_targets(y_hat0, rng)
    phys_primary = _offset_targets(y_hat0, rng)
    phys_cube = _offset_targets(y_hat0, rng)

    cases = []
    for name, (stage, yv, phys, weights, kind) in _variants((y, phys_primary, phys_cube)).items():
        if arch == "kan" and name == "data_mse":
            continue

        def loss_value() -> float:
            y_hat, _ = model.forward(x)
            return total_loss(stage, y_hat, yv, phys, model, weights, kind).total

        y_hat, cache = model.forward(x)
        dl_dy = loss_gradient_wrt_output(
            y_hat, yv, None if stage == "rpm" else phys, weights, kind
        )
        analytic = model.backward(cache, dl_dy)
        for i, g_reg in elastic_gradients(model, weights.alpha, weights.rho).items():
            analytic[i] = analytic[i] + g_reg

        fd = _finite_difference(model, loss_value)
        worst = max(_max_violation(a, f) for a, f in zip(analytic, fd))
        cases.append(GradCheckCase(arch=arch, variant=name, seed=seed, max_rel_err=worst))

    # elastic penalty alone
    def penalty_value() -> float:
        return elastic_penalty(model, 0.01, 0.5)

    analytic = [np.zeros_like(p) for p in model.parameters()]
    for i, g in elastic_gradients(model, 0.01, 0.5).items():
        analytic[i] = g
    fd = _finite_difference(model, penalty_value)
    worst = max(_max_violation(a, f) for a, f in zip(analytic, fd))
    cases.append(GradCheckCase(arch=arch, variant="elastic_only", seed=seed, max_rel_err=worst))
    return cases


def _finite_difference(model, loss_value, step: float = FD_STEP) -> list[np.ndarray]:
    grads = []
    for p in model.parameters():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = loss_value()
            flat[j] = orig - step
            down = loss_value()
            flat[j] = orig
            gflat[j] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads


def run_gradient_checks(seeds=(0,), n_rows: int = 8) -> GradCheckReport:
    """Run the full oracle over both architectures for the given seeds."""
    cases: list[GradCheckCase] = []
    for seed in seeds:
        rng = np.random.default_rng(seed)

        kan = init_model(_toy_schema(3), hidden_width=4, seed=seed)
        _nudge_weights(kan)
        x = rng.standard_normal((n_rows, 3))
        cases.extend(check_model_losses(kan, x, seed, "kan"))

        kan_ln = init_model(_toy_schema(3), hidden_width=4, seed=seed + 1, layer_norm=True)
        _nudge_weights(kan_ln)
        cases.extend(check_model_losses(kan_ln, rng.standard_normal((n_rows, 3)), seed, "kan_ln"))

        mlp = init_mlp(_toy_schema(3), hidden=(6, 5), seed=seed)
        _nudge_weights(mlp)
        x_mlp = _mlp_batch(mlp, rng, n_rows)
        cases.extend(check_model_losses(mlp, x_mlp, seed, "mlp"))
    return GradCheckReport(cases=cases)
