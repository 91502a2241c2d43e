"""Physics-informed additive univariate-network models for vessel
shaft RPM, shaft power, and fuel consumption prediction."""

__version__ = "0.1.0"

from .dataset import (
    FeatureSchema,
    FoldAssignment,
    Standardizer,
    VesselDataset,
    VoyageRecord,
    assign_folds,
    base_schema,
    chronological_split,
    engineer_features,
    engineered_schema,
    fit_standardizer,
    apply_standardizer,
    load_csv,
    stage_schema,
    write_csv,
)
from .errors import PikanError
from .kan import KanModel, forward, gradient, init_model, univariate_response
from .physics import (
    PhysicsConfig,
    calibrate_k,
    calibrate_resistance,
    calm_resistance,
    cube_law_power,
    fuel_rate_from_power,
    physical_power,
    power_from_torque,
    wave_resistance,
    wind_resistance,
)
from .pipeline import (
    ChainedModels,
    OofTable,
    PipelineConfig,
    chained_predict,
    chained_train,
    oof_stage,
    select_best_lambda,
    tune_lambda_fleet,
)
from .synth import SynthConfig, generate, generate_with_report
from .train import (
    LossWeights,
    PhysicsTargets,
    TrainConfig,
    TrainLog,
    adam_step,
    data_loss,
    elastic_penalty,
    fit,
    physics_loss_fuel,
    physics_loss_power,
    total_loss,
    update_lambda,
)

__all__ = [name for name in dir() if not name.startswith("_")]
