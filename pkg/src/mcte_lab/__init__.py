"""Numerical laboratory for the many-channel invariant zeta_i * T_i = C
on thermodynamic information geometry, with granular-plasticity
predictions and a Monte Carlo fluctuation oracle.
"""

__version__ = "0.1.0"

from .errors import (
    ComputationError,
    ConfigError,
    DegenerateIntensityError,
    DomainError,
    DomainEscapeError,
    MCTELabError,
    NonErgodicError,
    NonFiniteError,
    StiffnessError,
    SymmetryViolationError,
)
from .surfaces import (
    EntropySurface,
    QuadraticDiagonalSurface,
    TabulatedSurface,
    ToyGranularParams,
    ToyGranularSurface,
    eval_S,
    grad_S,
    hessian_S,
)
from .geometry import (
    MetricPoint,
    OneFormValue,
    StabilityFlags,
    correction_estimate,
    levelset_flow_rhs,
    metric_at,
    normal_projection,
    omega_at,
    stability_at,
    stability_det,
)
from .flow import (
    InvariantCheck,
    LevelSetPath,
    LoopSpec,
    SignFlipReport,
    StepControl,
    cross_channel_lambdas,
    holonomy,
    invariant_check,
    rectangle_loop,
    sign_flip_diagnostic,
    trace_level_set,
    zeta_along_path,
)
from .predictions import (
    DilatancyReport,
    RoweReport,
    StabilityMap,
    dilatancy_at,
    rowe_at,
    stability_map,
)
from .fluctuations import OracleReport, SamplerConfig, sample_metric
from .config import ScenarioConfig, build_config, build_surface, load_config

__all__ = [
    "__version__",
    "MCTELabError", "DomainError", "NonFiniteError",
    "DegenerateIntensityError", "SymmetryViolationError",
    "DomainEscapeError", "StiffnessError", "NonErgodicError",
    "ConfigError", "ComputationError",
    "EntropySurface", "ToyGranularParams", "ToyGranularSurface",
    "QuadraticDiagonalSurface", "TabulatedSurface",
    "eval_S", "grad_S", "hessian_S",
    "MetricPoint", "OneFormValue", "StabilityFlags",
    "metric_at", "omega_at", "levelset_flow_rhs", "stability_det",
    "stability_at", "correction_estimate", "normal_projection",
    "StepControl", "LevelSetPath", "LoopSpec", "InvariantCheck",
    "SignFlipReport", "trace_level_set", "zeta_along_path",
    "cross_channel_lambdas", "invariant_check", "holonomy",
    "rectangle_loop", "sign_flip_diagnostic",
    "DilatancyReport", "RoweReport", "StabilityMap",
    "dilatancy_at", "rowe_at", "stability_map",
    "SamplerConfig", "OracleReport", "sample_metric",
    "ScenarioConfig", "load_config", "build_config", "build_surface",
]
