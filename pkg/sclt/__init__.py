from .batches import SampleBatch
from .characters import DirichletCharacter, character, character_group, principal_character
from .covariance import CovarianceSpec, ShiftConfig, build_K, build_K_tilde, check_pd, covariance_spec
from .dirichlet_series import ApproxParams, derive_params
from .distances import BoundParams, DistanceReport
from .errors import (
    CapacityError,
    ConfigError,
    DegenerateParametersError,
    DomainError,
    EmptyRangeError,
    PrecisionError,
    PreconditionError,
)
from .experiments import (
    ChainExperiment,
    DedekindExperiment,
    Experiment,
    dedekind_vectors,
    rate_sweep,
    sample_chain,
    stage_distance_table,
)
from .gaussian import GaussianSpec, sample_mvn
from .moments import MomentReport, exact_diagonal_moment, quad_moment
from .output import emit, load, load_config

__all__ = [
    "ApproxParams",
    "BoundParams",
    "CapacityError",
    "ChainExperiment",
    "ConfigError",
    "CovarianceSpec",
    "DedekindExperiment",
    "DegenerateParametersError",
    "DirichletCharacter",
    "DistanceReport",
    "DomainError",
    "EmptyRangeError",
    "Experiment",
    "GaussianSpec",
    "MomentReport",
    "PrecisionError",
    "PreconditionError",
    "SampleBatch",
    "ShiftConfig",
    "build_K",
    "build_K_tilde",
    "character",
    "character_group",
    "check_pd",
    "covariance_spec",
    "dedekind_vectors",
    "derive_params",
    "emit",
    "exact_diagonal_moment",
    "load",
    "load_config",
    "principal_character",
    "quad_moment",
    "rate_sweep",
    "sample_chain",
    "sample_mvn",
    "stage_distance_table",
]
