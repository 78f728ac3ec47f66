"""Fine P1 and Online GMsFEM solvers for artificial ground freezing with seepage."""

from .config import SimulationConfig, build_setup, parse_config
from .errors import (
    CacheError,
    ComparisonError,
    ConfigurationError,
    FrostGMsError,
    RankDeficiencyError,
    SolverError,
    UndefinedNormError,
)
from .fine import FreezingProblem, run_fine
from .online import EnrichmentSchedule, run_multiscale

__version__ = "0.1.0"

__all__ = [
    "CacheError",
    "ComparisonError",
    "ConfigurationError",
    "EnrichmentSchedule",
    "FreezingProblem",
    "FrostGMsError",
    "RankDeficiencyError",
    "SimulationConfig",
    "SolverError",
    "UndefinedNormError",
    "build_setup",
    "parse_config",
    "run_fine",
    "run_multiscale",
]
