"""Configuration, experiment setups, time-stepping driver and refinement studies."""

from .config import ConfigError, RunConfig, SpeciesConfig
from .convergence import converge_cauchy, converge_mms, restrict_fine_to_coarse
from .run import RunReport, Simulation, init_state, run
from .setups import MMSProblem, cauchy_config, janus_config, mms_config

__all__ = [
    "ConfigError",
    "MMSProblem",
    "RunConfig",
    "RunReport",
    "Simulation",
    "SpeciesConfig",
    "cauchy_config",
    "converge_cauchy",
    "converge_mms",
    "init_state",
    "janus_config",
    "mms_config",
    "restrict_fine_to_coarse",
    "run",
]
