"""Two-stage reactive walking pattern generator with a trunk flywheel.

Stage 1 adapts the next footstep position and timing from the measured
divergent component of motion (DCM); stage 2 regenerates the DCM and trunk
trajectories over the rest of the step by model predictive control.
"""

from .config import ConfigError, GaitConfig
from .harness import Scenario, compare_modes, load_scenario, run_envelope, run_scenario
from .simulator import Mode, PushEvent, SimLog, run_closed_loop

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "GaitConfig",
    "Mode",
    "PushEvent",
    "Scenario",
    "SimLog",
    "compare_modes",
    "load_scenario",
    "run_closed_loop",
    "run_envelope",
    "run_scenario",
]
