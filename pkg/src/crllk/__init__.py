"""crllk: constrained-RL lane keeping on 2D tracks.

A differential-drive lane-keeping simulator, a one-timescale Lagrangian PPO
trainer whose constraint multipliers double as adaptive reward weights, and
a benchmark CLI for comparing the adaptive scheme against fixed-weight
baselines.
"""

from .config import RunConfig, load_config
from .evaluation import evaluate_policy
from .runs import run_training
from .simulator import EnvConfig, reset, step
from .tracks import build_track
from .trainer import LagrangeState, TrainMode, modified_reward, update_lambdas

__version__ = "0.1.0"

__all__ = [
    "RunConfig",
    "load_config",
    "evaluate_policy",
    "run_training",
    "EnvConfig",
    "reset",
    "step",
    "build_track",
    "LagrangeState",
    "TrainMode",
    "modified_reward",
    "update_lambdas",
    "__version__",
]
