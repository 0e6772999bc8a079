"""Event-driven spiking network simulator with local self-supervised learning and N:M dynamic sparse training."""

from .config import Mode, RunConfig, load_config
from .network import Network, evaluate
from .oracle import oracle_check
from .task import SyntheticTaskSpec, generate_task
from .train import run_eval, run_train

__version__ = "0.1.0"

__all__ = [
    "Mode",
    "Network",
    "RunConfig",
    "SyntheticTaskSpec",
    "evaluate",
    "generate_task",
    "load_config",
    "oracle_check",
    "run_eval",
    "run_train",
]
