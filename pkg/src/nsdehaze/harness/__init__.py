"""Training loop, evaluation, inference, studies, and the CLI."""

from .config import TrainConfig, load_config, save_config, with_seed
from .evaluate import evaluate
from .infer import dehaze, run_model
from .study import misalignment_study, scale_ablation
from .train import TrainState, fit, init_state, load_state, save_state, train_step

__all__ = [
    "TrainConfig",
    "TrainState",
    "dehaze",
    "evaluate",
    "fit",
    "init_state",
    "load_config",
    "load_state",
    "misalignment_study",
    "run_model",
    "save_config",
    "save_state",
    "scale_ablation",
    "train_step",
    "with_seed",
]
