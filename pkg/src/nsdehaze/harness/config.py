"""Training configuration and its JSON form.

The JSON file mirrors the dataclass field names exactly, with the loss
weights and network settings nested under ``loss_weights`` and ``network``.
"""

import json

from dataclasses import asdict, dataclass, field, replace

from ..errors import ArgumentError
from ..losses import LossWeights
from ..networks import NetworkConfig


@dataclass
class TrainConfig:
    lr: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    epochs: int = 5
    batch: int = 4
    loss_weights: LossWeights = field(default_factory=LossWeights)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    seed: int = 0
    checkpoint_every: int = 0  # steps between periodic checkpoints; 0 = off
    out_dir: str = "runs/default"
    resize_to: int | None = None
    crop: int | None = None
    msr_scales: tuple = (0.5, 1.0, 2.0)

    def __post_init__(self):
        if self.lr <= 0:
            raise ArgumentError(f"lr must be positive, got {self.lr}")
        if self.epochs < 1:
            raise ArgumentError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch < 1:
            raise ArgumentError(f"batch must be >= 1, got {self.batch}")
        self.msr_scales = tuple(float(s) for s in self.msr_scales)


def with_seed(cfg, seed):
    """Copy a config, reseeding both the run and the network init."""
    return replace(cfg, seed=seed, network=replace(cfg.network, seed=seed))


def save_config(cfg, path):
    with open(path, "w") as f:
        json.dump(asdict(cfg), f, indent=1, sort_keys=True)


def load_config(path):
    with open(path) as f:
        raw = json.load(f)
    raw["loss_weights"] = LossWeights(**raw.get("loss_weights", {}))
    raw["network"] = NetworkConfig(**raw.get("network", {}))
    return TrainConfig(**raw)


def lr_factor(epoch, total_epochs):
    """Full rate for the first half of training, then linear decay."""
    hold = total_epochs - total_epochs // 2
    if epoch < hold:
        return 1.0
    return 1.0 - (epoch - hold + 1) / (total_epochs // 2 + 1)
