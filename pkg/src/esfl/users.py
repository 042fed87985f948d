"""User device profiles: data volume, local resources, and link rates."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .comm import LinkRates
from .errors import ConfigError


@dataclass(frozen=True)
class UserProfile:
    """One end device participating in a training round."""

    user_id: int
    n_samples: float            # local training samples used per epoch
    compute_flops: float        # local compute c_i, FLOPs/s
    rates: LinkRates
    epochs: int = 5             # local epochs per round
    storage_bytes: float = math.inf
    memory_bytes: float = math.inf

    def __post_init__(self) -> None:
        if self.n_samples < 0:
            raise ConfigError("n_samples must be >= 0")
        if self.compute_flops <= 0:
            raise ConfigError("compute_flops must be strictly positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.storage_bytes < 0 or self.memory_bytes < 0:
            raise ConfigError("storage and memory limits must be >= 0")
