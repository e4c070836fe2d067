"""Training/model hyperparameter configuration."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

from .errors import ConfigError

UNBOUNDED = None  # window value meaning full-sequence attention


@dataclass
class TrainConfig:
    learning_rate: float = 0.0001
    batch_size: int = 32
    dropout: float = 0.1
    l2_weight: float = 0.0001
    clip_norm: float = 5.0
    ema_decay: float = 0.9999
    window: Optional[int] = 5     # None = unbounded attention
    hidden: int = 200
    max_epochs: int = 100
    patience: int = 10
    seed: int = 1
    use_elmo: bool = True
    use_attention: bool = True

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.learning_rate}")
        if self.clip_norm <= 0:
            raise ConfigError(f"clip norm must be positive, got {self.clip_norm}")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ConfigError(f"ema decay must be in [0, 1], got {self.ema_decay}")
        if self.window is not None and self.window < 1:
            raise ConfigError(f"window must be >= 1 or unbounded, got {self.window}")
        if self.hidden < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("hidden, batch_size and max_epochs must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["window"] is None:
            d["window"] = "inf"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if d.get("window") in ("inf", "unbounded"):
            d["window"] = None
        return cls(**d)
