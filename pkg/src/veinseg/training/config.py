from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

from ..errors import ConfigError
from ..unet import UNetConfig

STRATEGIES = ("direct_tongue", "direct_vein", "retrain_vein")

# (row label, strategy, bra, roi_crop) in table order
STRATEGY_ROWS = (
    ("Direct T. Seg.", "direct_tongue", False, False),
    ("Direct V. Seg.", "direct_vein", False, False),
    ("Retrain V. Seg.", "retrain_vein", False, False),
    ("Retrain V. Seg. + BRA (+/-)", "retrain_vein", True, False),
    ("Retrain V. Seg. + R. RoI Crop", "retrain_vein", False, True),
    ("Retrain V. Seg. + BRA (+/-) + R. RoI Crop", "retrain_vein", True, True),
)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 100
    batch_size: int = 2
    l2_scale: float = 1e-4
    seed: int = 0
    strategy: str = "direct_tongue"
    bra: bool = False
    roi_crop: bool = False
    early_stop_patience: int = 15
    train_resolution: Optional[Tuple[int, int]] = None
    base_filters: int = 16
    dropout_rate: float = 0.05
    activation: str = "relu"
    optimizer: str = "adam"
    epoch_mode: str = "expand"
    max_steps: Optional[int] = None
    eval_pooled: bool = False

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (batch norm needs two samples)")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience must be >= 1")
        if self.bra and self.target == "tongue":
            raise ConfigError("BRA applies to vein rounds only")
        if self.train_resolution is not None:
            self.train_resolution = tuple(int(v) for v in self.train_resolution)
            if len(self.train_resolution) != 2 or any(v <= 0 or v % 16 for v in self.train_resolution):
                raise ConfigError(f"train_resolution {self.train_resolution} must be two multiples of 16")

    @property
    def target(self) -> str:
        return "tongue" if self.strategy == "direct_tongue" else "vein"

    @property
    def needs_tongue_checkpoint(self) -> bool:
        return self.strategy == "retrain_vein" or self.bra

    def unet_config(self) -> UNetConfig:
        return UNetConfig(base_filters=self.base_filters, dropout_rate=self.dropout_rate,
                          l2_scale=self.l2_scale, activation=self.activation)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["train_resolution"] is not None:
            d["train_resolution"] = list(d["train_resolution"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)
