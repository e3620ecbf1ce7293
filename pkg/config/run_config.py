"""
Run configuration models.

Every invariant on model, training and evaluation settings is encoded as a
field constraint so that a bad config file reports all of its violations at
once.
"""
import json
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple

from pydantic import (
    BaseModel,
    ConfigDict,
    DirectoryPath,
    Field,
    PositiveInt,
)
from pydantic import ValidationError as PydanticValidationError

from config.settings import NetSynthSettings
from utils.exceptions import FormatError, ValidationError

ModelName = Literal["doppelganger", "ar", "rnn", "hmm", "naive_gan"]
MetricName = Literal[
    "autocorr", "w1", "conditional_w1", "length", "metadata", "midpoint", "pearson", "memorization"
]
ALL_METRICS: Tuple[str, ...] = (
    "autocorr", "w1", "conditional_w1", "length", "metadata", "midpoint", "pearson", "memorization"
)
DEFAULT_MAX_BATCHES = 1000


class _FrozenModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class ModelConfig(_FrozenModel):
    """Network sizes and optimizer settings of the generator family"""

    noise_dim: PositiveInt = Field(5, description="Dimension of every noise vector")
    attr_mlp: Tuple[PositiveInt, ...] = Field((100, 100), description="Metadata generator hidden widths")
    minmax_mlp: Tuple[PositiveInt, ...] = Field((100, 100), description="Min/max generator hidden widths")
    rnn_units: PositiveInt = Field(100, description="LSTM units of the measurement generator")
    disc_mlp: Tuple[PositiveInt, ...] = Field((200, 200, 200, 200), description="Main critic hidden widths")
    aux_disc_mlp: Tuple[PositiveInt, ...] = Field((200, 200, 200, 200), description="Auxiliary critic hidden widths")
    batch_param: Optional[PositiveInt] = Field(None, description="S; None takes the schema value")
    gp_weight: float = Field(10.0, ge=0.0, description="Gradient penalty weight lambda")
    aux_weight: float = Field(1.0, ge=0.0, description="Auxiliary critic weight alpha")
    lr: float = Field(0.001, gt=0.0)
    adam_betas: Tuple[float, float] = (0.5, 0.9)
    batch_size: PositiveInt = 100
    d_steps_per_g_step: PositiveInt = 1
    auto_normalization: bool = True
    dtype: Literal["float32", "float64"] = "float32"


class DPConfig(_FrozenModel):
    """Per-example clipping and Gaussian noise for critic updates"""

    clip_norm: float = Field(..., gt=0.0, description="C")
    noise_multiplier: float = Field(..., ge=0.0, description="sigma")


class TrainConfig(_FrozenModel):
    """Length and bookkeeping of a training run"""

    max_batches: Optional[PositiveInt] = None
    epochs: Optional[PositiveInt] = None
    checkpoint_every: PositiveInt = Field(
        default_factory=lambda: NetSynthSettings.get_training_defaults()["checkpoint_every"]
    )
    seed: int = 0
    dp: Optional[DPConfig] = None
    max_nonfinite_steps: PositiveInt = 100
    show_progress: bool = False

    def resolve_max_batches(self, n_samples: int, batch_size: int) -> int:
        """Number of optimizer cycles for a dataset of n_samples; 1000 when neither length is set"""
        if self.max_batches is not None:
            return self.max_batches
        if self.epochs is None:
            return DEFAULT_MAX_BATCHES
        per_epoch = max(1, -(-n_samples // batch_size))
        return self.epochs * per_epoch


class EvalSelection(_FrozenModel):
    """Which fidelity metrics and use-case evaluations to run"""

    metrics: Tuple[MetricName, ...] = ALL_METRICS
    max_lag: PositiveInt = 28
    bins: PositiveInt = 50
    measurement: Optional[str] = None
    metadata_field: Optional[str] = None
    memorization_k: PositiveInt = 3
    downstream: bool = False
    predictors: Tuple[str, ...] = ("logistic_regression", "mlp", "nearest_centroid")


class RunConfig(_FrozenModel):
    """Everything a CLI command needs; flags override file values"""

    dataset: Optional[DirectoryPath] = None
    model: ModelName = "doppelganger"
    network: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalSelection = Field(default_factory=EvalSelection)
    output_dir: Path = Path("runs")
    seed: Optional[int] = None
    hmm_states: PositiveInt = 10
    ar_order: PositiveInt = 3

    @classmethod
    def from_mapping(cls, data: Dict[str, Any]) -> "RunConfig":
        try:
            return cls.model_validate(data)
        except PydanticValidationError as e:
            violations = [
                f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}" for err in e.errors()
            ]
            raise ValidationError(violations, context="run config") from e

    @classmethod
    def from_file(cls, path: Path) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as handle:
                data = json.load(handle)
        except FileNotFoundError as e:
            raise FormatError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise FormatError(f"config file is not valid JSON: {path}: {e}") from e
        return cls.from_mapping(data)

    def merged(self, overrides: Dict[str, Any]) -> "RunConfig":
        """Return a copy with (possibly nested) override values applied"""
        data = self.model_dump(by_alias=True)
        _deep_update(data, overrides)
        return self.from_mapping(data)

    def snapshot(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", by_alias=True)


def _deep_update(target: Dict[str, Any], overrides: Dict[str, Any]) -> None:
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(target.get(key), dict):
            _deep_update(target[key], value)
        else:
            target[key] = value
