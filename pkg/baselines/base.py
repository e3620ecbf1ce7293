import pickle
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Optional, Union

import numpy as np

from config.run_config import ModelConfig, TrainConfig
from dataset.preprocess import EncodedBatch, EncodingLayout, denormalize, encode_metadata, make_flags
from dataset.schema import Dataset
from utils.exceptions import CheckpointError, ContractError
from utils.logger import logger
from utils.retry_mechanism import retry_on_exception

MODEL_FORMAT_VERSION = 1


class SynthesisModel(ABC):
    """Common fit/sample interface of every generator, so one harness evaluates them all"""

    name = "base"

    def __init__(self, model_cfg: Optional[ModelConfig] = None, train_cfg: Optional[TrainConfig] = None):
        self.model_cfg = model_cfg or ModelConfig()
        self.train_cfg = train_cfg or TrainConfig()
        self.schema = None

    @abstractmethod
    def _fit(self, ds: Dataset) -> None:
        """Learn from a non-empty dataset - must be implemented by subclasses"""
        pass

    @abstractmethod
    def _sample(self, n: int, seed: int) -> Dataset:
        """Generate n samples - must be implemented by subclasses"""
        pass

    @property
    def is_fitted(self) -> bool:
        return self.schema is not None

    def fit(self, ds: Dataset) -> "SynthesisModel":
        if len(ds) == 0:
            raise ContractError(f"{self.name}: cannot fit an empty dataset")
        logger.info(f"🚀 Fitting {self.name} on {len(ds)} samples")
        self._fit(ds)
        self.schema = ds.schema
        logger.info(f"✅ {self.name} fitted")
        return self

    def sample(self, n: int, seed: Optional[int] = None) -> Dataset:
        if not self.is_fitted:
            raise ContractError(f"{self.name}: sample() called before fit()")
        if n < 1:
            raise ContractError(f"n must be >= 1, got {n}")
        return self._sample(n, self.train_cfg.seed if seed is None else seed)

    def score(self, ds: Dataset) -> np.ndarray:
        """Per-sample realness scores; only models with a critic provide them"""
        raise ContractError(f"{self.name} has no critic to score samples with")

    @retry_on_exception()
    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as handle:
            pickle.dump({"format_version": MODEL_FORMAT_VERSION, "model": self.name, "object": self}, handle)
        logger.log_artifact(f"{self.name} model", str(path))
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SynthesisModel":
        with open(path, "rb") as handle:
            try:
                payload = pickle.load(handle)
            except (pickle.UnpicklingError, EOFError) as e:
                raise CheckpointError(f"cannot read model file {path}: {e}") from e
        if not isinstance(payload, dict) or payload.get("format_version") != MODEL_FORMAT_VERSION:
            raise CheckpointError(f"{path} is not a model file of format version {MODEL_FORMAT_VERSION}")
        return payload["object"]


def global_layout(ds: Dataset) -> EncodingLayout:
    """Layout with dataset-wide normalization and no fake metadata, shared by the AR and RNN baselines"""
    return EncodingLayout.from_dataset(ds, auto_normalization=False)


def decode_sequences(layout: EncodingLayout, metadata_rows, sequences) -> Dataset:
    """Turn encoded per-sample sequences (L_i x d_f) plus raw metadata into a Dataset"""
    n = len(sequences)
    lengths = np.array([len(seq) for seq in sequences], dtype=np.int64)
    measurements = np.zeros((n, layout.t_pad, layout.d_f), dtype=np.float64)
    for i, seq in enumerate(sequences):
        measurements[i, : len(seq)] = seq
    batch = EncodedBatch(
        layout=layout,
        metadata_real=encode_metadata(layout, metadata_rows),
        metadata_fake=np.zeros((n, 0), dtype=np.float64),
        measurements=measurements,
        flags=make_flags(lengths, layout.t_pad),
        lengths=lengths,
    )
    return denormalize(batch, lengths=lengths)
