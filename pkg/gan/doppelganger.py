from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch

from baselines.base import SynthesisModel
from config.run_config import ModelConfig, TrainConfig
from dataset.preprocess import encode
from dataset.schema import Dataset, TimestampMode, timestamp_transform
from gan.checkpoint import load_checkpoint, save_checkpoint
from gan.generation import sample
from gan.network import GeneratorBundle
from gan.training import TrainLog, train
from utils.exceptions import ContractError


def critic_scores(bundle: GeneratorBundle, ds: Dataset) -> np.ndarray:
    """Main-critic score of every sample of ds, encoded with the bundle's layout"""
    layout = bundle.layout
    if layout.source_schema is not None and ds.schema.timestamp_mode is TimestampMode.DERIVED:
        ds = timestamp_transform(ds)
    batch, _ = encode(ds, layout)
    bundle.train(False)
    with torch.no_grad():
        scores = bundle.discriminate(bundle.tensor(batch.main_input()))
    return scores.reshape(-1).double().numpy()


class DoppelGANgerModel(SynthesisModel):
    """The three-stage generator behind the common model interface"""

    name = "doppelganger"

    def __init__(
        self,
        model_cfg: Optional[ModelConfig] = None,
        train_cfg: Optional[TrainConfig] = None,
        checkpoint_dir: Optional[Union[str, Path]] = None,
    ):
        super().__init__(model_cfg, train_cfg)
        self.checkpoint_dir = checkpoint_dir
        self.bundle: Optional[GeneratorBundle] = None
        self.train_log: Optional[TrainLog] = None

    @classmethod
    def from_bundle(cls, bundle: GeneratorBundle) -> "DoppelGANgerModel":
        model = cls(bundle.config, TrainConfig(seed=bundle.seed))
        model.bundle = bundle
        model.schema = bundle.layout.source_schema or bundle.layout.schema
        return model

    def _fit(self, ds: Dataset) -> None:
        self.bundle, self.train_log = train(ds, self.model_cfg, self.train_cfg, self.checkpoint_dir)

    def _sample(self, n: int, seed: int) -> Dataset:
        return sample(self.bundle, n, seed=seed)

    def score(self, ds: Dataset) -> np.ndarray:
        if self.bundle is None:
            raise ContractError("score() called before fit()")
        return critic_scores(self.bundle, ds)

    def save(self, path: Union[str, Path]) -> Path:
        return save_checkpoint(self.bundle, path)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "DoppelGANgerModel":
        return cls.from_bundle(load_checkpoint(path))
