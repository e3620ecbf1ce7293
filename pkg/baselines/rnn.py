"""Teacher-forced LSTM baseline with metadata fed at every step."""
import math
from typing import List, Optional

import numpy as np
import torch
import torch.nn as nn

from baselines.base import SynthesisModel, decode_sequences, global_layout
from baselines.metadata_sampler import EmpiricalMetadataSampler
from config.run_config import ModelConfig, TrainConfig
from dataset.preprocess import encode, encode_metadata, encode_records
from dataset.schema import Dataset
from gan.network import BlockActivation, step_activation_blocks
from utils.logger import logger


class NextStepLSTM(nn.Module):
    def __init__(self, d_a: int, d_f: int, units: int, activation: BlockActivation):
        super().__init__()
        self.lstm = nn.LSTM(d_a + d_f, units, num_layers=1, batch_first=True)
        self.head = nn.Linear(units, d_f)
        self.activation = activation

    def forward(self, metadata: torch.Tensor, previous: torch.Tensor, state=None):
        inputs = torch.cat([metadata.unsqueeze(1).expand(-1, previous.shape[1], -1), previous], dim=2)
        hidden, state = self.lstm(inputs, state)
        return self.activation(self.head(hidden)), state


class RNNModel(SynthesisModel):
    name = "rnn"

    def __init__(self, model_cfg: Optional[ModelConfig] = None, train_cfg: Optional[TrainConfig] = None):
        super().__init__(model_cfg, train_cfg)
        self.layout = None
        self.net: Optional[NextStepLSTM] = None
        self.sampler = None
        self.epoch_losses: List[float] = []

    def _teacher_forced_mse(self, meta: torch.Tensor, meas: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        predicted, _ = self.net(meta, meas[:, :-1])
        error = ((predicted - meas[:, 1:]) ** 2).sum(dim=2) * mask[:, 1:]
        return error.sum() / mask[:, 1:].sum().clamp_min(1.0) / meas.shape[2]

    def _fit(self, ds: Dataset) -> None:
        cfg = self.model_cfg
        self.layout = global_layout(ds)
        self.sampler = EmpiricalMetadataSampler.fit(ds)
        batch, _ = encode(ds, self.layout)

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(self.train_cfg.seed)
            activation = BlockActivation(step_activation_blocks(self.layout)[:-1])
            self.net = NextStepLSTM(self.layout.d_a, self.layout.d_f, cfg.rnn_units, activation).double()
        optimizer = torch.optim.Adam(self.net.parameters(), lr=cfg.lr, betas=cfg.adam_betas)

        meta = torch.as_tensor(batch.metadata_real)
        meas = torch.as_tensor(batch.measurements)
        mask = torch.as_tensor(np.arange(self.layout.t_pad)[None, :] < batch.lengths[:, None], dtype=torch.float64)
        n = len(batch)
        batch_size = min(cfg.batch_size, n)
        per_epoch = math.ceil(n / batch_size)
        epochs = self.train_cfg.epochs or math.ceil(self.train_cfg.resolve_max_batches(n, batch_size) / per_epoch)
        rng = np.random.default_rng(self.train_cfg.seed)

        for epoch in range(epochs):
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                idx = torch.as_tensor(order[start:start + batch_size])
                optimizer.zero_grad()
                loss = self._teacher_forced_mse(meta[idx], meas[idx], mask[idx])
                loss.backward()
                optimizer.step()
            with torch.no_grad():
                self.epoch_losses.append(float(self._teacher_forced_mse(meta, meas, mask)))
            logger.debug(f"rnn epoch {epoch + 1}/{epochs}: teacher-forced mse {self.epoch_losses[-1]:.6f}")
        logger.info(f"RNN trained for {epochs} epochs, final mse {self.epoch_losses[-1]:.6f}")

    def generate_sequences(self, metadata_rows, lengths: np.ndarray, rng: np.random.Generator) -> List[np.ndarray]:
        """Free-running generation of exactly lengths[i] steps per sample"""
        n = len(metadata_rows)
        steps = int(np.max(lengths))
        meta = torch.as_tensor(encode_metadata(self.layout, metadata_rows))
        current = torch.as_tensor(encode_records(self.layout, self.sampler.sample_first_records(n, rng)))
        outputs = [current]
        state = None
        with torch.no_grad():
            for _ in range(steps - 1):
                current, state = self.net(meta, current, state)
                outputs.append(current)
        series = torch.cat(outputs, dim=1).numpy()
        return [series[i, : int(lengths[i])] for i in range(n)]

    def _sample(self, n: int, seed: int) -> Dataset:
        rng = np.random.default_rng(seed)
        metadata_rows = self.sampler.sample_metadata(n, rng)
        lengths = self.sampler.sample_lengths(n, rng)
        return decode_sequences(self.layout, metadata_rows, self.generate_sequences(metadata_rows, lengths, rng))


def fit_rnn_tf(
    ds: Dataset, model_cfg: Optional[ModelConfig] = None, train_cfg: Optional[TrainConfig] = None
) -> RNNModel:
    """Fit the teacher-forced RNN baseline (one LSTM layer, 100 units by default)"""
    return RNNModel(model_cfg, train_cfg).fit(ds)
