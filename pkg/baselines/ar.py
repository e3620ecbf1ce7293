"""Autoregressive MLP baseline: R_t regressed on (A, R_{t-1}, ..., R_{t-p})."""
from typing import Optional, Tuple

import numpy as np
import torch
import torch.nn as nn

from baselines.base import SynthesisModel, decode_sequences, global_layout
from baselines.metadata_sampler import EmpiricalMetadataSampler
from config.run_config import ModelConfig, TrainConfig
from dataset.preprocess import encode, encode_metadata, encode_records
from dataset.schema import Dataset
from gan.network import BlockActivation, build_mlp, step_activation_blocks
from utils.exceptions import ContractError
from utils.logger import logger


def ar_windows(metadata: np.ndarray, measurements: np.ndarray, lengths: np.ndarray, p: int):
    """
    Training pairs of an encoded dataset

    Returns:
        inputs (N x (d_A + p*d_f)), targets (N x d_f) and the number of skipped samples
    """
    inputs, targets, skipped = [], [], 0
    for i, length in enumerate(lengths):
        if length <= p:
            skipped += 1
            continue
        for t in range(p, int(length)):
            history = measurements[i, t - p:t][::-1].reshape(-1)
            inputs.append(np.concatenate([metadata[i], history]))
            targets.append(measurements[i, t])
    d_in = metadata.shape[1] + p * measurements.shape[2]
    if not inputs:
        return np.zeros((0, d_in)), np.zeros((0, measurements.shape[2])), skipped
    return np.asarray(inputs), np.asarray(targets), skipped


class ARModel(SynthesisModel):
    name = "ar"

    def __init__(self, model_cfg: Optional[ModelConfig] = None, train_cfg: Optional[TrainConfig] = None, p: int = 3):
        super().__init__(model_cfg, train_cfg)
        if p < 1:
            raise ContractError(f"AR order p must be >= 1, got {p}")
        self.p = p
        self.layout = None
        self.net = None
        self.sampler = None
        self.losses = []

    def _fit(self, ds: Dataset) -> None:
        cfg = self.model_cfg
        self.layout = global_layout(ds)
        self.sampler = EmpiricalMetadataSampler.fit(ds, window=self.p)
        batch, _ = encode(ds, self.layout)
        inputs, targets, skipped = ar_windows(batch.metadata_real, batch.measurements, batch.lengths, self.p)
        if skipped:
            logger.warning(f"⚠️ Skipped {skipped} samples shorter than p+1={self.p + 1}")
        if len(inputs) == 0:
            raise ContractError(f"no sample is longer than p={self.p}")

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(self.train_cfg.seed)
            self.net = nn.Sequential(
                build_mlp(inputs.shape[1], cfg.disc_mlp, self.layout.d_f),
                BlockActivation(step_activation_blocks(self.layout)[:-1]),
            ).double()
        optimizer = torch.optim.Adam(self.net.parameters(), lr=cfg.lr, betas=cfg.adam_betas)
        x, y = torch.as_tensor(inputs), torch.as_tensor(targets)
        rng = np.random.default_rng(self.train_cfg.seed)
        batch_size = min(cfg.batch_size, len(x))
        for _ in range(self.train_cfg.resolve_max_batches(len(x), cfg.batch_size)):
            idx = torch.as_tensor(rng.choice(len(x), size=batch_size, replace=False))
            optimizer.zero_grad()
            loss = torch.mean((self.net(x[idx]) - y[idx]) ** 2)
            loss.backward()
            optimizer.step()
            self.losses.append(float(loss))
        logger.info(f"AR(p={self.p}) trained on {len(x)} windows, final loss {self.losses[-1]:.6f}")

    def one_step_predictions(self, ds: Dataset) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Raw-unit one-step predictions on every window of ds

        Returns:
            (predicted, previous, actual), each N x K_num over numeric dimensions
        """
        batch, _ = encode(ds, self.layout)
        inputs, targets, _ = ar_windows(batch.metadata_real, batch.measurements, batch.lengths, self.p)
        with torch.no_grad():
            predicted = self.net(torch.as_tensor(inputs)).numpy()
        previous = inputs[:, self.layout.d_a: self.layout.d_a + self.layout.d_f]
        return tuple(self._to_raw(a) for a in (predicted, previous, targets))

    def _to_raw(self, encoded: np.ndarray) -> np.ndarray:
        columns = []
        for j, (block, spec) in enumerate(self.layout.measurement_blocks()):
            if spec.is_categorical:
                continue
            low, high = self.layout.measurement_bounds[j]
            lo, hi = spec.normalization.bounds
            columns.append(low + (encoded[:, block.start] - lo) / (hi - lo) * (high - low))
        return np.column_stack(columns)

    def _sample(self, n: int, seed: int) -> Dataset:
        rng = np.random.default_rng(seed)
        metadata_rows = self.sampler.sample_metadata(n, rng)
        lengths = self.sampler.sample_lengths(n, rng)
        encoded_meta = torch.as_tensor(encode_metadata(self.layout, metadata_rows))
        steps = int(lengths.max())
        series = np.zeros((n, max(steps, self.p), self.layout.d_f))
        series[:, : self.p] = encode_records(self.layout, self.sampler.sample_first_records(n, rng))
        with torch.no_grad():
            for t in range(self.p, steps):
                history = torch.as_tensor(series[:, t - self.p:t][:, ::-1].reshape(n, -1).copy())
                series[:, t] = self.net(torch.cat([encoded_meta, history], dim=1)).numpy()
        return decode_sequences(self.layout, metadata_rows, [series[i, : int(lengths[i])] for i in range(n)])


def fit_ar(
    ds: Dataset, p: int = 3, model_cfg: Optional[ModelConfig] = None, train_cfg: Optional[TrainConfig] = None
) -> ARModel:
    """Fit the AR-MLP baseline (4 x 200 hidden units by default)"""
    return ARModel(model_cfg, train_cfg, p=p).fit(ds)
