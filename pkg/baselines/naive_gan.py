"""Single MLP generator against a single MLP critic on the flattened sample."""
from typing import Optional, Tuple

import numpy as np
import torch
import torch.nn as nn

from baselines.base import SynthesisModel
from config.run_config import ModelConfig, TrainConfig
from dataset.preprocess import EncodedBatch, EncodingLayout, denormalize, lengths_from_flags
from dataset.schema import Dataset, timestamp_restore
from gan.network import (
    BlockActivation,
    Critic,
    build_mlp,
    flatten_main_input,
    mask_after_stop,
    metadata_activation_blocks,
    step_activation_blocks,
)
from gan.training import prepare_training_data, wgan_gp_loss
from utils.logger import logger


class FlatGenerator(nn.Module):
    """Noise to a whole encoded sample in one MLP pass"""

    def __init__(self, layout: EncodingLayout, config: ModelConfig):
        super().__init__()
        self.layout = layout
        self.mlp = build_mlp(config.noise_dim, config.disc_mlp, layout.main_input_dim)
        self.metadata_activation = BlockActivation(metadata_activation_blocks(layout))
        self.step_activation = BlockActivation(step_activation_blocks(layout)[:-1])

    def forward(self, z: torch.Tensor) -> Tuple[torch.Tensor, ...]:
        layout = self.layout
        out = self.mlp(z)
        batch = z.shape[0]
        cut = np.cumsum([layout.d_a, layout.d_fake, layout.t_pad * layout.d_f])
        metadata_real = self.metadata_activation(out[:, : cut[0]])
        metadata_fake = torch.sigmoid(out[:, cut[0]: cut[1]])
        measurements = self.step_activation(out[:, cut[1]: cut[2]].reshape(batch, layout.t_pad, layout.d_f))
        flags = torch.softmax(out[:, cut[2]:].reshape(batch, layout.t_pad, 2), dim=-1)
        measurements, flags = mask_after_stop(measurements, flags)
        return metadata_real, metadata_fake, measurements, flags


class NaiveGANModel(SynthesisModel):
    name = "naive_gan"

    def __init__(self, model_cfg: Optional[ModelConfig] = None, train_cfg: Optional[TrainConfig] = None):
        super().__init__(model_cfg, train_cfg)
        self.layout: Optional[EncodingLayout] = None
        self.generator: Optional[FlatGenerator] = None
        self.critic: Optional[Critic] = None
        self.losses = []

    def _fake(self, n: int, noise: torch.Generator) -> torch.Tensor:
        z = torch.randn(n, self.model_cfg.noise_dim, generator=noise, dtype=torch.float64)
        return flatten_main_input(*self.generator(z))

    def _fit(self, ds: Dataset) -> None:
        cfg = self.model_cfg
        data, self.layout = prepare_training_data(ds, cfg)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(self.train_cfg.seed)
            self.generator = FlatGenerator(self.layout, cfg).double()
            self.critic = Critic(self.layout.main_input_dim, cfg.disc_mlp).double()
        opt_g = torch.optim.Adam(self.generator.parameters(), lr=cfg.lr, betas=cfg.adam_betas)
        opt_d = torch.optim.Adam(self.critic.parameters(), lr=cfg.lr, betas=cfg.adam_betas)
        noise = torch.Generator().manual_seed(self.train_cfg.seed)
        rng = np.random.default_rng(self.train_cfg.seed)
        real_all = torch.as_tensor(data.main_input())
        batch_size = min(cfg.batch_size, len(data))

        for _ in range(self.train_cfg.resolve_max_batches(len(data), cfg.batch_size)):
            for _ in range(cfg.d_steps_per_g_step):
                real = real_all[torch.as_tensor(rng.choice(len(data), size=batch_size, replace=False))]
                with torch.no_grad():
                    fake = self._fake(batch_size, noise)
                opt_d.zero_grad()
                parts = wgan_gp_loss(self.critic, real, fake, cfg.gp_weight, generator=noise)
                if torch.isfinite(parts.disc_loss):
                    (-parts.disc_loss).backward()
                    opt_d.step()
            opt_g.zero_grad()
            loss_g = -self.critic(self._fake(batch_size, noise)).mean()
            if torch.isfinite(loss_g):
                loss_g.backward()
                opt_g.step()
            self.losses.append((float(parts.disc_loss), float(loss_g)))
        logger.info(f"Naive GAN trained for {len(self.losses)} batches")

    def _sample(self, n: int, seed: int) -> Dataset:
        noise = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            z = torch.randn(n, self.model_cfg.noise_dim, generator=noise, dtype=torch.float64)
            metadata_real, metadata_fake, measurements, flags = (t.numpy() for t in self.generator(z))
        lengths = np.minimum(lengths_from_flags(flags), self.layout.schema.max_length)
        batch = EncodedBatch(
            layout=self.layout,
            metadata_real=metadata_real,
            metadata_fake=metadata_fake,
            measurements=measurements,
            flags=flags,
            lengths=lengths,
        )
        ds = denormalize(batch, lengths=lengths)
        if self.layout.source_schema is not None:
            ds = timestamp_restore(ds, self.layout.source_schema)
        return ds


def fit_naive_gan(
    ds: Dataset, model_cfg: Optional[ModelConfig] = None, train_cfg: Optional[TrainConfig] = None
) -> NaiveGANModel:
    """Fit the naive GAN baseline"""
    return NaiveGANModel(model_cfg, train_cfg).fit(ds)
