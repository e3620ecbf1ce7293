"""
Alternating Wasserstein-GP training of the generator against both critics.

Each optimizer cycle runs ``d_steps_per_g_step`` updates of the main critic
(full sample) and the auxiliary critic (metadata part), then one generator
update on ``L1 + alpha * L2``. With a DP config, critic gradients are computed
per example, clipped and noised before the Adam step.
"""
import time
from collections import namedtuple
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import attrs
import numpy as np
import pandas as pd
import torch
import torch.nn as nn
from tqdm import tqdm

from config.run_config import DPConfig, ModelConfig, TrainConfig
from dataset.preprocess import EncodedBatch, EncodingLayout, encode
from dataset.schema import Dataset, TimestampMode, timestamp_transform
from gan.checkpoint import restore_state, save_checkpoint, snapshot_state
from gan.network import GeneratorBundle, flatten_main_input
from utils.exceptions import ContractError, TrainingDivergedError
from utils.logger import logger

TRAIN_LOG_COLUMNS = ["step", "loss_d1", "loss_d2", "gp1", "gp2", "loss_g", "wallclock_s"]

LossParts = namedtuple("LossParts", ["disc_loss", "gen_term", "gp", "wasserstein"])


def wgan_gp_loss(
    disc: nn.Module,
    real_batch: torch.Tensor,
    fake_batch: torch.Tensor,
    gp_weight: float,
    generator: Optional[torch.Generator] = None,
) -> LossParts:
    """
    Wasserstein critic objective with gradient penalty

    disc_loss = E[D(real)] - E[D(fake)] - gp_weight * gp, the value the critic
    maximizes; gp = E[(||grad D(x_hat)||_2 - 1)^2] on per-sample interpolates
    x_hat = t*real + (1-t)*fake, t ~ U[0, 1]. gen_term = -E[D(fake)].
    """
    if gp_weight < 0:
        raise ContractError(f"gradient penalty weight must be >= 0, got {gp_weight}")
    if real_batch.shape != fake_batch.shape:
        raise ContractError(f"real {tuple(real_batch.shape)} and fake {tuple(fake_batch.shape)} layouts differ")
    d_real = disc(real_batch)
    d_fake = disc(fake_batch)
    wasserstein = d_real.mean() - d_fake.mean()

    t = torch.rand(real_batch.shape[0], 1, generator=generator, dtype=real_batch.dtype)
    x_hat = (t * real_batch.detach() + (1 - t) * fake_batch.detach()).requires_grad_(True)
    grads = torch.autograd.grad(disc(x_hat).sum(), x_hat, create_graph=True)[0]
    gp = ((grads.norm(2, dim=1) - 1) ** 2).mean()

    return LossParts(wasserstein - gp_weight * gp, -d_fake.mean(), gp, wasserstein)


def dp_gradient_transform(
    per_example_grads: torch.Tensor,
    clip_norm: float,
    noise_multiplier: float,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """
    Clip each example's gradient to L2 norm <= clip_norm, sum, add
    N(0, (noise_multiplier * clip_norm)^2) per coordinate and divide by the batch size

    Args:
        per_example_grads: B x P matrix, one flattened gradient per row
    """
    grads = per_example_grads
    norms = grads.norm(2, dim=1, keepdim=True)
    scale = torch.where(norms > clip_norm, clip_norm / norms.clamp_min(1e-300), torch.ones_like(norms))
    total = (grads * scale).sum(dim=0)
    if noise_multiplier > 0:
        total = total + noise_multiplier * clip_norm * torch.randn(
            total.shape, generator=generator, dtype=total.dtype
        )
    return total / grads.shape[0]


@attrs.frozen
class TrainRecord:
    step: int
    loss_d1: float
    loss_d2: float
    gp1: float
    gp2: float
    loss_g: float
    wallclock_s: float


@attrs.define
class TrainLog:
    """One record per optimizer cycle plus in-memory generator parameter-norm snapshots"""

    records: List[TrainRecord] = attrs.field(factory=list)
    param_norms: List[float] = attrs.field(factory=list)

    def append(self, record: TrainRecord, param_norm: float) -> None:
        self.records.append(record)
        self.param_norms.append(param_norm)

    def __len__(self) -> int:
        return len(self.records)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([attrs.astuple(r) for r in self.records], columns=TRAIN_LOG_COLUMNS)

    def losses_only(self) -> np.ndarray:
        """Every column except wall-clock, for determinism comparisons"""
        return self.to_frame().drop(columns=["wallclock_s"]).to_numpy()

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        logger.log_artifact("train log", str(path))
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "TrainLog":
        frame = pd.read_csv(path)
        records = [
            TrainRecord(int(row.step), row.loss_d1, row.loss_d2, row.gp1, row.gp2, row.loss_g, row.wallclock_s)
            for row in frame.itertuples(index=False)
        ]
        return cls(records=records, param_norms=[])


def _flat_grad(loss: torch.Tensor, params: List[nn.Parameter]) -> torch.Tensor:
    grads = torch.autograd.grad(loss, params, retain_graph=True, allow_unused=True)
    return torch.cat([
        (g if g is not None else torch.zeros_like(p)).reshape(-1) for g, p in zip(grads, params)
    ])


def _assign_flat_grad(params: List[nn.Parameter], flat: torch.Tensor) -> None:
    offset = 0
    for p in params:
        count = p.numel()
        p.grad = flat[offset:offset + count].view_as(p).clone()
        offset += count


class Trainer:
    """Owns optimizers and minibatch sampling for one GeneratorBundle"""

    def __init__(self, bundle: GeneratorBundle, data: EncodedBatch, train_cfg: TrainConfig):
        if len(data) == 0:
            raise ContractError("training data is empty")
        self.bundle = bundle
        self.data = data
        self.train_cfg = train_cfg
        cfg = bundle.config
        self.opt_g = torch.optim.Adam(list(bundle.generator_parameters()), lr=cfg.lr, betas=cfg.adam_betas)
        self.opt_d1 = torch.optim.Adam(bundle.disc_main.parameters(), lr=cfg.lr, betas=cfg.adam_betas)
        self.opt_d2 = torch.optim.Adam(bundle.disc_aux.parameters(), lr=cfg.lr, betas=cfg.adam_betas) \
            if bundle.has_aux else None
        self.batch_rng = np.random.default_rng(train_cfg.seed)
        self.started = time.perf_counter()
        self.nonfinite_streak = 0

    @property
    def batch_size(self) -> int:
        return min(self.bundle.config.batch_size, len(self.data))

    def next_real_batch(self) -> Tuple[torch.Tensor, torch.Tensor]:
        idx = self.batch_rng.choice(len(self.data), size=self.batch_size, replace=False)
        return self.bundle.real_inputs(self.data.subset(np.sort(idx)))

    def fake_inputs(self, batch_size: int) -> Tuple[torch.Tensor, torch.Tensor]:
        metadata_real, metadata_fake, measurements, flags = self.bundle.generate_encoded(batch_size)
        main = flatten_main_input(metadata_real, metadata_fake, measurements, flags)
        aux = torch.cat([metadata_real, metadata_fake], dim=1)
        return main, aux

    def _critic_update(
        self,
        disc: nn.Module,
        optimizer: torch.optim.Optimizer,
        real: torch.Tensor,
        fake: torch.Tensor,
        dp: Optional[DPConfig],
    ) -> LossParts:
        gp_weight = self.bundle.config.gp_weight
        optimizer.zero_grad()
        parts = wgan_gp_loss(disc, real, fake, gp_weight, generator=self.bundle.rng)
        if not torch.isfinite(parts.disc_loss):
            return parts
        params = list(disc.parameters())
        if dp is None:
            (-parts.disc_loss).backward()
        else:
            per_example = []
            for i in range(real.shape[0]):
                example = wgan_gp_loss(disc, real[i:i + 1], fake[i:i + 1], gp_weight, generator=self.bundle.rng)
                per_example.append(_flat_grad(-example.disc_loss, params))
            flat = dp_gradient_transform(
                torch.stack(per_example), dp.clip_norm, dp.noise_multiplier, generator=self.bundle.rng
            )
            _assign_flat_grad(params, flat)
        optimizer.step()
        return parts

    def critic_step(self, real_batch: Optional[Tuple[torch.Tensor, torch.Tensor]], alpha: float) -> Dict[str, float]:
        real_main, real_aux = real_batch if real_batch is not None else self.next_real_batch()
        with torch.no_grad():
            fake_main, fake_aux = self.fake_inputs(real_main.shape[0])
        dp = self.train_cfg.dp
        main = self._critic_update(self.bundle.disc_main, self.opt_d1, real_main, fake_main, dp)
        values = {"loss_d1": float(main.disc_loss), "gp1": float(main.gp), "loss_d2": 0.0, "gp2": 0.0}
        if self.bundle.has_aux and alpha > 0:
            aux = self._critic_update(self.bundle.disc_aux, self.opt_d2, real_aux, fake_aux, dp)
            values.update(loss_d2=float(aux.disc_loss), gp2=float(aux.gp))
        return values

    def generator_loss(self, batch_size: int, alpha: float) -> torch.Tensor:
        """L1 + alpha * L2 on a fresh fake batch; the auxiliary term is skipped at alpha = 0"""
        fake_main, fake_aux = self.fake_inputs(batch_size)
        loss = -self.bundle.discriminate(fake_main).mean()
        if self.bundle.has_aux and alpha > 0:
            loss = loss - alpha * self.bundle.discriminate_aux(fake_aux).mean()
        return loss

    def generator_step(self, alpha: float) -> float:
        self.opt_g.zero_grad()
        loss = self.generator_loss(self.batch_size, alpha)
        if torch.isfinite(loss):
            loss.backward()
            self.opt_g.step()
        # critic grads from the generator pass are discarded by zero_grad on their next update
        return float(loss)

    def combined_step(
        self, real_batch: Optional[Tuple[torch.Tensor, torch.Tensor]] = None, alpha: Optional[float] = None
    ) -> TrainRecord:
        """
        One optimizer cycle: critic updates on both critics, then one generator update

        Raises:
            TrainingDivergedError: If losses stayed non-finite for max_nonfinite_steps cycles
        """
        alpha = self.bundle.config.aux_weight if alpha is None else alpha
        self.bundle.train(True)
        values: Dict[str, float] = {}
        for _ in range(self.bundle.config.d_steps_per_g_step):
            values = self.critic_step(real_batch, alpha)
        values["loss_g"] = self.generator_step(alpha)
        self.bundle.step += 1

        if all(np.isfinite(v) for v in values.values()):
            self.nonfinite_streak = 0
        else:
            self.nonfinite_streak += 1
            logger.warning(f"⚠️ Non-finite loss at step {self.bundle.step}: {values}")
            if self.nonfinite_streak >= self.train_cfg.max_nonfinite_steps:
                raise TrainingDivergedError(
                    f"losses non-finite for {self.nonfinite_streak} consecutive steps", step=self.bundle.step
                )

        record = TrainRecord(
            step=self.bundle.step,
            loss_d1=values["loss_d1"],
            loss_d2=values["loss_d2"],
            gp1=values["gp1"],
            gp2=values["gp2"],
            loss_g=values["loss_g"],
            wallclock_s=time.perf_counter() - self.started,
        )
        logger.log_train_step(record.step, {k: v for k, v in values.items()})
        return record

    def generator_param_norm(self) -> float:
        with torch.no_grad():
            return float(torch.sqrt(sum((p ** 2).sum() for p in self.bundle.generator_parameters())))


def prepare_training_data(ds: Dataset, model_cfg: ModelConfig) -> Tuple[EncodedBatch, EncodingLayout]:
    """Timestamp handling plus encoding with the layout the bundle will carry"""
    source_schema = None
    if ds.schema.timestamp_mode is TimestampMode.DERIVED:
        source_schema = ds.schema
        ds = timestamp_transform(ds)
    layout = EncodingLayout.from_dataset(
        ds,
        batch_param=model_cfg.batch_param,
        auto_normalization=model_cfg.auto_normalization,
        source_schema=source_schema,
    )
    batch, _ = encode(ds, layout)
    return batch, layout


def train(
    ds: Dataset,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    checkpoint_dir: Optional[Union[str, Path]] = None,
) -> Tuple[GeneratorBundle, TrainLog]:
    """
    Train a GeneratorBundle on a dataset

    Args:
        ds: Non-empty training dataset
        model_cfg: Network sizes and optimizer settings
        train_cfg: Run length, checkpoint cadence, seed and optional DP settings
        checkpoint_dir: Where step checkpoints go; none are written when omitted

    Returns:
        The trained bundle and its TrainLog

    Raises:
        ContractError: If the dataset is empty
        TrainingDivergedError: After rolling back to the last good state
    """
    if len(ds) == 0:
        raise ContractError("cannot train on an empty dataset")
    batch, layout = prepare_training_data(ds, model_cfg)
    bundle = GeneratorBundle(layout, model_cfg, seed=train_cfg.seed)
    trainer = Trainer(bundle, batch, train_cfg)
    log = TrainLog()
    max_batches = train_cfg.resolve_max_batches(len(ds), model_cfg.batch_size)

    logger.info(
        f"🚀 Training {bundle.parameter_count()} parameters for {max_batches} batches "
        f"(T_pad={layout.t_pad}, S={layout.batch_param}, dp={'on' if train_cfg.dp else 'off'})"
    )
    last_good = snapshot_state(bundle)
    for _ in tqdm(range(max_batches), disable=not train_cfg.show_progress, desc="train"):
        try:
            record = trainer.combined_step()
        except TrainingDivergedError:
            restore_state(bundle, last_good)
            logger.error(f"❌ Training diverged; rolled back to step {bundle.step}")
            raise
        log.append(record, trainer.generator_param_norm())
        if record.step % train_cfg.checkpoint_every == 0 and trainer.nonfinite_streak == 0:
            last_good = snapshot_state(bundle)
            if checkpoint_dir is not None:
                save_checkpoint(bundle, Path(checkpoint_dir) / f"step_{record.step:07d}.pt")

    if checkpoint_dir is not None:
        save_checkpoint(bundle, Path(checkpoint_dir) / "final.pt")
    logger.info(f"✅ Training finished after {bundle.step} batches")
    return bundle, log
