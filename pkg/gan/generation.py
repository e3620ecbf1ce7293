"""
Sampling from a trained GeneratorBundle, conditional sampling and metadata retargeting.
"""
import copy
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import attrs
import numpy as np
import torch

from config.run_config import TrainConfig
from dataset.preprocess import (
    EncodedBatch,
    EncodingLayout,
    denormalize,
    encode_metadata,
    lengths_from_flags,
    metadata_outside_bounds,
)
from dataset.schema import Dataset, conformance_violations, Sample, timestamp_restore
from gan.network import Critic, GeneratorBundle, mask_after_stop
from gan.training import wgan_gp_loss
from utils.exceptions import ContractError, ValidationError
from utils.helpers import parameter_digest
from utils.logger import logger

DEFAULT_CHUNK = 1000


def _chunk_generator(seed: int, chunk_index: int) -> Tuple[torch.Generator, np.random.Generator]:
    """Independent torch and numpy streams for one chunk of samples"""
    state = np.random.SeedSequence([seed, chunk_index]).generate_state(2, dtype=np.uint64)
    return torch.Generator().manual_seed(int(state[0] >> np.uint64(1))), np.random.default_rng(int(state[1]))


def _decode_chunk(
    bundle: GeneratorBundle,
    metadata_real: torch.Tensor,
    metadata_fake: torch.Tensor,
    measurements: torch.Tensor,
    flags: torch.Tensor,
    length_override: Optional[int],
    sample_categorical: bool,
    rng: np.random.Generator,
) -> List[Sample]:
    layout = bundle.layout
    steps = measurements.shape[1]
    if length_override is not None:
        lengths = np.full(metadata_real.shape[0], length_override, dtype=np.int64)
    else:
        lengths = np.minimum(lengths_from_flags(flags.double().numpy()), layout.schema.max_length)

    schema = layout.schema
    if length_override is not None and length_override > schema.max_length:
        schema = attrs.evolve(schema, max_length=length_override)
    chunk_layout = attrs.evolve(layout, schema=schema, t_pad=steps)
    batch = EncodedBatch(
        layout=chunk_layout,
        metadata_real=metadata_real.double().numpy(),
        metadata_fake=metadata_fake.double().numpy(),
        measurements=measurements.double().numpy(),
        flags=flags.double().numpy(),
        lengths=lengths,
    )
    return list(denormalize(batch, lengths=lengths, sample_categorical=sample_categorical, rng=rng).samples)


def _finish(bundle: GeneratorBundle, samples: List[Sample], length_override: Optional[int]) -> Dataset:
    layout = bundle.layout
    schema = layout.schema
    if length_override is not None and length_override > schema.max_length:
        schema = attrs.evolve(schema, max_length=length_override)
    ds = Dataset(schema, samples)
    if layout.source_schema is not None:
        source = layout.source_schema
        if length_override is not None and length_override > source.max_length:
            source = attrs.evolve(source, max_length=length_override)
        ds = timestamp_restore(ds, source)
    return ds


def _run_stages(
    bundle: GeneratorBundle,
    batch_size: int,
    passes: int,
    generator: torch.Generator,
    fixed_metadata: Optional[torch.Tensor] = None,
    fixed_mask: Optional[torch.Tensor] = None,
    honor_stop: bool = True,
):
    noise_dim = bundle.config.noise_dim
    metadata_real = bundle.gen_metadata(bundle.noise(batch_size, noise_dim, generator=generator))
    if fixed_metadata is not None:
        metadata_real = torch.where(fixed_mask, fixed_metadata, metadata_real)
    metadata_fake = bundle.gen_minmax(metadata_real, bundle.noise(batch_size, noise_dim, generator=generator))
    z_seq = bundle.noise(batch_size, passes, noise_dim, generator=generator)
    measurements, flags = bundle.meas_gen(torch.cat([metadata_real, metadata_fake], dim=1), z_seq)
    if honor_stop:
        measurements, flags = mask_after_stop(measurements, flags)
    return metadata_real, metadata_fake, measurements, flags


def _passes_for(layout: EncodingLayout, length_override: Optional[int]) -> int:
    if length_override is None:
        return layout.n_passes
    if length_override < 1:
        raise ContractError(f"length_override must be >= 1, got {length_override}")
    return int(math.ceil(length_override / layout.batch_param))


def _generate(
    bundle: GeneratorBundle,
    n: int,
    length_override: Optional[int],
    seed: Optional[int],
    sample_categorical: bool,
    chunk_size: int,
    fixed: Optional[Tuple[torch.Tensor, torch.Tensor]] = None,
) -> Dataset:
    if n < 1:
        raise ContractError(f"n must be >= 1, got {n}")
    seed = bundle.seed if seed is None else seed
    passes = _passes_for(bundle.layout, length_override)
    bundle.train(False)
    samples: List[Sample] = []
    with torch.no_grad():
        for chunk_index, start in enumerate(range(0, n, chunk_size)):
            size = min(chunk_size, n - start)
            torch_gen, np_rng = _chunk_generator(seed, chunk_index)
            fixed_metadata = fixed_mask = None
            if fixed is not None:
                fixed_metadata = fixed[0].expand(size, -1)
                fixed_mask = fixed[1].expand(size, -1)
            stages = _run_stages(
                bundle, size, passes, torch_gen, fixed_metadata, fixed_mask, honor_stop=length_override is None
            )
            samples.extend(_decode_chunk(bundle, *stages, length_override, sample_categorical, np_rng))
    return _finish(bundle, samples, length_override)


def sample(
    bundle: GeneratorBundle,
    n: int,
    length_override: Optional[int] = None,
    seed: Optional[int] = None,
    sample_categorical: bool = False,
    chunk_size: int = DEFAULT_CHUNK,
) -> Dataset:
    """
    Generate a synthetic dataset

    Metadata, then fake min/max metadata, then the measurement series. A series
    stops at the first step whose flag has p1 < p2; trailing steps of that pass
    are dropped. With ``length_override`` every series runs exactly that many
    steps and stop flags are ignored. Chunk k of ``chunk_size`` samples draws its noise from
    SeedSequence([seed, k]), so results do not depend on how work is split.

    Raises:
        ContractError: If n < 1
    """
    ds = _generate(bundle, n, length_override, seed, sample_categorical, chunk_size)
    logger.info(f"✅ Generated {len(ds)} samples")
    return ds


def conditional_sample(
    bundle: GeneratorBundle,
    fixed_metadata: Sequence[Any],
    n: int,
    seed: Optional[int] = None,
    length_override: Optional[int] = None,
    sample_categorical: bool = False,
    chunk_size: int = DEFAULT_CHUNK,
) -> Dataset:
    """
    Generate n samples whose metadata is fixed instead of drawn from the metadata generator

    When the bundle was trained with derived timestamps, ``fixed_metadata`` may
    omit the trailing start_time field; it is then generated.

    Raises:
        ValidationError: If a value is not valid for its field
    """
    layout = bundle.layout
    fields = layout.schema.metadata_fields
    if len(fixed_metadata) not in (len(fields), len(fields) - (1 if layout.source_schema else 0)):
        raise ContractError(f"{len(fixed_metadata)} metadata values for {len(fields)} fields")
    candidate = Sample(
        metadata=tuple(fixed_metadata) + tuple(
            0.0 if not spec.is_categorical else spec.categories[0] for spec in fields[len(fixed_metadata):]
        ),
        measurements=np.zeros((1, layout.schema.k)),
    )
    violations = conformance_violations(layout.schema, candidate, label="fixed metadata")
    if violations:
        raise ValidationError(violations, context="conditional_sample")
    clipped = metadata_outside_bounds(layout, fixed_metadata)
    if clipped:
        logger.warning(f"⚠️ Fixed metadata outside the training range is clipped: {'; '.join(clipped)}")

    encoded = bundle.tensor(encode_metadata(layout, [candidate.metadata]))
    mask = torch.zeros_like(encoded, dtype=torch.bool)
    for block, _ in layout.metadata_blocks()[: len(fixed_metadata)]:
        mask[:, block] = True
    ds = _generate(bundle, n, length_override, seed, sample_categorical, chunk_size, fixed=(encoded, mask))
    logger.info(f"✅ Generated {len(ds)} samples conditioned on {tuple(fixed_metadata)}")
    return ds


MetadataSource = Union[Dataset, Sequence[Sequence[Any]], Any]


def _target_metadata(layout: EncodingLayout, target: MetadataSource, n_hint: int) -> List[Tuple[Any, ...]]:
    names = layout.schema.metadata_names
    if isinstance(target, Dataset):
        if target.schema.metadata_names != names or \
                [s.to_dict() for s in target.schema.metadata_fields] != [s.to_dict() for s in layout.schema.metadata_fields]:
            raise ContractError(f"target metadata fields {target.schema.metadata_names} do not match {names}")
        return [s.metadata for s in target.samples]
    if hasattr(target, "sample_metadata"):
        rows = target.sample_metadata(n_hint)
    else:
        rows = [tuple(row) for row in target]
    for row in rows:
        if len(row) != len(names):
            raise ContractError(f"target metadata row {row} does not match fields {names}")
    return rows


def retarget_metadata(
    bundle: GeneratorBundle,
    target_metadata: MetadataSource,
    train_cfg: TrainConfig,
    n_target: int = 10000,
) -> GeneratorBundle:
    """
    Retrain only the metadata generator towards a new metadata distribution

    The auxiliary critic is reinitialized and trained on target metadata paired
    with fake metadata from the frozen min/max generator. The min/max generator,
    measurement generator and main critic stay bit-identical.

    Args:
        target_metadata: A Dataset, an object with sample_metadata(n), or raw tuples
        train_cfg: max_batches/seed for the retargeting run
        n_target: Number of rows drawn when target_metadata is a sampler

    Raises:
        ContractError: If the target metadata does not match the bundle's fields
    """
    layout = bundle.layout
    rows = _target_metadata(layout, target_metadata, n_target)
    if not rows:
        raise ContractError("target metadata is empty")
    encoded_target = encode_metadata(layout, rows)

    retargeted = copy.deepcopy(bundle)
    cfg = retargeted.config
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(train_cfg.seed)
        retargeted.disc_aux = Critic(layout.aux_input_dim, cfg.aux_disc_mlp).to(retargeted.dtype)
    retargeted.rng = torch.Generator().manual_seed(train_cfg.seed)
    frozen_digest = parameter_digest(retargeted.measurement_path_parameters())
    for p in retargeted.measurement_path_parameters():
        p.requires_grad_(False)

    opt_attr = torch.optim.Adam(retargeted.attr_gen.parameters(), lr=cfg.lr, betas=cfg.adam_betas)
    opt_aux = torch.optim.Adam(retargeted.disc_aux.parameters(), lr=cfg.lr, betas=cfg.adam_betas)
    rng = np.random.default_rng(train_cfg.seed)
    batch_size = min(cfg.batch_size, len(rows))
    max_batches = train_cfg.resolve_max_batches(len(rows), cfg.batch_size)
    retargeted.train(True)

    for _ in range(max_batches):
        idx = rng.choice(len(rows), size=batch_size, replace=False)
        real_meta = retargeted.tensor(encoded_target[idx])
        with torch.no_grad():
            real_fake = retargeted.gen_minmax(real_meta, retargeted.noise(batch_size, cfg.noise_dim))
            fake_meta = retargeted.gen_metadata(retargeted.noise(batch_size, cfg.noise_dim))
            fake_fake = retargeted.gen_minmax(fake_meta, retargeted.noise(batch_size, cfg.noise_dim))
        opt_aux.zero_grad()
        parts = wgan_gp_loss(
            retargeted.disc_aux,
            torch.cat([real_meta, real_fake], dim=1),
            torch.cat([fake_meta, fake_fake], dim=1),
            cfg.gp_weight,
            generator=retargeted.rng,
        )
        (-parts.disc_loss).backward()
        opt_aux.step()

        opt_attr.zero_grad()
        gen_meta = retargeted.gen_metadata(retargeted.noise(batch_size, cfg.noise_dim))
        gen_fake = retargeted.gen_minmax(gen_meta, retargeted.noise(batch_size, cfg.noise_dim))
        loss = -retargeted.discriminate_aux(torch.cat([gen_meta, gen_fake], dim=1)).mean()
        loss.backward()
        opt_attr.step()
        retargeted.step += 1

    for p in retargeted.measurement_path_parameters():
        p.requires_grad_(True)
    if parameter_digest(retargeted.measurement_path_parameters()) != frozen_digest:
        raise ContractError("retargeting modified measurement-path parameters")
    logger.info(f"✅ Retargeted metadata generator for {max_batches} batches on {len(rows)} target rows")
    return retargeted


def rejection_sample(
    bundle: GeneratorBundle,
    n: int,
    field: str,
    target_probs: Dict[str, float],
    seed: Optional[int] = None,
    max_rounds: int = 100,
) -> Tuple[Dataset, float]:
    """
    Reshape a categorical metadata marginal by rejection instead of retraining

    Returns:
        A dataset of n samples whose ``field`` follows target_probs, and the
        acceptance rate (accepted / generated)
    """
    if n < 1:
        raise ContractError(f"n must be >= 1, got {n}")
    spec = bundle.layout.schema.metadata_field(field)
    if not spec.is_categorical:
        raise ContractError(f"rejection sampling needs a categorical field, '{field}' is numeric")
    unknown = set(target_probs) - set(spec.categories)
    if unknown:
        raise ContractError(f"target categories {sorted(unknown)} are not in '{field}'")
    total = float(sum(target_probs.values()))
    quotas = {c: int(round(n * target_probs.get(c, 0.0) / total)) for c in spec.categories}
    # rounding can leave the quotas one off n
    largest = max(quotas, key=quotas.get)
    quotas[largest] += n - sum(quotas.values())

    position = bundle.layout.schema.metadata_names.index(field)
    seed = bundle.seed if seed is None else seed
    accepted: List[Sample] = []
    generated = 0
    for round_index in range(max_rounds):
        if all(q == 0 for q in quotas.values()):
            break
        batch = sample(bundle, n, seed=seed + round_index)
        generated += len(batch)
        for s in batch.samples:
            category = s.metadata[position]
            if quotas.get(category, 0) > 0:
                quotas[category] -= 1
                accepted.append(s)
    if any(q > 0 for q in quotas.values()):
        raise ContractError(f"rejection sampling left unfilled quotas {quotas} after {max_rounds} rounds")
    rate = len(accepted) / generated
    logger.log_metric("rejection_acceptance_rate", round(rate, 4))
    return Dataset(batch.schema, accepted), rate
