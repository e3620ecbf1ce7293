"""Sinusoid benchmark corpus and its variants."""
from typing import Optional, Sequence

import numpy as np

from dataset.schema import DataSchema, Dataset, FieldSpec, Sample, TimestampMode, suggest_batch_param
from utils.logger import logger

CLASS_FIELD = "class"
VALUE_FIELD = "value"


def make_sinusoid_corpus(
    n_samples: int = 1000,
    length: int = 56,
    period: float = 7.0,
    amplitude: float = 1.0,
    offsets: Sequence[float] = (0.0, 100.0),
    noise_std: float = 0.05,
    class_split: float = 0.5,
    lengths: Optional[Sequence[int]] = None,
    with_timestamps: bool = False,
    batch_param: Optional[int] = None,
    seed: int = 0,
) -> Dataset:
    """
    Build the two-class sinusoid corpus

    Class A oscillates around offsets[0], class B around offsets[1]. Each sample
    gets a random phase and Gaussian noise. ``class_split`` is the exact share of
    class A. When ``lengths`` is given every sample draws its length uniformly
    from it; otherwise all samples have ``length`` records.

    Args:
        with_timestamps: Attach jittered timestamps and mark the schema
            ``derived`` so timestamp_transform applies
        batch_param: S; picked with suggest_batch_param when omitted
    """
    rng = np.random.default_rng(seed)
    n_a = int(round(n_samples * class_split))
    labels = np.array(["A"] * n_a + ["B"] * (n_samples - n_a))
    labels = labels[rng.permutation(n_samples)] if n_samples else labels

    if lengths:
        sample_lengths = rng.choice(np.asarray(lengths, dtype=np.int64), size=n_samples)
        max_length = int(max(lengths))
    else:
        sample_lengths = np.full(n_samples, length, dtype=np.int64)
        max_length = int(length)

    schema = DataSchema(
        metadata_fields=[FieldSpec.categorical(CLASS_FIELD, ["A", "B"])],
        measurement_fields=[FieldSpec.numeric(VALUE_FIELD, "zero_one")],
        max_length=max_length,
        batch_param=batch_param or suggest_batch_param(max_length),
        timestamp_mode=TimestampMode.DERIVED if with_timestamps else TimestampMode.NONE,
    )

    samples = []
    for label, t_len in zip(labels, sample_lengths):
        offset = offsets[0] if label == "A" else offsets[1]
        phase = rng.uniform(0.0, 2.0 * np.pi)
        steps = np.arange(int(t_len))
        values = offset + amplitude * np.sin(2.0 * np.pi * steps / period + phase)
        values = values + rng.normal(0.0, noise_std, size=values.shape)
        timestamps = None
        if with_timestamps:
            gaps = 1.0 + rng.exponential(0.1, size=int(t_len) - 1)
            timestamps = rng.uniform(0.0, 100.0) + np.concatenate([[0.0], np.cumsum(gaps)])
        samples.append(Sample(metadata=(str(label),), measurements=values.reshape(-1, 1), timestamps=timestamps))

    logger.info(
        f"Built sinusoid corpus: n={n_samples}, max_length={max_length}, "
        f"class A share={class_split}, S={schema.batch_param}"
    )
    return Dataset(schema, samples)
