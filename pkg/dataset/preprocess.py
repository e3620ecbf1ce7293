"""
Encoding of datasets into fixed-shape arrays and back.

Layout of one encoded sample:

* ``metadata_real`` - one-hot blocks for categorical metadata, one value per
  numeric metadata field (normalized with the dataset-wide min/max).
* ``metadata_fake`` - (center, half_range) per numeric measurement dimension,
  both scaled into [0, 1] with the dataset-wide bounds of that dimension.
  Empty when auto-normalization is switched off.
* ``measurements`` - T_pad x d_f, numeric dimensions normalized per sample,
  categorical dimensions one-hot, zeros after the last real step.
* ``flags`` - T_pad x 2, [1, 0] while the series continues, [0, 1] at the last
  real step and [0, 0] afterwards.

The critic input flattens these in that order, measurements time-major.
"""
from typing import Any, Dict, List, Optional, Sequence, Tuple

import attrs
import numpy as np

from dataset.schema import DataSchema, Dataset, FieldSpec, Normalization, Sample
from utils.exceptions import ContractError


@attrs.frozen
class NormalizationRecord:
    """Per-sample (center, half_range) of one numeric measurement dimension"""

    center: float = attrs.field(converter=float)
    half_range: float = attrs.field(converter=float)

    @half_range.validator
    def _non_negative(self, attribute, value):
        if value < 0:
            raise ContractError(f"half_range must be >= 0, got {value}")

    @property
    def minimum(self) -> float:
        return self.center - self.half_range

    @property
    def maximum(self) -> float:
        return self.center + self.half_range


def _block_width(spec: FieldSpec) -> int:
    return len(spec.categories) if spec.is_categorical else 1


def _bounds_of(values: np.ndarray) -> Tuple[float, float]:
    return float(np.min(values)), float(np.max(values))


@attrs.frozen
class EncodingLayout:
    """Everything needed to encode and decode samples of one schema consistently"""

    schema: DataSchema
    t_pad: int
    metadata_bounds: Tuple[Optional[Tuple[float, float]], ...] = attrs.field(converter=tuple)
    measurement_bounds: Tuple[Optional[Tuple[float, float]], ...] = attrs.field(converter=tuple)
    auto_normalization: bool = True
    source_schema: Optional[DataSchema] = None

    def __attrs_post_init__(self):
        if self.t_pad % self.schema.batch_param != 0:
            raise ContractError(f"T_pad={self.t_pad} is not divisible by S={self.schema.batch_param}")

    @classmethod
    def from_dataset(
        cls,
        ds: Dataset,
        batch_param: Optional[int] = None,
        auto_normalization: bool = True,
        source_schema: Optional[DataSchema] = None,
    ) -> "EncodingLayout":
        if len(ds) == 0:
            raise ContractError("cannot derive an encoding layout from an empty dataset")
        schema = ds.schema if batch_param is None else ds.schema.with_batch_param(batch_param)
        metadata_bounds = []
        for position, spec in enumerate(schema.metadata_fields):
            if spec.is_categorical:
                metadata_bounds.append(None)
            else:
                metadata_bounds.append(_bounds_of(np.array([s.metadata[position] for s in ds], dtype=np.float64)))
        measurement_bounds = []
        for j, spec in enumerate(schema.measurement_fields):
            if spec.is_categorical:
                measurement_bounds.append(None)
            else:
                measurement_bounds.append(_bounds_of(np.concatenate([s.measurements[:, j] for s in ds])))
        return cls(
            schema=schema,
            t_pad=schema.padded_length(int(ds.lengths.max())),
            metadata_bounds=metadata_bounds,
            measurement_bounds=measurement_bounds,
            auto_normalization=auto_normalization,
            source_schema=source_schema,
        )

    @property
    def batch_param(self) -> int:
        return self.schema.batch_param

    @property
    def metadata_widths(self) -> List[int]:
        return [_block_width(spec) for spec in self.schema.metadata_fields]

    @property
    def measurement_widths(self) -> List[int]:
        return [_block_width(spec) for spec in self.schema.measurement_fields]

    @property
    def d_a(self) -> int:
        return sum(self.metadata_widths)

    @property
    def k_num(self) -> int:
        return len(self.schema.numeric_measurement_indices)

    @property
    def d_fake(self) -> int:
        return 2 * self.k_num if self.auto_normalization else 0

    @property
    def d_f(self) -> int:
        return sum(self.measurement_widths)

    @property
    def n_passes(self) -> int:
        return self.t_pad // self.batch_param

    @property
    def aux_input_dim(self) -> int:
        return self.d_a + self.d_fake

    @property
    def main_input_dim(self) -> int:
        return self.d_a + self.d_fake + self.t_pad * (self.d_f + 2)

    def metadata_blocks(self) -> List[Tuple[slice, FieldSpec]]:
        return _blocks(self.schema.metadata_fields, self.metadata_widths)

    def measurement_blocks(self) -> List[Tuple[slice, FieldSpec]]:
        return _blocks(self.schema.measurement_fields, self.measurement_widths)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": self.schema.to_dict(),
            "t_pad": self.t_pad,
            "metadata_bounds": [list(b) if b is not None else None for b in self.metadata_bounds],
            "measurement_bounds": [list(b) if b is not None else None for b in self.measurement_bounds],
            "auto_normalization": self.auto_normalization,
            "source_schema": self.source_schema.to_dict() if self.source_schema is not None else None,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EncodingLayout":
        return cls(
            schema=DataSchema.from_dict(data["schema"]),
            t_pad=int(data["t_pad"]),
            metadata_bounds=[tuple(b) if b is not None else None for b in data["metadata_bounds"]],
            measurement_bounds=[tuple(b) if b is not None else None for b in data["measurement_bounds"]],
            auto_normalization=bool(data["auto_normalization"]),
            source_schema=DataSchema.from_dict(data["source_schema"]) if data.get("source_schema") else None,
        )


def _blocks(fields: Sequence[FieldSpec], widths: Sequence[int]) -> List[Tuple[slice, FieldSpec]]:
    blocks, offset = [], 0
    for spec, width in zip(fields, widths):
        blocks.append((slice(offset, offset + width), spec))
        offset += width
    return blocks


def _to_range(values: np.ndarray, low: float, high: float, normalization: Normalization) -> np.ndarray:
    """Affine map of [low, high] onto the normalization range; a flat range maps to its midpoint"""
    lo, hi = normalization.bounds
    if high <= low:
        return np.full_like(values, normalization.midpoint, dtype=np.float64)
    return np.clip(lo + (values - low) / (high - low) * (hi - lo), lo, hi)


def _from_range(values: np.ndarray, low: float, high: float, normalization: Normalization) -> np.ndarray:
    lo, hi = normalization.bounds
    return low + (values - lo) / (hi - lo) * (high - low)


@attrs.frozen(eq=False)
class EncodedBatch:
    """Normalized, one-hot, flag-augmented and padded arrays for n samples"""

    layout: EncodingLayout
    metadata_real: np.ndarray
    metadata_fake: np.ndarray
    measurements: np.ndarray
    flags: np.ndarray
    lengths: np.ndarray

    def __len__(self) -> int:
        return int(self.metadata_real.shape[0])

    def subset(self, indices: Sequence[int]) -> "EncodedBatch":
        idx = np.asarray(indices, dtype=np.int64)
        return EncodedBatch(
            layout=self.layout,
            metadata_real=self.metadata_real[idx],
            metadata_fake=self.metadata_fake[idx],
            measurements=self.measurements[idx],
            flags=self.flags[idx],
            lengths=self.lengths[idx],
        )

    def aux_input(self) -> np.ndarray:
        return np.concatenate([self.metadata_real, self.metadata_fake], axis=1)

    def main_input(self) -> np.ndarray:
        """Critic input: metadata_real, metadata_fake, time-major measurements, flags"""
        n = len(self)
        return np.concatenate(
            [self.metadata_real, self.metadata_fake, self.measurements.reshape(n, -1), self.flags.reshape(n, -1)],
            axis=1,
        )


def make_flags(lengths: Sequence[int], t_pad: int) -> np.ndarray:
    """
    Generation flags for a batch of lengths

    Returns:
        n x t_pad x 2 array: [1, 0] before the last step, [0, 1] at it, [0, 0] after
    """
    lengths = np.asarray(lengths, dtype=np.int64).reshape(-1)
    if np.any(lengths < 1):
        raise ContractError("every length must be >= 1")
    if np.any(lengths > t_pad):
        raise ContractError(f"lengths exceed T_pad={t_pad}")
    steps = np.arange(t_pad)[None, :]
    flags = np.zeros((lengths.shape[0], t_pad, 2), dtype=np.float64)
    flags[:, :, 0] = steps < (lengths[:, None] - 1)
    flags[:, :, 1] = steps == (lengths[:, None] - 1)
    return flags


def lengths_from_flags(flags: np.ndarray) -> np.ndarray:
    """Length = first step whose flag has p1 < p2 (inclusive); T_pad when it never stops"""
    stop = flags[:, :, 0] < flags[:, :, 1]
    t_pad = flags.shape[1]
    return np.where(stop.any(axis=1), stop.argmax(axis=1) + 1, t_pad).astype(np.int64)


def encode_metadata(layout: EncodingLayout, metadata: Sequence[Sequence[Any]]) -> np.ndarray:
    """Encode raw metadata tuples into the n x d_A layout"""
    encoded = np.zeros((len(metadata), layout.d_a), dtype=np.float64)
    for position, (block, spec) in enumerate(layout.metadata_blocks()):
        column = [row[position] for row in metadata]
        if spec.is_categorical:
            codes = [spec.category_index(value) for value in column]
            encoded[np.arange(len(column)), block.start + np.asarray(codes, dtype=np.int64)] = 1.0
        else:
            low, high = layout.metadata_bounds[position]
            encoded[:, block.start] = _to_range(np.asarray(column, dtype=np.float64), low, high, spec.normalization)
    return encoded


def metadata_outside_bounds(layout: EncodingLayout, metadata: Sequence[Any]) -> List[str]:
    """
    Numeric values of a (possibly partial) metadata tuple that encoding would clip

    Returns:
        One description per value outside the layout's training bounds
    """
    outside = []
    for position, (value, spec) in enumerate(zip(metadata, layout.schema.metadata_fields)):
        if spec.is_categorical:
            continue
        low, high = layout.metadata_bounds[position]
        if not low <= float(value) <= high:
            outside.append(f"'{spec.name}'={value} not in [{low}, {high}]")
    return outside


def encode_records(layout: EncodingLayout, records: np.ndarray) -> np.ndarray:
    """
    Encode raw n x w x K records with the layout's dataset-wide bounds

    Categorical dimensions hold category codes and become one-hot blocks.

    Raises:
        ContractError: If the layout uses auto-normalization (records carry no per-sample range)
    """
    if layout.auto_normalization:
        raise ContractError("raw records can only be encoded with a dataset-wide layout")
    records = np.asarray(records, dtype=np.float64)
    n, w, k = records.shape
    if k != layout.schema.k:
        raise ContractError(f"records have {k} dimensions, layout expects {layout.schema.k}")
    encoded = np.zeros((n, w, layout.d_f), dtype=np.float64)
    rows, steps = np.meshgrid(np.arange(n), np.arange(w), indexing="ij")
    for j, (block, spec) in enumerate(layout.measurement_blocks()):
        column = records[:, :, j]
        if spec.is_categorical:
            encoded[rows, steps, block.start + column.astype(np.int64)] = 1.0
        else:
            low, high = layout.measurement_bounds[j]
            encoded[:, :, block.start] = _to_range(column, low, high, spec.normalization)
    return encoded


def decode_metadata(
    layout: EncodingLayout,
    encoded: np.ndarray,
    sample_categorical: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> List[Tuple[Any, ...]]:
    """Inverse of encode_metadata; categorical blocks decode by argmax (or sampling)"""
    columns = []
    for position, (block, spec) in enumerate(layout.metadata_blocks()):
        values = encoded[:, block]
        if spec.is_categorical:
            codes = _decode_categorical(values, sample_categorical, rng)
            columns.append([spec.categories[c] for c in codes])
        else:
            low, high = layout.metadata_bounds[position]
            columns.append([float(v) for v in _from_range(values[:, 0], low, high, spec.normalization)])
    return [tuple(column[i] for column in columns) for i in range(encoded.shape[0])]


def _decode_categorical(probs: np.ndarray, sample: bool, rng: Optional[np.random.Generator]) -> np.ndarray:
    if not sample:
        return probs.argmax(axis=-1)
    rng = rng or np.random.default_rng(0)
    weights = np.clip(probs, 0.0, None) + 1e-12
    weights = weights / weights.sum(axis=-1, keepdims=True)
    flat = weights.reshape(-1, weights.shape[-1])
    picks = np.array([rng.choice(flat.shape[1], p=row) for row in flat], dtype=np.int64)
    return picks.reshape(probs.shape[:-1])


def encode_fake_metadata(layout: EncodingLayout, records: Sequence[Sequence[NormalizationRecord]]) -> np.ndarray:
    """Scale per-sample (center, half_range) pairs into [0, 1] with the dataset-wide bounds"""
    if not layout.auto_normalization:
        return np.zeros((len(records), 0), dtype=np.float64)
    fake = np.zeros((len(records), layout.d_fake), dtype=np.float64)
    for slot, j in enumerate(layout.schema.numeric_measurement_indices):
        low, high = layout.measurement_bounds[j]
        span = high - low
        centers = np.array([r[slot].center for r in records], dtype=np.float64)
        halves = np.array([r[slot].half_range for r in records], dtype=np.float64)
        if span > 0:
            fake[:, 2 * slot] = np.clip((centers - low) / span, 0.0, 1.0)
            fake[:, 2 * slot + 1] = np.clip(halves / (span / 2.0), 0.0, 1.0)
        else:
            fake[:, 2 * slot] = 0.5
    return fake


def decode_fake_metadata(layout: EncodingLayout, fake: np.ndarray) -> List[Tuple[NormalizationRecord, ...]]:
    """Map generated fake metadata back to (center, half_range); negative half ranges clamp to 0"""
    records = []
    for row in np.asarray(fake, dtype=np.float64):
        per_dim = []
        for slot, j in enumerate(layout.schema.numeric_measurement_indices):
            low, high = layout.measurement_bounds[j]
            span = high - low
            center = low + row[2 * slot] * span if span > 0 else low
            half = max(0.0, row[2 * slot + 1] * span / 2.0)
            per_dim.append(NormalizationRecord(center, half))
        records.append(tuple(per_dim))
    return records


def encode(ds: Dataset, layout: EncodingLayout) -> Tuple[EncodedBatch, List[Tuple[NormalizationRecord, ...]]]:
    """
    Encode a dataset with a fixed layout

    With auto-normalization each numeric measurement dimension of each sample is
    mapped onto its declared range using the sample's own min/max; without it the
    dataset-wide bounds of the layout are used and no fake metadata is emitted.
    """
    schema = layout.schema
    if [s.name for s in ds.schema.metadata_fields] != schema.metadata_names or \
            [s.name for s in ds.schema.measurement_fields] != schema.measurement_names:
        raise ContractError("dataset fields do not match the encoding layout")
    n = len(ds)
    lengths = ds.lengths
    if n and int(lengths.max()) > layout.t_pad:
        raise ContractError(f"sample length {int(lengths.max())} exceeds T_pad={layout.t_pad}")

    measurements = np.zeros((n, layout.t_pad, layout.d_f), dtype=np.float64)
    records: List[Tuple[NormalizationRecord, ...]] = []
    for i, sample in enumerate(ds.samples):
        per_dim = []
        for j, (block, spec) in enumerate(layout.measurement_blocks()):
            series = sample.measurements[:, j]
            if spec.is_categorical:
                measurements[i, np.arange(sample.length), block.start + series.astype(np.int64)] = 1.0
                continue
            low, high = _bounds_of(series)
            per_dim.append(NormalizationRecord((high + low) / 2.0, (high - low) / 2.0))
            if not layout.auto_normalization:
                low, high = layout.measurement_bounds[j]
            measurements[i, : sample.length, block.start] = _to_range(series, low, high, spec.normalization)
        records.append(tuple(per_dim))

    batch = EncodedBatch(
        layout=layout,
        metadata_real=encode_metadata(layout, [s.metadata for s in ds.samples]),
        metadata_fake=encode_fake_metadata(layout, records),
        measurements=measurements,
        flags=make_flags(lengths, layout.t_pad) if n else np.zeros((0, layout.t_pad, 2)),
        lengths=lengths,
    )
    return batch, records


def auto_normalize(
    ds: Dataset, layout: Optional[EncodingLayout] = None
) -> Tuple[EncodedBatch, List[Tuple[NormalizationRecord, ...]]]:
    """
    Per-sample normalization of a dataset

    Returns:
        The encoded batch and, per sample, one NormalizationRecord per numeric
        measurement dimension
    """
    return encode(ds, layout or EncodingLayout.from_dataset(ds))


def _center_half(record: Any) -> Tuple[float, float]:
    """Accepts a NormalizationRecord or a raw (center, half_range) pair; half_range clamps at 0"""
    if isinstance(record, NormalizationRecord):
        return record.center, record.half_range
    center, half_range = record
    return float(center), max(0.0, float(half_range))


def denormalize(
    batch: EncodedBatch,
    records: Optional[Sequence[Sequence[NormalizationRecord]]] = None,
    lengths: Optional[Sequence[int]] = None,
    sample_categorical: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Dataset:
    """
    Decode an encoded (or generated) batch back into a Dataset

    Args:
        batch: Encoded arrays; soft categorical outputs are accepted
        records: Per-sample NormalizationRecords or raw (center, half_range)
            pairs; decoded from
            batch.metadata_fake when omitted
        lengths: Per-sample lengths; read from the flags when omitted
        sample_categorical: Sample categorical values from the soft blocks
            instead of taking the argmax

    Raises:
        ContractError: If array shapes disagree with the layout
    """
    layout = batch.layout
    n = len(batch)
    expected = {
        "metadata_real": (n, layout.d_a),
        "metadata_fake": (n, layout.d_fake),
        "measurements": (n, layout.t_pad, layout.d_f),
        "flags": (n, layout.t_pad, 2),
    }
    for name, shape in expected.items():
        if getattr(batch, name).shape != shape:
            raise ContractError(f"{name} has shape {getattr(batch, name).shape}, layout expects {shape}")

    if records is None:
        records = decode_fake_metadata(layout, batch.metadata_fake) if layout.auto_normalization else [()] * n
    elif len(records) != n:
        raise ContractError(f"{len(records)} normalization records for {n} samples")
    if lengths is None:
        lengths = lengths_from_flags(batch.flags)
    lengths = np.asarray(lengths, dtype=np.int64)

    metadata = decode_metadata(layout, batch.metadata_real, sample_categorical, rng)
    samples = []
    for i in range(n):
        length = int(lengths[i])
        columns = []
        slot = 0
        for j, (block, spec) in enumerate(layout.measurement_blocks()):
            values = batch.measurements[i, :length, block]
            if spec.is_categorical:
                columns.append(_decode_categorical(values, sample_categorical, rng).astype(np.float64))
                continue
            if layout.auto_normalization:
                center, half_range = _center_half(records[i][slot])
                low, high = center - half_range, center + half_range
            else:
                low, high = layout.measurement_bounds[j]
            columns.append(_from_range(values[:, 0], low, high, spec.normalization))
            slot += 1
        samples.append(Sample(metadata=metadata[i], measurements=np.column_stack(columns)))
    return Dataset(layout.schema, samples)
