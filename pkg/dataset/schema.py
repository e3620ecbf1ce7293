"""
Dataset abstraction and on-disk format.

A dataset is a collection of samples; each sample holds a metadata vector
(one value per metadata field) and a T x K measurement matrix, optionally with
strictly increasing timestamps. On disk a dataset is a directory with
``schema.json``, ``attributes.csv`` (one row per sample) and ``features.csv``
(long format, one row per record).

Categorical metadata values are kept as raw strings. Categorical measurement
dimensions are stored in memory as integer category codes (as floats inside
the measurement matrix) and written to disk as category strings.
"""
import enum
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import attrs
import numpy as np
import pandas as pd

from utils.exceptions import ContractError, FormatError, ValidationError
from utils.logger import logger
from utils.retry_mechanism import retry_on_exception

SCHEMA_FILE = "schema.json"
ATTRIBUTES_FILE = "attributes.csv"
FEATURES_FILE = "features.csv"
RESERVED_COLUMNS = ("sample_id", "step", "timestamp")

# 17 significant digits round-trips a float64 exactly
FLOAT_FORMAT = "%.17g"


class FieldKind(str, enum.Enum):
    CATEGORICAL = "categorical"
    NUMERIC = "numeric"


class Normalization(str, enum.Enum):
    ZERO_ONE = "zero_one"
    NEG_ONE_ONE = "neg_one_one"

    @property
    def bounds(self) -> Tuple[float, float]:
        return (0.0, 1.0) if self is Normalization.ZERO_ONE else (-1.0, 1.0)

    @property
    def midpoint(self) -> float:
        low, high = self.bounds
        return (low + high) / 2.0


class TimestampMode(str, enum.Enum):
    NONE = "none"
    EQUALLY_SPACED = "equally_spaced"
    DERIVED = "derived"


def _optional_normalization(value: Any) -> Optional[Normalization]:
    return None if value is None else Normalization(value)


@attrs.frozen
class FieldSpec:
    """Typing of one metadata field or one measurement dimension"""

    name: str
    kind: FieldKind = attrs.field(converter=FieldKind)
    categories: Tuple[str, ...] = attrs.field(default=(), converter=tuple)
    normalization: Optional[Normalization] = attrs.field(default=None, converter=_optional_normalization)

    def __attrs_post_init__(self):
        violations = []
        if not self.name:
            violations.append("field name must be non-empty")
        if self.kind is FieldKind.CATEGORICAL:
            if len(self.categories) < 1:
                violations.append(f"categorical field '{self.name}' needs at least one category")
            if len(set(self.categories)) != len(self.categories):
                violations.append(f"categorical field '{self.name}' has duplicate categories")
        else:
            if self.normalization is None:
                violations.append(f"numeric field '{self.name}' must declare a normalization range")
            if self.categories:
                violations.append(f"numeric field '{self.name}' cannot list categories")
        if violations:
            raise ValidationError(violations, context="field spec")

    @classmethod
    def categorical(cls, name: str, categories: Iterable[str]) -> "FieldSpec":
        return cls(name=name, kind=FieldKind.CATEGORICAL, categories=tuple(categories))

    @classmethod
    def numeric(cls, name: str, normalization: Union[str, Normalization] = Normalization.ZERO_ONE) -> "FieldSpec":
        return cls(name=name, kind=FieldKind.NUMERIC, normalization=normalization)

    @property
    def is_categorical(self) -> bool:
        return self.kind is FieldKind.CATEGORICAL

    def category_index(self, value: str) -> int:
        try:
            return self.categories.index(value)
        except ValueError:
            raise ValidationError(
                [f"value {value!r} is not a category of '{self.name}' {list(self.categories)}"]
            ) from None

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"name": self.name, "kind": self.kind.value}
        if self.is_categorical:
            data["categories"] = list(self.categories)
        else:
            data["normalization"] = self.normalization.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FieldSpec":
        try:
            return cls(
                name=data["name"],
                kind=data["kind"],
                categories=data.get("categories", ()),
                normalization=data.get("normalization"),
            )
        except KeyError as e:
            raise FormatError(f"field spec is missing key {e}") from e
        except ValueError as e:
            raise FormatError(f"field spec has an invalid value: {e}") from e


@attrs.frozen
class DataSchema:
    """Declarative description of a dataset's metadata and measurements"""

    metadata_fields: Tuple[FieldSpec, ...] = attrs.field(converter=tuple)
    measurement_fields: Tuple[FieldSpec, ...] = attrs.field(converter=tuple)
    max_length: int
    batch_param: int = 1
    timestamp_mode: TimestampMode = attrs.field(default=TimestampMode.NONE, converter=TimestampMode)

    def __attrs_post_init__(self):
        violations = []
        if len(self.measurement_fields) < 1:
            violations.append("schema needs at least one measurement field (K >= 1)")
        if self.max_length < 1:
            violations.append(f"max_length must be positive, got {self.max_length}")
        if self.batch_param < 1:
            violations.append(f"batch_param must be >= 1, got {self.batch_param}")
        names = [spec.name for spec in self.metadata_fields + self.measurement_fields]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            violations.append(f"duplicate field names: {duplicates}")
        reserved = sorted(set(names) & set(RESERVED_COLUMNS))
        if reserved:
            violations.append(f"reserved column names used as fields: {reserved}")
        if violations:
            raise ValidationError(violations, context="schema")

    @property
    def m(self) -> int:
        return len(self.metadata_fields)

    @property
    def k(self) -> int:
        return len(self.measurement_fields)

    @property
    def metadata_names(self) -> List[str]:
        return [spec.name for spec in self.metadata_fields]

    @property
    def measurement_names(self) -> List[str]:
        return [spec.name for spec in self.measurement_fields]

    @property
    def numeric_measurement_indices(self) -> List[int]:
        return [i for i, spec in enumerate(self.measurement_fields) if not spec.is_categorical]

    def padded_length(self, observed_max: Optional[int] = None) -> int:
        """Smallest multiple of S that is >= the longest series"""
        longest = self.max_length if observed_max is None else observed_max
        return int(math.ceil(longest / self.batch_param) * self.batch_param)

    def metadata_field(self, name: str) -> FieldSpec:
        for spec in self.metadata_fields:
            if spec.name == name:
                return spec
        raise ContractError(f"unknown metadata field '{name}'")

    def measurement_index(self, name: str) -> int:
        for i, spec in enumerate(self.measurement_fields):
            if spec.name == name:
                return i
        raise ContractError(f"unknown measurement field '{name}'")

    def with_batch_param(self, batch_param: int) -> "DataSchema":
        return attrs.evolve(self, batch_param=batch_param)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "metadata_fields": [spec.to_dict() for spec in self.metadata_fields],
            "measurement_fields": [spec.to_dict() for spec in self.measurement_fields],
            "max_length": self.max_length,
            "batch_param": self.batch_param,
            "timestamp_mode": self.timestamp_mode.value,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DataSchema":
        try:
            return cls(
                metadata_fields=[FieldSpec.from_dict(spec) for spec in data["metadata_fields"]],
                measurement_fields=[FieldSpec.from_dict(spec) for spec in data["measurement_fields"]],
                max_length=int(data["max_length"]),
                batch_param=int(data["batch_param"]),
                timestamp_mode=data.get("timestamp_mode", TimestampMode.NONE.value),
            )
        except KeyError as e:
            raise FormatError(f"schema is missing key {e}") from e
        except (TypeError, ValueError) as e:
            raise FormatError(f"schema has an invalid value: {e}") from e

    def schema_hash(self) -> str:
        """Stable digest of the schema, used to pair checkpoints with data"""
        canonical = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _as_readonly_matrix(value: Any) -> np.ndarray:
    array = np.array(value, dtype=np.float64)
    if array.ndim == 1:
        array = array.reshape(-1, 1)
    array.setflags(write=False)
    return array


def _as_readonly_vector(value: Any) -> Optional[np.ndarray]:
    if value is None:
        return None
    array = np.array(value, dtype=np.float64).reshape(-1)
    array.setflags(write=False)
    return array


@attrs.frozen(eq=False)
class Sample:
    """One time series: metadata vector, T x K measurements, optional timestamps"""

    metadata: Tuple[Any, ...] = attrs.field(converter=tuple)
    measurements: np.ndarray = attrs.field(converter=_as_readonly_matrix)
    timestamps: Optional[np.ndarray] = attrs.field(default=None, converter=_as_readonly_vector)

    def __attrs_post_init__(self):
        violations = self.invariant_violations()
        if violations:
            raise ValidationError(violations, context="sample")

    def invariant_violations(self) -> List[str]:
        violations = []
        if self.measurements.ndim != 2:
            violations.append(f"measurements must be a T x K matrix, got shape {self.measurements.shape}")
            return violations
        if self.measurements.shape[0] < 1:
            violations.append("sample needs at least one record (T >= 1)")
        if not np.all(np.isfinite(self.measurements)):
            violations.append("measurement values must be finite")
        if self.timestamps is not None:
            if self.timestamps.shape[0] != self.measurements.shape[0]:
                violations.append(
                    f"{self.timestamps.shape[0]} timestamps for {self.measurements.shape[0]} records"
                )
            elif self.timestamps.shape[0] > 1 and not np.all(np.diff(self.timestamps) > 0):
                violations.append("timestamps must be strictly increasing")
            if not np.all(np.isfinite(self.timestamps)):
                violations.append("timestamps must be finite")
        return violations

    @property
    def length(self) -> int:
        return int(self.measurements.shape[0])

    def equals(self, other: "Sample", rtol: float = 1e-9, atol: float = 0.0) -> bool:
        if self.measurements.shape != other.measurements.shape:
            return False
        if not _metadata_equal(self.metadata, other.metadata, rtol, atol):
            return False
        if not np.allclose(self.measurements, other.measurements, rtol=rtol, atol=atol):
            return False
        if (self.timestamps is None) != (other.timestamps is None):
            return False
        if self.timestamps is not None:
            return bool(np.allclose(self.timestamps, other.timestamps, rtol=rtol, atol=atol))
        return True


def _metadata_equal(a: Sequence[Any], b: Sequence[Any], rtol: float, atol: float) -> bool:
    if len(a) != len(b):
        return False
    for left, right in zip(a, b):
        if isinstance(left, str) or isinstance(right, str):
            if left != right:
                return False
        elif not math.isclose(float(left), float(right), rel_tol=rtol, abs_tol=atol):
            return False
    return True


def conformance_violations(schema: DataSchema, sample: Sample, label: str = "sample") -> List[str]:
    """Everything that keeps a sample from conforming to a schema"""
    violations = []
    if len(sample.metadata) != schema.m:
        violations.append(f"{label}: {len(sample.metadata)} metadata values for {schema.m} fields")
    else:
        for spec, value in zip(schema.metadata_fields, sample.metadata):
            if spec.is_categorical:
                if value not in spec.categories:
                    violations.append(f"{label}: {value!r} is not a category of '{spec.name}'")
            else:
                try:
                    if not math.isfinite(float(value)):
                        violations.append(f"{label}: metadata '{spec.name}' must be finite")
                except (TypeError, ValueError):
                    violations.append(f"{label}: metadata '{spec.name}' must be numeric, got {value!r}")
    if sample.measurements.shape[1] != schema.k:
        violations.append(f"{label}: {sample.measurements.shape[1]} measurement columns for {schema.k} fields")
    else:
        for j, spec in enumerate(schema.measurement_fields):
            if spec.is_categorical:
                codes = sample.measurements[:, j]
                if np.any(codes != np.round(codes)) or np.any(codes < 0) or np.any(codes >= len(spec.categories)):
                    violations.append(f"{label}: measurement '{spec.name}' holds invalid category codes")
    if sample.length > schema.max_length:
        violations.append(f"{label}: length {sample.length} exceeds max_length {schema.max_length}")
    return violations


@attrs.frozen(eq=False)
class Dataset:
    """A schema plus the samples that conform to it"""

    schema: DataSchema
    samples: Tuple[Sample, ...] = attrs.field(converter=tuple)

    def __attrs_post_init__(self):
        violations = []
        for i, sample in enumerate(self.samples):
            violations.extend(conformance_violations(self.schema, sample, label=f"sample {i}"))
        if violations:
            raise ValidationError(violations, context="dataset")

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([sample.length for sample in self.samples], dtype=np.int64)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(self.schema, [self.samples[int(i)] for i in indices])

    def metadata_column(self, name: str) -> List[Any]:
        position = self.schema.metadata_names.index(self.schema.metadata_field(name).name)
        return [sample.metadata[position] for sample in self.samples]

    def measurement_series(self, dim: Union[int, str]) -> List[np.ndarray]:
        index = self.schema.measurement_index(dim) if isinstance(dim, str) else int(dim)
        return [sample.measurements[:, index] for sample in self.samples]

    def equals(self, other: "Dataset", rtol: float = 1e-9, atol: float = 0.0) -> bool:
        if self.schema != other.schema or len(self) != len(other):
            return False
        return all(a.equals(b, rtol=rtol, atol=atol) for a, b in zip(self.samples, other.samples))


def suggest_batch_param(max_length: int, target_passes: int = 50) -> int:
    """Smallest S whose number of recurrent passes ceil(T/S) is <= target_passes"""
    if max_length < 1 or target_passes < 1:
        raise ContractError("max_length and target_passes must be positive")
    return max(1, int(math.ceil(max_length / target_passes)))


def load_dataset(root_path: Union[str, Path]) -> Dataset:
    """
    Load and validate a dataset directory

    Args:
        root_path: Directory holding schema.json, attributes.csv and features.csv

    Returns:
        Validated Dataset with samples ordered by sample_id

    Raises:
        FormatError: If a file is missing or malformed
        ValidationError: If any sample breaks the schema or a sample invariant
    """
    root = Path(root_path)
    for name in (SCHEMA_FILE, ATTRIBUTES_FILE, FEATURES_FILE):
        if not (root / name).is_file():
            raise FormatError(f"dataset directory {root} is missing {name}")

    try:
        with open(root / SCHEMA_FILE, "r", encoding="utf-8") as handle:
            schema = DataSchema.from_dict(json.load(handle))
    except json.JSONDecodeError as e:
        raise FormatError(f"{root / SCHEMA_FILE} is not valid JSON: {e}") from e

    attributes = _read_csv(root / ATTRIBUTES_FILE, schema.metadata_fields, leading=["sample_id"])
    features = _read_csv(root / FEATURES_FILE, schema.measurement_fields, leading=["sample_id", "step"])

    expected_attr = ["sample_id"] + schema.metadata_names
    if list(attributes.columns) != expected_attr:
        raise FormatError(f"attributes.csv header {list(attributes.columns)} != {expected_attr}")
    expected_feat = ["sample_id", "step"] + schema.measurement_names
    has_timestamps = list(features.columns) == expected_feat + ["timestamp"]
    if list(features.columns) != expected_feat and not has_timestamps:
        raise FormatError(f"features.csv header {list(features.columns)} != {expected_feat}[,timestamp]")

    violations: List[str] = []
    measurement_codes = _encode_categorical_columns(features, schema.measurement_fields, violations)
    if attributes["sample_id"].duplicated().any():
        violations.append("attributes.csv repeats sample ids")
    unknown = sorted(set(features["sample_id"]) - set(attributes["sample_id"]))
    if unknown:
        violations.append(f"features.csv references unknown sample ids {unknown[:10]}")
    if violations:
        raise ValidationError(violations, context=str(root))

    grouped = {sid: frame for sid, frame in measurement_codes.groupby("sample_id", sort=True)}
    samples = []
    for _, row in attributes.sort_values("sample_id", kind="stable").iterrows():
        sid = row["sample_id"]
        metadata = tuple(
            str(row[spec.name]) if spec.is_categorical else float(row[spec.name])
            for spec in schema.metadata_fields
        )
        frame = grouped.get(sid)
        if frame is None:
            violations.append(f"sample {sid} has no records (T >= 1 required)")
            continue
        frame = frame.sort_values("step", kind="stable")
        steps = frame["step"].to_numpy()
        if not np.array_equal(steps, np.arange(len(steps))):
            violations.append(f"sample {sid} steps are not 0..T-1")
            continue
        timestamps = frame["timestamp"].to_numpy(dtype=np.float64) if has_timestamps else None
        try:
            samples.append(
                Sample(metadata, frame[schema.measurement_names].to_numpy(dtype=np.float64), timestamps)
            )
        except ValidationError as e:
            violations.extend(f"sample {sid}: {v}" for v in e.violations)
    if violations:
        raise ValidationError(violations, context=str(root))

    dataset = Dataset(schema, samples)
    logger.info(f"✅ Loaded dataset from {root}: n={len(dataset)}, m={schema.m}, K={schema.k}")
    return dataset


def load_metadata_rows(path: Union[str, Path], schema: DataSchema) -> List[Tuple[Any, ...]]:
    """
    Read metadata tuples to condition generation on

    The CSV header names a leading run of the schema's metadata fields, optionally
    after a sample_id column, so a dataset's own attributes.csv is accepted.

    Raises:
        FormatError: If the file is missing, empty, or its header does not match the schema
    """
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"metadata file {path} does not exist")
    try:
        header = list(pd.read_csv(path, nrows=0, encoding="utf-8").columns)
    except (pd.errors.EmptyDataError, ValueError) as e:
        raise FormatError(f"{path} could not be parsed: {e}") from e
    leading = ["sample_id"] if header[:1] == ["sample_id"] else []
    names = header[len(leading):]
    if not names or names != schema.metadata_names[: len(names)]:
        raise FormatError(f"{path} header {header} does not start the metadata fields {schema.metadata_names}")

    fields = schema.metadata_fields[: len(names)]
    frame = _read_csv(path, fields, leading=leading)
    if frame.empty:
        raise FormatError(f"{path} holds no metadata rows")
    rows = [
        tuple(str(row[spec.name]) if spec.is_categorical else float(row[spec.name]) for spec in fields)
        for _, row in frame.iterrows()
    ]
    logger.info(f"Loaded {len(rows)} metadata rows from {path}")
    return rows


def _read_csv(path: Path, fields: Sequence[FieldSpec], leading: List[str]) -> pd.DataFrame:
    dtypes: Dict[str, Any] = {name: "int64" for name in leading}
    dtypes.update({spec.name: str if spec.is_categorical else "float64" for spec in fields})
    try:
        return pd.read_csv(path, dtype=dtypes, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        return pd.DataFrame({name: pd.Series(dtype=dtype) for name, dtype in dtypes.items()})
    except ValueError as e:
        raise FormatError(f"{path} could not be parsed: {e}") from e


def _encode_categorical_columns(
    features: pd.DataFrame, fields: Sequence[FieldSpec], violations: List[str]
) -> pd.DataFrame:
    encoded = features.copy()
    for spec in fields:
        if not spec.is_categorical:
            continue
        lookup = {category: float(i) for i, category in enumerate(spec.categories)}
        bad = sorted(set(encoded[spec.name]) - set(lookup))
        if bad:
            violations.append(f"measurement '{spec.name}' has values outside its categories: {bad[:10]}")
            continue
        encoded[spec.name] = encoded[spec.name].map(lookup).astype(np.float64)
    return encoded


def save_dataset(ds: Dataset, root_path: Union[str, Path]) -> None:
    """
    Write a dataset directory readable by load_dataset

    Raises:
        OSError: If the directory cannot be created or written
    """
    root = Path(root_path)
    root.mkdir(parents=True, exist_ok=True)
    schema = ds.schema

    attr_rows = []
    feature_frames = []
    has_timestamps = any(sample.timestamps is not None for sample in ds.samples)
    for sid, sample in enumerate(ds.samples):
        attr_rows.append([sid, *sample.metadata])
        frame = pd.DataFrame(sample.measurements, columns=schema.measurement_names)
        for spec in schema.measurement_fields:
            if spec.is_categorical:
                frame[spec.name] = [spec.categories[int(code)] for code in frame[spec.name]]
        frame.insert(0, "step", np.arange(sample.length))
        frame.insert(0, "sample_id", sid)
        if has_timestamps:
            frame["timestamp"] = sample.timestamps
        feature_frames.append(frame)

    attributes = pd.DataFrame(attr_rows, columns=["sample_id"] + schema.metadata_names)
    feature_columns = ["sample_id", "step"] + schema.measurement_names + (["timestamp"] if has_timestamps else [])
    features = pd.concat(feature_frames, ignore_index=True) if feature_frames else pd.DataFrame(columns=feature_columns)

    _write_dataset_files(root, schema, attributes, features)
    logger.log_artifact("dataset", str(root))


@retry_on_exception()
def _write_dataset_files(root: Path, schema: DataSchema, attributes: pd.DataFrame, features: pd.DataFrame) -> None:
    with open(root / SCHEMA_FILE, "w", encoding="utf-8") as handle:
        json.dump(schema.to_dict(), handle, indent=2, ensure_ascii=False)
    attributes.to_csv(root / ATTRIBUTES_FILE, index=False, float_format=FLOAT_FORMAT, encoding="utf-8")
    features.to_csv(root / FEATURES_FILE, index=False, float_format=FLOAT_FORMAT, encoding="utf-8")


def timestamp_transform(ds: Dataset) -> Dataset:
    """
    Replace timestamps by a start_time metadata field and an interarrival measurement

    The interarrival at the final step is 0 so rows stay K-dimensional.
    """
    schema = ds.schema
    if schema.timestamp_mode is not TimestampMode.DERIVED:
        raise ContractError(f"timestamp_transform needs timestamp_mode=derived, got {schema.timestamp_mode.value}")
    missing = [i for i, sample in enumerate(ds.samples) if sample.timestamps is None]
    if missing:
        raise ContractError(f"samples {missing[:10]} carry no timestamps")

    new_schema = DataSchema(
        metadata_fields=schema.metadata_fields + (FieldSpec.numeric("start_time"),),
        measurement_fields=schema.measurement_fields + (FieldSpec.numeric("interarrival"),),
        max_length=schema.max_length,
        batch_param=schema.batch_param,
        timestamp_mode=TimestampMode.NONE,
    )
    samples = []
    for sample in ds.samples:
        interarrival = np.append(np.diff(sample.timestamps), 0.0)
        samples.append(
            Sample(
                metadata=sample.metadata + (float(sample.timestamps[0]),),
                measurements=np.column_stack([sample.measurements, interarrival]),
            )
        )
    return Dataset(new_schema, samples)


def timestamp_restore(ds: Dataset, source_schema: DataSchema) -> Dataset:
    """Inverse of timestamp_transform: rebuild timestamps from start_time and interarrivals"""
    schema = ds.schema
    if schema.metadata_names[-1:] != ["start_time"] or schema.measurement_names[-1:] != ["interarrival"]:
        raise ContractError("dataset does not carry start_time/interarrival fields")
    samples = []
    for sample in ds.samples:
        gaps = np.clip(sample.measurements[:-1, -1], 0.0, None)
        timestamps = float(sample.metadata[-1]) + np.concatenate([[0.0], np.cumsum(gaps)])
        # generated gaps of exactly 0 would break strict ordering
        timestamps = np.maximum.accumulate(timestamps + np.arange(sample.length) * 1e-9)
        samples.append(
            Sample(metadata=sample.metadata[:-1], measurements=sample.measurements[:, :-1], timestamps=timestamps)
        )
    return Dataset(source_schema, samples)
