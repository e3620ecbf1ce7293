"""
Structural fidelity metrics comparing a synthetic dataset against a real one.

Every metric is a pure function of its inputs and returns a ``MetricResult``
carrying a scalar, a curve, a histogram or any combination of the three.
"""
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import attrs
import numpy as np
from scipy.spatial.distance import jensenshannon
from scipy.stats import wasserstein_distance
from sklearn.metrics import pairwise_distances

from config.run_config import EvalSelection
from dataset.schema import Dataset
from utils.exceptions import ContractError
from utils.logger import logger

Dim = Union[int, str, None]


def _as_pair(value: Any) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    if value is None:
        return None
    first, second = value
    return np.asarray(first, dtype=np.float64), np.asarray(second, dtype=np.float64)


@attrs.frozen(eq=False)
class MetricResult:
    name: str
    scalar: Optional[float] = None
    curve: Optional[Tuple[np.ndarray, np.ndarray]] = attrs.field(default=None, converter=_as_pair)
    histogram: Optional[Tuple[np.ndarray, np.ndarray]] = attrs.field(default=None, converter=_as_pair)
    details: Dict[str, Any] = attrs.field(factory=dict)

    def __attrs_post_init__(self):
        if self.scalar is None and self.curve is None and self.histogram is None:
            raise ContractError(f"metric '{self.name}' carries no scalar, curve or histogram")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "scalar": None if self.scalar is None else float(self.scalar),
            "curve": None if self.curve is None else [self.curve[0].tolist(), self.curve[1].tolist()],
            "histogram": None if self.histogram is None else [self.histogram[0].tolist(), self.histogram[1].tolist()],
            "details": self.details,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MetricResult":
        return cls(
            name=data["name"],
            scalar=data.get("scalar"),
            curve=data.get("curve"),
            histogram=data.get("histogram"),
            details=data.get("details") or {},
        )


def _numeric_dim(ds: Dataset, dim: Dim) -> int:
    schema = ds.schema
    if dim is None:
        numeric = schema.numeric_measurement_indices
        if not numeric:
            raise ContractError("dataset has no numeric measurement dimension")
        return numeric[0]
    index = schema.measurement_index(dim) if isinstance(dim, str) else int(dim)
    if not 0 <= index < schema.k:
        raise ContractError(f"measurement dimension {index} out of range 0..{schema.k - 1}")
    if schema.measurement_fields[index].is_categorical:
        raise ContractError(f"measurement '{schema.measurement_fields[index].name}' is categorical")
    return index


def _require_samples(ds: Dataset, what: str) -> None:
    if len(ds) == 0:
        raise ContractError(f"{what} needs a non-empty dataset")


def series_autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    """
    Autocorrelation of one series for lags 0..max_lag

    The lag-l numerator is averaged over its T-l products and divided by the
    variance averaged over T terms, so rho(0) = 1 and a periodic series peaks
    at 1 at multiples of its period.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    centered = x - x.mean()
    products = np.correlate(centered, centered, mode="full")[n - 1: n + max_lag]
    variance = products[0] / n
    return (products / (n - np.arange(max_lag + 1))) / variance


def autocorrelation(ds: Dataset, max_lag: int, dim: Dim = None) -> MetricResult:
    """
    Mean per-lag autocorrelation curve over the samples of ds

    Samples whose selected series is constant are excluded and counted. A
    max_lag that is not below the shortest included length is truncated.
    """
    _require_samples(ds, "autocorrelation")
    if max_lag < 0:
        raise ContractError(f"max_lag must be >= 0, got {max_lag}")
    index = _numeric_dim(ds, dim)
    series = [x for x in ds.measurement_series(index)]
    included = [x for x in series if np.ptp(x) > 0]
    excluded = len(series) - len(included)
    if excluded:
        logger.warning(f"⚠️ Excluded {excluded} zero-variance series from autocorrelation")
    if not included:
        raise ContractError("every series has zero variance; autocorrelation is undefined")

    shortest = min(len(x) for x in included)
    lag = max_lag
    if max_lag >= shortest:
        lag = shortest - 1
        logger.warning(f"⚠️ max_lag {max_lag} >= shortest length {shortest}; truncated to {lag}")

    curves = np.stack([series_autocorrelation(x, lag) for x in included])
    return MetricResult(
        name="autocorr",
        curve=(np.arange(lag + 1), curves.mean(axis=0)),
        details={"excluded": excluded, "max_lag": lag, "requested_max_lag": max_lag},
    )


def autocorr_mse(real_ds: Dataset, synth_ds: Dataset, max_lag: int, dim: Dim = None) -> float:
    """Mean squared difference of the two mean autocorrelation curves over lags 1..max_lag"""
    index = _numeric_dim(real_ds, dim)
    real = autocorrelation(real_ds, max_lag, index).curve[1]
    synth = autocorrelation(synth_ds, max_lag, index).curve[1]
    return curve_mse(real, synth)


def curve_mse(real_curve: Sequence[float], synth_curve: Sequence[float]) -> float:
    """MSE over the common lags, skipping lag 0"""
    common = min(len(real_curve), len(synth_curve))
    if common < 2:
        raise ContractError("curves need at least one lag beyond 0")
    diff = np.asarray(real_curve[1:common], dtype=np.float64) - np.asarray(synth_curve[1:common], dtype=np.float64)
    return float(np.mean(diff ** 2))


def wasserstein1(samples_a: Sequence[float], samples_b: Sequence[float], seed: int = 0) -> float:
    """
    Empirical Wasserstein-1 distance

    When the sizes differ the larger sample is down-sampled without
    replacement to the smaller size, so the distance is always the mean
    absolute difference of the sorted coupling.
    """
    a = np.asarray(samples_a, dtype=np.float64).reshape(-1)
    b = np.asarray(samples_b, dtype=np.float64).reshape(-1)
    if a.size == 0 or b.size == 0:
        raise ContractError("wasserstein1 needs two non-empty samples")
    if a.size != b.size:
        rng = np.random.default_rng(seed)
        if a.size > b.size:
            a = rng.choice(a, size=b.size, replace=False)
        else:
            b = rng.choice(b, size=a.size, replace=False)
    return float(wasserstein_distance(a, b))


def sample_totals(ds: Dataset, dim: Dim = None) -> np.ndarray:
    """Per-sample sum of one numeric measurement dimension"""
    index = _numeric_dim(ds, dim)
    return np.array([x.sum() for x in ds.measurement_series(index)], dtype=np.float64)


def conditional_wasserstein1(real_ds: Dataset, synth_ds: Dataset, field: str, dim: Dim = None) -> MetricResult:
    """W1 of per-sample totals within each category of a categorical metadata field"""
    spec = real_ds.schema.metadata_field(field)
    if not spec.is_categorical:
        raise ContractError(f"metadata field '{field}' is not categorical")
    real_totals, synth_totals = sample_totals(real_ds, dim), sample_totals(synth_ds, dim)
    real_labels = np.asarray(real_ds.metadata_column(field), dtype=object)
    synth_labels = np.asarray(synth_ds.metadata_column(field), dtype=object)

    per_category: Dict[str, float] = {}
    for category in spec.categories:
        a, b = real_totals[real_labels == category], synth_totals[synth_labels == category]
        if a.size and b.size:
            per_category[category] = wasserstein1(a, b)
        else:
            logger.warning(f"⚠️ Category '{category}' missing from one side; skipped in conditional W1")
    if not per_category:
        raise ContractError(f"no category of '{field}' occurs in both datasets")
    return MetricResult(
        name="conditional_w1",
        scalar=float(np.mean(list(per_category.values()))),
        details={"field": field, "per_category": per_category},
    )


def jsd(p: Sequence[float], q: Sequence[float]) -> float:
    """Base-2 Jensen-Shannon divergence between two count (or probability) vectors"""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ContractError(f"histograms have different bins: {p.shape} vs {q.shape}")
    if p.sum() <= 0 or q.sum() <= 0:
        raise ContractError("jsd needs two non-empty histograms")
    return float(jensenshannon(p, q, base=2) ** 2)


def pearson_correlations(ds: Dataset, dim_a: Dim, dim_b: Dim) -> Tuple[np.ndarray, int]:
    """Per-sample Pearson correlation between two numeric dimensions plus the excluded count"""
    a, b = _numeric_dim(ds, dim_a), _numeric_dim(ds, dim_b)
    values = []
    excluded = 0
    for sample in ds:
        x, y = sample.measurements[:, a], sample.measurements[:, b]
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            excluded += 1
            continue
        values.append(np.corrcoef(x, y)[0, 1])
    if excluded:
        logger.warning(f"⚠️ Excluded {excluded} zero-variance samples from Pearson correlation")
    return np.clip(np.asarray(values, dtype=np.float64), -1.0, 1.0), excluded


def empirical_cdf(values: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    ordered = np.sort(np.asarray(values, dtype=np.float64))
    return ordered, np.arange(1, ordered.size + 1) / ordered.size


def pearson_cdf(ds: Dataset, dim_a: Dim, dim_b: Dim) -> MetricResult:
    _require_samples(ds, "pearson_cdf")
    values, excluded = pearson_correlations(ds, dim_a, dim_b)
    if values.size == 0:
        raise ContractError("no sample has variance in both dimensions")
    return MetricResult(name="pearson", curve=empirical_cdf(values), details={"excluded": excluded})


def length_histogram(ds: Dataset, bins: Optional[int] = None, max_length: Optional[int] = None) -> MetricResult:
    """Histogram of series lengths; one bin per length unless bins is given"""
    _require_samples(ds, "length_histogram")
    top = max_length or ds.schema.max_length
    if bins is None:
        edges = np.arange(1, top + 2) - 0.5
    else:
        edges = np.histogram_bin_edges([], bins=bins, range=(0.5, top + 0.5))
    counts, edges = np.histogram(ds.lengths, bins=edges)
    return MetricResult(name="length", histogram=(edges, counts))


def length_jsd(real_ds: Dataset, synth_ds: Dataset, bins: Optional[int] = None) -> MetricResult:
    top = max(real_ds.schema.max_length, synth_ds.schema.max_length)
    real = length_histogram(real_ds, bins, top)
    synth = length_histogram(synth_ds, bins, top)
    return MetricResult(
        name="length",
        scalar=jsd(real.histogram[1], synth.histogram[1]),
        histogram=synth.histogram,
        details={"real_counts": real.histogram[1].tolist()},
    )


def metadata_histogram(ds: Dataset, field: str, bins: int = 50, value_range=None) -> MetricResult:
    """Counts per category of a categorical field, or a binned histogram of a numeric one"""
    spec = ds.schema.metadata_field(field)
    values = ds.metadata_column(field)
    if spec.is_categorical:
        counts = np.array([sum(1 for v in values if v == c) for c in spec.categories], dtype=np.float64)
        edges = np.arange(len(spec.categories) + 1, dtype=np.float64)
        return MetricResult(
            name="metadata", histogram=(edges, counts), details={"field": field, "categories": list(spec.categories)}
        )
    _require_samples(ds, "metadata_histogram")
    counts, edges = np.histogram(np.asarray(values, dtype=np.float64), bins=bins, range=value_range)
    return MetricResult(name="metadata", histogram=(edges, counts), details={"field": field})


def metadata_jsd(real_ds: Dataset, synth_ds: Dataset, field: str, bins: int = 50) -> MetricResult:
    spec = real_ds.schema.metadata_field(field)
    value_range = None
    if not spec.is_categorical:
        pooled = np.asarray(real_ds.metadata_column(field) + synth_ds.metadata_column(field), dtype=np.float64)
        value_range = (pooled.min(), pooled.max())
    real = metadata_histogram(real_ds, field, bins, value_range)
    synth = metadata_histogram(synth_ds, field, bins, value_range)
    return MetricResult(
        name="metadata",
        scalar=jsd(real.histogram[1], synth.histogram[1]),
        histogram=synth.histogram,
        details={**synth.details, "real_counts": real.histogram[1].tolist()},
    )


def range_midpoints(ds: Dataset, dim: Dim = None) -> np.ndarray:
    """(max + min) / 2 of one numeric dimension per sample, in raw units"""
    index = _numeric_dim(ds, dim)
    return np.array([(x.max() + x.min()) / 2.0 for x in ds.measurement_series(index)], dtype=np.float64)


def range_midpoint_hist(ds: Dataset, dim: Dim = None, bins: int = 50, value_range=None) -> MetricResult:
    _require_samples(ds, "range_midpoint_hist")
    counts, edges = np.histogram(range_midpoints(ds, dim), bins=bins, range=value_range)
    return MetricResult(name="midpoint", histogram=(edges, counts))


def midpoint_jsd(real_ds: Dataset, synth_ds: Dataset, dim: Dim = None, bins: int = 50) -> MetricResult:
    """JSD of real vs synthetic range-midpoint histograms over common bins"""
    pooled = np.concatenate([range_midpoints(real_ds, dim), range_midpoints(synth_ds, dim)])
    value_range = (pooled.min(), pooled.max()) if np.ptp(pooled) > 0 else (pooled.min() - 0.5, pooled.max() + 0.5)
    real = range_midpoint_hist(real_ds, dim, bins, value_range)
    synth = range_midpoint_hist(synth_ds, dim, bins, value_range)
    return MetricResult(
        name="midpoint",
        scalar=jsd(real.histogram[1], synth.histogram[1]),
        histogram=synth.histogram,
        details={"real_counts": real.histogram[1].tolist()},
    )


@attrs.frozen(eq=False)
class NearestNeighbors:
    """Top-k training neighbors of every synthetic sample, closest first"""

    indices: np.ndarray
    distances: np.ndarray

    @property
    def min_distances(self) -> np.ndarray:
        return self.distances[:, 0]

    def to_metric(self) -> MetricResult:
        return MetricResult(
            name="memorization",
            scalar=float(self.min_distances.min()),
            curve=empirical_cdf(self.min_distances),
            details={"k": int(self.indices.shape[1]), "median_min_distance": float(np.median(self.min_distances))},
        )


def _flatten_padded(ds: Dataset, steps: int) -> np.ndarray:
    flat = np.zeros((len(ds), steps * ds.schema.k), dtype=np.float64)
    for i, sample in enumerate(ds):
        values = sample.measurements.reshape(-1)
        flat[i, : values.size] = values
    return flat


def memorization_check(synth_ds: Dataset, train_ds: Dataset, k: int = 1) -> NearestNeighbors:
    """
    Exact k nearest training samples of every synthetic sample by squared error

    Series of different lengths are zero-padded to the longest one.
    """
    _require_samples(synth_ds, "memorization_check")
    if k < 1 or k > len(train_ds):
        raise ContractError(f"k={k} must be within 1..{len(train_ds)} (training set size)")
    if synth_ds.schema.k != train_ds.schema.k:
        raise ContractError("datasets have different measurement dimensions")
    steps = int(max(synth_ds.lengths.max(), train_ds.lengths.max()))
    distances = pairwise_distances(
        _flatten_padded(synth_ds, steps), _flatten_padded(train_ds, steps), metric="sqeuclidean"
    )
    order = np.argsort(distances, axis=1, kind="stable")[:, :k]
    return NearestNeighbors(indices=order, distances=np.take_along_axis(distances, order, axis=1))


def _first_categorical_field(ds: Dataset) -> Optional[str]:
    for spec in ds.schema.metadata_fields:
        if spec.is_categorical:
            return spec.name
    return ds.schema.metadata_names[0] if ds.schema.metadata_names else None


def run_fidelity_suite(real_ds: Dataset, synth_ds: Dataset, selection: Optional[EvalSelection] = None) -> List[MetricResult]:
    """Compute exactly the metrics named by the selection"""
    selection = selection or EvalSelection()
    dim = selection.measurement
    field = selection.metadata_field or _first_categorical_field(real_ds)
    results: List[MetricResult] = []
    for name in selection.metrics:
        if name == "autocorr":
            real = autocorrelation(real_ds, selection.max_lag, dim)
            synth = autocorrelation(synth_ds, selection.max_lag, dim)
            result = MetricResult(
                name="autocorr",
                scalar=curve_mse(real.curve[1], synth.curve[1]),
                curve=synth.curve,
                details={"real_curve": real.curve[1].tolist(), "excluded": synth.details["excluded"]},
            )
        elif name == "w1":
            result = MetricResult(name="w1", scalar=wasserstein1(sample_totals(real_ds, dim), sample_totals(synth_ds, dim)))
        elif name == "conditional_w1":
            if field is None or not real_ds.schema.metadata_field(field).is_categorical:
                logger.warning("⚠️ No categorical metadata field; conditional W1 skipped")
                continue
            result = conditional_wasserstein1(real_ds, synth_ds, field, dim)
        elif name == "length":
            result = length_jsd(real_ds, synth_ds)
        elif name == "metadata":
            if field is None:
                logger.warning("⚠️ Schema has no metadata; metadata histogram skipped")
                continue
            result = metadata_jsd(real_ds, synth_ds, field, selection.bins)
        elif name == "midpoint":
            result = midpoint_jsd(real_ds, synth_ds, dim, selection.bins)
        elif name == "pearson":
            numeric = real_ds.schema.numeric_measurement_indices
            if len(numeric) < 2:
                logger.warning("⚠️ Fewer than two numeric measurements; Pearson CDF skipped")
                continue
            real_r, _ = pearson_correlations(real_ds, numeric[0], numeric[1])
            synth = pearson_cdf(synth_ds, numeric[0], numeric[1])
            result = MetricResult(
                name="pearson",
                scalar=wasserstein1(real_r, synth.curve[0]),
                curve=synth.curve,
                details={**synth.details, "real_values": np.sort(real_r).tolist()},
            )
        else:
            result = memorization_check(synth_ds, real_ds, selection.memorization_k).to_metric()
        logger.log_metric(result.name, result.scalar)
        results.append(result)
    return results
