import numpy as np
import pytest

from config.run_config import ALL_METRICS, EvalSelection
from dataset.schema import DataSchema, Dataset, FieldSpec, Sample
from evaluation.fidelity import (
    MetricResult,
    autocorr_mse,
    autocorrelation,
    conditional_wasserstein1,
    curve_mse,
    jsd,
    length_histogram,
    length_jsd,
    memorization_check,
    metadata_histogram,
    metadata_jsd,
    midpoint_jsd,
    pearson_cdf,
    range_midpoints,
    run_fidelity_suite,
    series_autocorrelation,
    wasserstein1,
)
from utils.exceptions import ContractError
from utils.logger import logger


def _series_dataset(series, metadata=None, k=1):
    fields = [FieldSpec.numeric(f"m{j}") for j in range(k)]
    max_length = max(len(s) for s in series)
    schema = DataSchema(
        metadata_fields=[FieldSpec.categorical("class", ["A", "B"])],
        measurement_fields=fields,
        max_length=max_length,
    )
    metadata = metadata or ["A"] * len(series)
    return Dataset(schema, [Sample((m,), np.asarray(s, dtype=np.float64)) for m, s in zip(metadata, series)])


class TestDistances:
    """Test suite for W1 and JSD"""

    @pytest.fixture(autouse=True)
    def setup_test(self, reference):
        """Setup test environment"""
        self.reference = reference

    def test_w1_matches_oracle(self):
        """Verify W1({0,0,1}, {0,1,1}) = 1/3"""
        oracle = self.reference.get_oracle("w1_small")

        value = wasserstein1(oracle["a"], oracle["b"])

        assert value == pytest.approx(oracle["expected"], abs=1e-12), f"Expected {oracle['expected']}, got {value}"

    def test_w1_point_masses(self):
        """Verify W1 between two point masses is their distance"""
        assert wasserstein1([0.0], [1.0]) == pytest.approx(1.0), "W1 of {0} and {1} should be 1"
        assert wasserstein1([2.0, 2.0, 2.0], [2.0]) == 0.0, "Identical supports should give 0"

    def test_w1_rejects_empty(self):
        """Verify empty samples are rejected"""
        with pytest.raises(ContractError):
            wasserstein1([], [1.0])

    def test_jsd_matches_oracle(self):
        """Verify JSD([0.5, 0.5], [1, 0]) in bits"""
        oracle = self.reference.get_oracle("jsd_half_vs_point")

        value = jsd(oracle["p"], oracle["q"])

        assert value == pytest.approx(oracle["expected"], abs=1e-9), f"Expected {oracle['expected']}, got {value}"

    def test_jsd_bounds(self):
        """Verify identical histograms give 0 and disjoint ones give 1"""
        assert jsd([3, 1], [6, 2]) == pytest.approx(0.0, abs=1e-12), "Proportional histograms should give 0"
        assert jsd([1, 0], [0, 1]) == pytest.approx(1.0), "Disjoint histograms should give 1"

    def test_jsd_contract_errors(self):
        """Verify mismatched bins and empty histograms are rejected"""
        with pytest.raises(ContractError):
            jsd([1, 1], [1, 1, 1])
        with pytest.raises(ContractError):
            jsd([0, 0], [1, 1])


class TestAutocorrelation:
    """Test suite for autocorrelation curves"""

    @pytest.fixture(autouse=True)
    def setup_test(self, reference):
        """Setup test environment"""
        self.reference = reference
        self.sine = np.sin(2 * np.pi * np.arange(70) / 7.0)

    def test_periodic_series_peaks_at_period(self):
        """Verify a period-7 sine has rho(0) = 1 and rho(7) close to 1"""
        logger.info("Testing autocorrelation of a sine")

        rho = series_autocorrelation(self.sine, 14)

        assert rho[0] == pytest.approx(1.0), f"rho(0) should be 1, got {rho[0]}"
        assert rho[7] >= 0.99, f"rho(7) should be near 1, got {rho[7]}"
        assert rho[7] > rho[3], "Lag 7 should beat the half-period lag"
        logger.info(f"✅ rho(7) = {rho[7]:.4f}")

    def test_matches_direct_double_loop(self):
        """Verify the vectorized curve against an explicit double loop"""
        x = np.random.default_rng(0).normal(size=30)
        centered = x - x.mean()
        variance = np.sum(centered ** 2) / len(x)
        direct = [
            sum(centered[t] * centered[t + lag] for t in range(len(x) - lag)) / (len(x) - lag) / variance
            for lag in range(11)
        ]

        assert np.allclose(series_autocorrelation(x, 10), direct, atol=1e-9), "Vectorized curve differs from loop"

    def test_offset_curve_mse(self):
        """Verify a constant 0.1 offset over 100 lags gives MSE 0.01"""
        oracle = self.reference.get_oracle("autocorr_offset_mse")
        real = np.linspace(1.0, 0.0, oracle["lags"] + 1)

        value = curve_mse(real, real + oracle["offset"])

        assert value == pytest.approx(oracle["expected"]), f"Expected {oracle['expected']}, got {value}"

    def test_mean_curve_and_identical_mse(self):
        """Verify the dataset curve averages samples and identical data has zero MSE"""
        ds = _series_dataset([self.sine, -self.sine, np.roll(self.sine, 2)])

        result = autocorrelation(ds, 10)

        assert result.curve[0].tolist() == list(range(11)), f"Unexpected lags {result.curve[0]}"
        assert result.curve[1][7] >= 0.99, f"Mean rho(7) should be near 1, got {result.curve[1][7]}"
        assert autocorr_mse(ds, ds, 10) == 0.0, "Identical datasets should have zero autocorrelation MSE"

    def test_constant_series_are_excluded(self):
        """Verify zero-variance series are skipped and counted"""
        ds = _series_dataset([self.sine, np.full(70, 3.0)])

        result = autocorrelation(ds, 5)

        assert result.details["excluded"] == 1, f"Expected 1 excluded series, got {result.details['excluded']}"
        assert np.allclose(result.curve[1], series_autocorrelation(self.sine, 5)), "Constant series leaked into curve"

    def test_all_constant_is_contract_error(self):
        """Verify a dataset of flat series has no autocorrelation"""
        with pytest.raises(ContractError):
            autocorrelation(_series_dataset([np.zeros(5), np.ones(5)]), 2)

    def test_max_lag_truncated_to_shortest_series(self):
        """Verify max_lag beyond the shortest series is truncated"""
        ds = _series_dataset([self.sine[:10], self.sine])

        result = autocorrelation(ds, 28)

        assert result.details["max_lag"] == 9, f"Expected truncation to 9, got {result.details['max_lag']}"
        assert len(result.curve[1]) == 10, f"Expected 10 lags, got {len(result.curve[1])}"


class TestHistograms:
    """Test suite for length, metadata and midpoint histograms"""

    def test_equal_lengths_fill_one_bin(self):
        """Verify 56-step series occupy a single length bin"""
        ds = _series_dataset([np.arange(56.0)] * 4)

        counts = length_histogram(ds).histogram[1]

        assert np.count_nonzero(counts) == 1 and counts.sum() == 4, f"Unexpected counts {counts}"
        assert length_jsd(ds, ds).scalar == pytest.approx(0.0, abs=1e-12), "Identical lengths should give JSD 0"

    def test_empty_dataset_is_contract_error(self):
        """Verify histograms of empty datasets are rejected"""
        ds = _series_dataset([np.arange(3.0)])
        with pytest.raises(ContractError):
            length_histogram(ds.subset([]))

    def test_categorical_metadata_counts(self):
        """Verify per-category counts and the JSD of disjoint class mixes"""
        real = _series_dataset([np.arange(3.0)] * 3, metadata=["A", "A", "A"])
        synth = _series_dataset([np.arange(3.0)] * 2, metadata=["B", "B"])

        counts = metadata_histogram(real, "class").histogram[1]

        assert counts.tolist() == [3.0, 0.0], f"Unexpected counts {counts}"
        assert metadata_jsd(real, synth, "class").scalar == pytest.approx(1.0), "Disjoint classes should give JSD 1"

    def test_constant_midpoint(self):
        """Verify flat series at 5 have midpoint 5 and zero midpoint JSD against themselves"""
        ds = _series_dataset([np.full(6, 5.0), np.full(3, 5.0)])

        assert range_midpoints(ds).tolist() == [5.0, 5.0], f"Unexpected midpoints {range_midpoints(ds)}"
        result = midpoint_jsd(ds, ds, bins=10)
        assert result.scalar == pytest.approx(0.0, abs=1e-12), f"Expected JSD 0, got {result.scalar}"
        assert np.count_nonzero(result.histogram[1]) == 1, "Midpoints should share one bin"


class TestCorrelationAndMemorization:
    """Test suite for Pearson CDFs and nearest-neighbor memorization checks"""

    def test_pearson_of_linear_pairs(self):
        """Verify perfectly linear pairs give correlations of +1 and -1"""
        x = np.arange(8.0)
        ds = _series_dataset([np.column_stack([x, 2 * x + 1]), np.column_stack([x, -x])], k=2)

        result = pearson_cdf(ds, 0, 1)

        assert np.allclose(result.curve[0], [-1.0, 1.0]), f"Unexpected correlations {result.curve[0]}"
        assert result.curve[1].tolist() == [0.5, 1.0], f"Unexpected CDF {result.curve[1]}"

    def test_copied_training_data_has_zero_distance(self):
        """Verify synthetic copies of training samples are found at distance 0"""
        logger.info("Testing memorization check on copied samples")
        rng = np.random.default_rng(0)
        train = _series_dataset([rng.normal(size=n) for n in (5, 8, 8, 3)])

        neighbors = memorization_check(train, train, k=2)

        assert neighbors.indices[:, 0].tolist() == [0, 1, 2, 3], f"Unexpected neighbors {neighbors.indices}"
        assert np.allclose(neighbors.min_distances, 0.0, atol=1e-9), f"Copies should be at distance 0: {neighbors.min_distances}"
        assert neighbors.to_metric().scalar == pytest.approx(0.0, abs=1e-9), "Memorization scalar should be the smallest distance"
        logger.info("✅ Copies detected")

    def test_nearest_neighbor_matches_brute_force(self):
        """Verify k=1 neighbors against an explicit search over zero-padded series"""
        rng = np.random.default_rng(1)
        train = _series_dataset([rng.normal(size=n) for n in (4, 6, 6, 2, 5)])
        synth = _series_dataset([rng.normal(size=n) for n in (6, 3, 4)])

        neighbors = memorization_check(synth, train, k=1)

        def padded(s):
            out = np.zeros(6)
            out[: s.length] = s.measurements[:, 0]
            return out

        for i, s in enumerate(synth):
            dists = [np.sum((padded(s) - padded(t)) ** 2) for t in train]
            assert neighbors.indices[i, 0] == int(np.argmin(dists)), f"Wrong neighbor for synthetic sample {i}"
            assert neighbors.distances[i, 0] == pytest.approx(min(dists)), f"Wrong distance for synthetic sample {i}"

    def test_k_out_of_range(self):
        """Verify k must be within the training set size"""
        train = _series_dataset([np.arange(3.0)])
        with pytest.raises(ContractError):
            memorization_check(train, train, k=2)


class TestFidelitySuite:
    """Test suite for metric selection and results"""

    @pytest.fixture(autouse=True)
    def setup_test(self, small_corpus):
        """Setup test environment"""
        self.corpus = small_corpus

    def test_metric_result_needs_payload(self):
        """Verify a metric with no scalar, curve or histogram is rejected"""
        with pytest.raises(ContractError):
            MetricResult(name="empty")

    def test_metric_result_dict_round_trip(self):
        """Verify metric results survive their dict form"""
        metric = MetricResult(name="x", scalar=0.5, curve=([0, 1], [1.0, 0.2]), details={"k": 1})

        restored = MetricResult.from_dict(metric.to_dict())

        assert restored.to_dict() == metric.to_dict(), "Metric changed through to_dict/from_dict"

    def test_selected_metrics_only(self):
        """Verify exactly the requested metrics are computed"""
        results = run_fidelity_suite(self.corpus, self.corpus, EvalSelection(metrics=("autocorr", "w1")))

        assert [r.name for r in results] == ["autocorr", "w1"], f"Unexpected metrics {[r.name for r in results]}"

    def test_identical_data_scores_perfectly(self):
        """Verify every metric reports no difference between a corpus and itself"""
        logger.info("Testing full fidelity suite on identical data")

        results = {r.name: r for r in run_fidelity_suite(self.corpus, self.corpus)}

        expected = [m for m in ALL_METRICS if m != "pearson"]
        assert list(results) == expected, f"Unexpected metrics {list(results)}"
        for name in ("autocorr", "w1", "conditional_w1", "memorization"):
            assert results[name].scalar == pytest.approx(0.0, abs=1e-9), f"{name} should be 0, got {results[name].scalar}"
        for name in ("length", "metadata", "midpoint"):
            assert results[name].scalar == pytest.approx(0.0, abs=1e-12), f"{name} JSD should be 0"
        logger.info("✅ Identical data scores perfectly")

    def test_conditional_w1_per_category(self):
        """Verify conditional W1 averages over categories present on both sides"""
        real = _series_dataset([np.ones(2), np.full(2, 3.0)], metadata=["A", "B"])
        synth = _series_dataset([np.full(2, 2.0), np.full(2, 3.0)], metadata=["A", "B"])

        result = conditional_wasserstein1(real, synth, "class")

        assert result.details["per_category"] == {"A": 2.0, "B": 0.0}, f"Unexpected {result.details}"
        assert result.scalar == pytest.approx(1.0), f"Expected mean 1.0, got {result.scalar}"
