import numpy as np
import pytest

from baselines.ar import ARModel
from config.run_config import TrainConfig
from dataset.corpus import make_sinusoid_corpus
from dataset.schema import DataSchema, Dataset, FieldSpec, Sample
from evaluation.downstream import (
    PREDICTORS,
    AbabSplit,
    ClassificationTask,
    ForecastTask,
    evaluate_downstream,
    predict_eval,
    rank_correlation,
    register_predictor,
    split_abab,
    split_real,
    task_arrays,
)
from utils.exceptions import ContractError
from utils.logger import logger


class TestSplits:
    """Test suite for real-data halves and model sample splits"""

    def test_even_split_is_disjoint(self):
        """Verify 100 samples split into two disjoint halves of 50"""
        ds = make_sinusoid_corpus(n_samples=100, length=8, seed=0)

        a, a_prime = split_real(ds, seed=3)

        assert len(a) == len(a_prime) == 50, f"Unexpected split sizes {len(a)}/{len(a_prime)}"
        ids_a, ids_b = {id(s) for s in a}, {id(s) for s in a_prime}
        assert not ids_a & ids_b, "Halves share samples"
        assert len(ids_a | ids_b) == 100, "Split lost samples"

    def test_odd_split_floors_first_half(self):
        """Verify A gets floor(n/2) samples"""
        a, a_prime = split_real(make_sinusoid_corpus(n_samples=7, length=4, seed=0))

        assert (len(a), len(a_prime)) == (3, 4), f"Unexpected split sizes {len(a)}/{len(a_prime)}"

    def test_split_is_seeded(self):
        """Verify the same seed picks the same halves"""
        ds = make_sinusoid_corpus(n_samples=20, length=4, seed=0)

        assert split_real(ds, seed=5)[0].equals(split_real(ds, seed=5)[0]), "Same seed gave different halves"

    def test_too_few_samples(self):
        """Verify a single sample cannot be split"""
        with pytest.raises(ContractError):
            split_real(make_sinusoid_corpus(n_samples=1, length=4))

    def test_model_samples_match_half_sizes(self, tiny_model_config):
        """Verify B and B_prime have the sizes of A and A_prime"""
        logger.info("Testing ABAB split with an AR model")
        ds = make_sinusoid_corpus(n_samples=21, length=8, seed=1)

        split = split_abab(ds, ARModel(tiny_model_config, TrainConfig(max_batches=2), p=2), seed=0)

        assert (len(split.b), len(split.b_prime)) == (len(split.a), len(split.a_prime)), "Model sample sizes differ"
        assert split.b.schema == ds.schema, "Model samples should use the real schema"
        logger.info("✅ ABAB split verified")


class TestPredictEval:
    """Test suite for train-on-one test-on-another prediction"""

    def test_majority_accuracy_is_class_frequency(self):
        """Verify the majority classifier scores the largest class share"""
        ds = make_sinusoid_corpus(n_samples=20, length=6, class_split=0.7, seed=0)

        accuracy = predict_eval(ds, ds, "majority", ClassificationTask("class"))

        assert accuracy == pytest.approx(0.7), f"Expected accuracy 0.7, got {accuracy}"

    def test_mean_regressor_scores_zero(self):
        """Verify predicting the training mean on the same data gives R^2 = 0"""
        ds = make_sinusoid_corpus(n_samples=30, length=10, seed=2)

        r2 = predict_eval(ds, ds, "mean", ForecastTask(horizon=1))

        assert r2 == pytest.approx(0.0, abs=1e-9), f"Expected R^2 0, got {r2}"

    def test_separable_classes(self, small_corpus):
        """Verify nearest centroid separates classes 100 apart"""
        a, a_prime = split_real(small_corpus)

        accuracy = predict_eval(a, a_prime, "nearest_centroid", ClassificationTask("class"))

        assert accuracy == 1.0, f"Expected perfect accuracy, got {accuracy}"

    def test_forecast_arrays_are_right_aligned(self):
        """Verify forecast inputs keep the most recent history at the end"""
        schema = DataSchema(metadata_fields=[], measurement_fields=[FieldSpec.numeric("v")], max_length=5)
        ds = Dataset(schema, [Sample((), np.arange(5.0)), Sample((), np.arange(3.0))])

        x_train, y_train, _, _ = task_arrays(ds, ds, ForecastTask(horizon=2))

        assert x_train.tolist() == [[0.0, 1.0, 2.0], [0.0, 0.0, 0.0]], f"Unexpected inputs {x_train}"
        assert y_train.tolist() == [[3.0, 4.0], [1.0, 2.0]], f"Unexpected targets {y_train}"

    def test_unknown_or_unsupported_predictor(self, small_corpus):
        """Verify unknown predictors and unsupported task kinds are contract errors"""
        with pytest.raises(ContractError):
            predict_eval(small_corpus, small_corpus, "random_forest", ClassificationTask("class"))
        with pytest.raises(ContractError):
            predict_eval(small_corpus, small_corpus, "majority", ForecastTask(horizon=1))

    def test_invalid_horizon(self):
        """Verify a forecast horizon below 1 is rejected"""
        with pytest.raises(ContractError):
            ForecastTask(horizon=0)

    def test_registered_predictor_is_used(self, small_corpus):
        """Verify a registered predictor can be evaluated"""
        from sklearn.dummy import DummyClassifier

        register_predictor("constant_a", classifier=lambda seed: DummyClassifier(strategy="constant", constant="A"))
        try:
            accuracy = predict_eval(small_corpus, small_corpus, "constant_a", ClassificationTask("class"))
        finally:
            PREDICTORS.pop("constant_a")

        assert accuracy == pytest.approx(0.5), f"Expected accuracy 0.5, got {accuracy}"

    def test_register_needs_a_factory(self):
        """Verify a predictor without factories is rejected"""
        with pytest.raises(ContractError):
            register_predictor("nothing")


class TestRankCorrelation:
    """Test suite for predictor ranking agreement"""

    def test_swapped_pairs_match_oracle(self, reference):
        """Verify two swapped adjacent pairs give Spearman 0.8"""
        oracle = reference.get_oracle("spearman_swap_pairs")

        value = rank_correlation(oracle["a"], oracle["b"])

        assert value == pytest.approx(oracle["expected"]), f"Expected {oracle['expected']}, got {value}"

    def test_identical_and_reversed(self):
        """Verify identical rankings give 1 and reversed rankings give -1"""
        assert rank_correlation([0.1, 0.5, 0.9], [1, 2, 3]) == pytest.approx(1.0), "Same order should give 1"
        assert rank_correlation([0.1, 0.5, 0.9], [3, 2, 1]) == pytest.approx(-1.0), "Reversed order should give -1"

    def test_length_mismatch(self):
        """Verify score vectors must have equal length"""
        with pytest.raises(ContractError):
            rank_correlation([1, 2, 3], [1, 2])
        with pytest.raises(ContractError):
            rank_correlation([1], [1])


class TestEvaluateDownstream:
    """Test suite for the full downstream table"""

    @pytest.fixture(autouse=True)
    def setup_test(self, small_corpus):
        """Setup test environment"""
        a, a_prime = split_real(small_corpus, seed=0)
        self.split = AbabSplit(a=a, a_prime=a_prime, b=a, b_prime=a_prime)

    def test_real_copies_score_like_real_data(self):
        """Verify synthetic halves equal to the real halves reproduce real scores and ranking"""
        logger.info("Testing downstream evaluation on copied data")

        result = evaluate_downstream(self.split, ClassificationTask("class"), ["majority", "nearest_centroid"])

        for predictor, row in result.rows.items():
            assert row["train_real"] == row["train_synth"], f"{predictor} scores differ: {row}"
        assert result.spearman == pytest.approx(1.0), f"Expected Spearman 1, got {result.spearman}"
        assert result.to_dict()["pathway"] == "test_real", "Unexpected pathway"
        logger.info("✅ Downstream table verified")

    def test_single_predictor_has_no_ranking(self):
        """Verify one predictor gives no Spearman value"""
        result = evaluate_downstream(self.split, ClassificationTask("class"), ["majority"], pathway="test_synth")

        assert result.spearman is None, f"Expected no Spearman value, got {result.spearman}"

    def test_unknown_pathway(self):
        """Verify an unknown pathway is rejected"""
        with pytest.raises(ContractError):
            evaluate_downstream(self.split, ClassificationTask("class"), ["majority"], pathway="test_both")
