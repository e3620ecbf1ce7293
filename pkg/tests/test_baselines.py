import numpy as np
import pytest
import torch

from baselines.ar import ARModel, ar_windows, fit_ar
from baselines.base import SynthesisModel
from baselines.hmm import HMMModel, fit_hmm
from baselines.metadata_sampler import EmpiricalMetadataSampler
from baselines.naive_gan import FlatGenerator, NaiveGANModel, fit_naive_gan
from baselines.registry import MODEL_NAMES, create_model, load_model
from baselines.rnn import RNNModel, fit_rnn_tf
from config.run_config import ModelConfig, RunConfig, TrainConfig
from dataset.corpus import make_sinusoid_corpus
from dataset.preprocess import EncodingLayout
from dataset.schema import DataSchema, Dataset, FieldSpec, Sample
from gan.doppelganger import DoppelGANgerModel
from utils.exceptions import CheckpointError, ContractError
from utils.logger import logger


def _two_level_corpus(n_samples=20, length=40, seed=0):
    """Series that sit at 0 for a stretch and then jump to 10, with small noise"""
    rng = np.random.default_rng(seed)
    schema = DataSchema(
        metadata_fields=[FieldSpec.categorical("class", ["A"])],
        measurement_fields=[FieldSpec.numeric("value")],
        max_length=length,
    )
    samples = []
    for _ in range(n_samples):
        switch = int(rng.integers(5, length - 5))
        levels = np.where(np.arange(length) < switch, 0.0, 10.0)
        samples.append(Sample(("A",), levels + rng.normal(0.0, 0.1, size=length)))
    return Dataset(schema, samples)


class TestAutoregressive:
    """Test suite for the AR-MLP baseline"""

    @pytest.fixture(autouse=True)
    def setup_test(self, small_corpus, tiny_model_config, reference):
        """Setup test environment"""
        self.corpus = small_corpus
        self.config = tiny_model_config
        self.oracle = reference.get_oracle("ar_windows")

    def test_window_count_matches_oracle(self):
        """Verify p=3 on a 56-step series yields 53 training targets"""
        length, p = self.oracle["length"], self.oracle["p"]
        metadata = np.zeros((1, 2))
        measurements = np.arange(length, dtype=np.float64).reshape(1, length, 1)

        inputs, targets, skipped = ar_windows(metadata, measurements, np.array([length]), p)

        assert len(targets) == self.oracle["targets"], f"Expected {self.oracle['targets']} targets, got {len(targets)}"
        assert skipped == 0, f"No sample should be skipped, got {skipped}"
        assert inputs[0, 2:].tolist() == [2.0, 1.0, 0.0], f"History should be most recent first, got {inputs[0, 2:]}"
        assert targets[0, 0] == 3.0, f"First target should be step 3, got {targets[0, 0]}"

    def test_short_samples_are_skipped(self):
        """Verify samples no longer than p contribute no windows"""
        _, targets, skipped = ar_windows(np.zeros((2, 1)), np.zeros((2, 5, 1)), np.array([3, 5]), 3)

        assert skipped == 1, f"Expected 1 skipped sample, got {skipped}"
        assert len(targets) == 2, f"Expected 2 targets, got {len(targets)}"

    def test_one_step_predictions(self):
        """Verify AR(1) predicts every window of the corpus in raw units"""
        logger.info("Testing AR(1) one-step predictions")
        model = fit_ar(self.corpus, p=1, model_cfg=self.config, train_cfg=TrainConfig(max_batches=20))

        predicted, previous, actual = model.one_step_predictions(self.corpus)

        expected_rows = len(self.corpus) * (self.corpus.schema.max_length - 1)
        assert predicted.shape == (expected_rows, 1), f"Unexpected prediction shape {predicted.shape}"
        assert previous.shape == actual.shape == predicted.shape, "Prediction arrays disagree in shape"
        assert np.all(np.isfinite(predicted)), "Predictions are not finite"
        low, high = min(s.measurements.min() for s in self.corpus), max(s.measurements.max() for s in self.corpus)
        assert predicted.min() >= low - 1e-9 and predicted.max() <= high + 1e-9, "Predictions leave the data range"
        logger.info("✅ AR(1) predictions verified")

    def test_sample_lengths_follow_training_data(self):
        """Verify AR samples use the empirical lengths"""
        corpus = make_sinusoid_corpus(n_samples=20, lengths=[6, 10], seed=2)
        model = ARModel(self.config, TrainConfig(max_batches=2), p=2).fit(corpus)

        ds = model.sample(8, seed=0)

        assert set(ds.lengths) <= {6, 10}, f"Unexpected lengths {set(ds.lengths)}"

    def test_invalid_order(self):
        """Verify p < 1 is rejected"""
        with pytest.raises(ContractError):
            ARModel(p=0)


class TestRecurrent:
    """Test suite for the teacher-forced RNN baseline"""

    def test_generated_length_and_range(self, small_corpus, tiny_model_config):
        """Verify free-running generation emits exactly the requested lengths"""
        model = fit_rnn_tf(small_corpus, tiny_model_config, TrainConfig(epochs=1))
        rows = [("A",), ("B",)]

        sequences = model.generate_sequences(rows, np.array([3, 14]), np.random.default_rng(0))

        assert [len(s) for s in sequences] == [3, 14], f"Unexpected lengths {[len(s) for s in sequences]}"
        assert len(model.epoch_losses) == 1, f"Expected one epoch loss, got {model.epoch_losses}"
        assert model.sample(4, seed=0).schema == small_corpus.schema, "Samples should use the training schema"


class TestHiddenMarkov:
    """Test suite for the Gaussian HMM baseline"""

    @pytest.fixture(autouse=True)
    def setup_test(self):
        """Setup test environment"""
        self.corpus = _two_level_corpus()

    def test_two_state_means_are_recovered(self):
        """Verify a two-state HMM finds the levels 0 and 10"""
        logger.info("Testing HMM state recovery")

        model = fit_hmm(self.corpus, n_states=2, train_cfg=TrainConfig(seed=0), max_iter=50)

        means = np.sort(model.state_means.reshape(-1))
        assert np.allclose(means, [0.0, 10.0], atol=0.1), f"Unexpected state means {means}"
        logger.info(f"✅ Recovered means {means}")

    def test_log_likelihood_does_not_decrease(self):
        """Verify EM log-likelihoods are non-decreasing"""
        model = fit_hmm(self.corpus, n_states=2, max_iter=20)

        steps = np.diff(model.log_likelihoods)
        assert np.all(steps >= -1e-6 * np.abs(model.log_likelihoods[1:])), (
            f"Log-likelihood decreased: {model.log_likelihoods}"
        )

    def test_single_state_mean_is_data_mean(self):
        """Verify one state reduces to the overall mean"""
        model = fit_hmm(self.corpus, n_states=1, max_iter=5)

        overall = np.concatenate([s.measurements for s in self.corpus]).mean()
        assert model.state_means[0, 0] == pytest.approx(overall, abs=1e-6), (
            f"State mean {model.state_means[0, 0]} != data mean {overall}"
        )

    def test_samples_follow_schema(self):
        """Verify sampled series use the empirical lengths and metadata"""
        model = fit_hmm(self.corpus, n_states=2, max_iter=5)

        ds = model.sample(5, seed=1)

        assert set(ds.lengths) == {40}, f"Unexpected lengths {set(ds.lengths)}"
        assert ds.metadata_column("class") == ["A"] * 5, "Unexpected metadata"

    def test_categorical_measurements_rejected(self):
        """Verify the HMM refuses categorical measurements"""
        schema = DataSchema(
            metadata_fields=[], measurement_fields=[FieldSpec.categorical("state", ["on", "off"])], max_length=2
        )
        with pytest.raises(ContractError):
            HMMModel(n_states=2).fit(Dataset(schema, [Sample((), [[0], [1]])]))

    def test_invalid_state_count(self):
        """Verify n_states < 1 is rejected"""
        with pytest.raises(ContractError):
            HMMModel(n_states=0)


class TestNaiveGAN:
    """Test suite for the flat MLP GAN baseline"""

    @pytest.fixture(autouse=True)
    def setup_test(self, small_corpus, tiny_model_config):
        """Setup test environment"""
        self.corpus = small_corpus
        self.config = tiny_model_config

    def test_generator_output_width(self):
        """Verify the flat generator emits d_A + 2K_num + T_pad(d_f + 2) values"""
        model = fit_naive_gan(self.corpus, self.config, TrainConfig(max_batches=2))
        layout = EncodingLayout.from_dataset(self.corpus)

        expected = layout.d_a + 2 * layout.k_num + layout.t_pad * (layout.d_f + 2)
        width = model.generator.mlp[-1].out_features

        assert width == expected, f"Generator output width {width} != {expected}"
        assert len(model.losses) == 2, f"Expected 2 loss records, got {len(model.losses)}"

    def test_generator_hidden_layers_default_to_four_by_200(self):
        """Verify the default flat generator has 4 hidden layers of 200 units"""
        generator = FlatGenerator(EncodingLayout.from_dataset(self.corpus), ModelConfig())

        hidden = [layer.out_features for layer in generator.mlp if isinstance(layer, torch.nn.Linear)][:-1]

        assert hidden == [200, 200, 200, 200], f"Unexpected hidden widths {hidden}"

    def test_samples_are_valid(self):
        """Verify naive GAN samples conform to the training schema"""
        model = NaiveGANModel(self.config, TrainConfig(max_batches=2)).fit(self.corpus)

        ds = model.sample(6, seed=0)

        assert len(ds) == 6, f"Expected 6 samples, got {len(ds)}"
        assert ds.lengths.max() <= self.corpus.schema.max_length, "Sample longer than max_length"


class TestMetadataSampler:
    """Test suite for the empirical metadata sampler"""

    def test_probabilities_match_frequencies(self):
        """Verify tuple probabilities are the observed frequencies"""
        schema = DataSchema(
            metadata_fields=[FieldSpec.categorical("class", ["A", "B"])],
            measurement_fields=[FieldSpec.numeric("value")],
            max_length=3,
        )
        ds = Dataset(
            schema,
            [Sample(("A",), [1.0]), Sample(("A",), [2.0, 2.0]), Sample(("A",), [3.0]), Sample(("B",), [4.0, 1.0, 0.0])],
        )

        sampler = EmpiricalMetadataSampler.fit(ds)

        assert sampler.tuples == (("A",), ("B",)), f"Unexpected tuples {sampler.tuples}"
        assert np.allclose(sampler.probabilities, [0.75, 0.25]), f"Unexpected probabilities {sampler.probabilities}"
        assert sampler.first_mean[0, 0] == pytest.approx(2.5), f"Unexpected first-record mean {sampler.first_mean}"
        assert sampler.length_values.tolist() == [1, 2, 3], f"Unexpected lengths {sampler.length_values}"
        assert np.allclose(sampler.length_probabilities, [0.5, 0.25, 0.25]), "Unexpected length probabilities"

    def test_window_models_leading_records(self):
        """Verify a window of 2 keeps one Gaussian per leading record and skips shorter samples"""
        ds = Dataset(
            _STARTS_SCHEMA,
            [Sample(("A",), [1.0, 10.0]), Sample(("A",), [3.0, 20.0, 0.0]), Sample(("B",), [7.0])],
        )

        sampler = EmpiricalMetadataSampler.fit(ds, window=2)

        assert sampler.first_mean.shape == (2, 1), f"Unexpected mean shape {sampler.first_mean.shape}"
        assert np.allclose(sampler.first_mean[:, 0], [2.0, 15.0]), f"Unexpected means {sampler.first_mean}"
        assert np.allclose(sampler.first_std[:, 0], [1.0, 5.0]), f"Unexpected stds {sampler.first_std}"
        assert sampler.sample_first_records(5).shape == (5, 2, 1), "First records should be n x window x K"

    def test_window_longer_than_every_sample_rejected(self):
        """Verify a window no sample can fill is a contract error"""
        ds = Dataset(_STARTS_SCHEMA, [Sample(("A",), [1.0])])

        with pytest.raises(ContractError):
            EmpiricalMetadataSampler.fit(ds, window=2)

    def test_categorical_first_records_follow_frequencies(self):
        """Verify categorical first records are drawn from the observed first-record categories"""
        schema = DataSchema(
            metadata_fields=[FieldSpec.categorical("class", ["A", "B"])],
            measurement_fields=[FieldSpec.numeric("value"), FieldSpec.categorical("state", ["on", "off"])],
            max_length=2,
        )
        ds = Dataset(
            schema,
            [Sample(("A",), [[1.0, 1.0], [2.0, 0.0]])] * 3 + [Sample(("B",), [[1.0, 0.0]])],
        )

        sampler = EmpiricalMetadataSampler.fit(ds)
        codes = sampler.sample_first_records(4000, np.random.default_rng(0))[:, 0, 1]

        assert np.allclose(sampler.first_category_probs[0], [[0.25, 0.75]]), "Unexpected category table"
        assert set(np.unique(codes)) == {0.0, 1.0}, f"Unexpected codes {np.unique(codes)}"
        assert abs(np.mean(codes) - 0.75) < 0.03, f"Share of 'off' {np.mean(codes):.3f} far from 0.75"


_STARTS_SCHEMA = DataSchema(
    metadata_fields=[FieldSpec.categorical("class", ["A", "B"])],
    measurement_fields=[FieldSpec.numeric("value")],
    max_length=4,
)


def _narrow_start_corpus() -> Dataset:
    """40 series of length 4 starting near 5 inside a [0, 10] range"""
    samples = []
    for i in range(40):
        start = 4.5 + i / 40
        samples.append(Sample(("A" if i % 2 else "B",), [start, start + 0.1, start - 0.1, 10.0 * (i % 2)]))
    return Dataset(_STARTS_SCHEMA, samples)


class TestFirstRecordSeeding:
    """Test suite for baselines seeding their first records from the metadata sampler"""

    @pytest.fixture(autouse=True)
    def setup_test(self, tiny_model_config):
        """Setup test environment"""
        self.corpus = _narrow_start_corpus()
        self.config = tiny_model_config

    def _assert_follows(self, values: np.ndarray, mean: float, std: float):
        assert abs(values.mean() - mean) < 0.03, f"First-record mean {values.mean():.4f} != sampler mean {mean:.4f}"
        assert abs(values.std() - std) < 0.03, f"First-record std {values.std():.4f} != sampler std {std:.4f}"

    def test_rnn_first_records_follow_sampler(self):
        """Verify RNN series start from the sampler's first-record Gaussian"""
        logger.info("Testing RNN first records")
        model = RNNModel(self.config, TrainConfig(max_batches=1)).fit(self.corpus)

        ds = model.sample(2000, seed=0)
        firsts = np.array([s.measurements[0, 0] for s in ds.samples])

        self._assert_follows(firsts, model.sampler.first_mean[0, 0], model.sampler.first_std[0, 0])
        logger.info("✅ RNN first records follow the sampler")

    def test_ar_warmup_records_follow_sampler(self):
        """Verify the p AR warm-up records follow the sampler's per-record Gaussians"""
        model = ARModel(self.config, TrainConfig(max_batches=1), p=3).fit(self.corpus)

        ds = model.sample(2000, seed=0)

        assert model.sampler.window == 3, f"AR sampler window {model.sampler.window} != p"
        for t in range(3):
            values = np.array([s.measurements[t, 0] for s in ds.samples])
            self._assert_follows(values, model.sampler.first_mean[t, 0], model.sampler.first_std[t, 0])


class TestRegistry:
    """Test suite for model selection and persistence"""

    def test_every_name_builds_its_model(self):
        """Verify each model name maps to its class"""
        expected = {
            "doppelganger": DoppelGANgerModel,
            "ar": ARModel,
            "rnn": RNNModel,
            "hmm": HMMModel,
            "naive_gan": NaiveGANModel,
        }
        assert set(MODEL_NAMES) == set(expected), f"Unexpected model names {MODEL_NAMES}"
        for name, cls in expected.items():
            model = create_model(RunConfig(model=name, ar_order=2, hmm_states=4))
            assert isinstance(model, cls), f"{name} built {type(model).__name__}"
        assert create_model(RunConfig(model="ar", ar_order=2)).p == 2, "ar_order not passed through"
        assert create_model(RunConfig(model="hmm", hmm_states=4)).n_states == 4, "hmm_states not passed through"

    def test_saved_baseline_reloads(self, tmp_path, small_corpus, tiny_model_config):
        """Verify a pickled baseline samples identically after reload"""
        model = ARModel(tiny_model_config, TrainConfig(max_batches=2), p=2).fit(small_corpus)
        path = model.save(tmp_path / "ar.pkl")

        reloaded = load_model(path)

        assert isinstance(reloaded, SynthesisModel), f"Unexpected type {type(reloaded)}"
        assert reloaded.sample(3, seed=0).equals(model.sample(3, seed=0)), "Reloaded model samples differently"

    def test_missing_model_file(self, tmp_path):
        """Verify a missing model file is a checkpoint error"""
        with pytest.raises(CheckpointError):
            load_model(tmp_path / "absent.pkl")

    def test_sampling_before_fit(self):
        """Verify sample() before fit() is a contract error"""
        with pytest.raises(ContractError):
            ARModel().sample(2)
