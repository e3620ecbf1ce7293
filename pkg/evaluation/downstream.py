"""
Use-case evaluations: train-on-synthetic / test-on-real prediction and
ranking preservation of predictors between real and synthetic data.
"""
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import attrs
import numpy as np
from scipy.stats import spearmanr
from sklearn.dummy import DummyClassifier, DummyRegressor
from sklearn.kernel_ridge import KernelRidge
from sklearn.linear_model import LinearRegression, LogisticRegression
from sklearn.metrics import accuracy_score, r2_score
from sklearn.neighbors import NearestCentroid
from sklearn.neural_network import MLPClassifier, MLPRegressor

from baselines.base import SynthesisModel
from dataset.schema import Dataset
from utils.exceptions import ContractError
from utils.logger import logger

PredictorFactory = Callable[[int], object]


@attrs.frozen
class PredictorSpec:
    classifier: Optional[PredictorFactory] = None
    regressor: Optional[PredictorFactory] = None


PREDICTORS: Dict[str, PredictorSpec] = {
    "logistic_regression": PredictorSpec(classifier=lambda seed: LogisticRegression(max_iter=1000)),
    "mlp": PredictorSpec(
        classifier=lambda seed: MLPClassifier(hidden_layer_sizes=(100,), max_iter=500, random_state=seed),
        regressor=lambda seed: MLPRegressor(hidden_layer_sizes=(100,), max_iter=500, random_state=seed),
    ),
    "nearest_centroid": PredictorSpec(classifier=lambda seed: NearestCentroid()),
    "majority": PredictorSpec(classifier=lambda seed: DummyClassifier(strategy="most_frequent")),
    "linear_regression": PredictorSpec(regressor=lambda seed: LinearRegression()),
    "kernel_ridge": PredictorSpec(regressor=lambda seed: KernelRidge(kernel="rbf")),
    "mean": PredictorSpec(regressor=lambda seed: DummyRegressor(strategy="mean")),
}


def register_predictor(
    name: str, classifier: Optional[PredictorFactory] = None, regressor: Optional[PredictorFactory] = None
) -> None:
    """Add a predictor; factories take a seed and return an sklearn-style estimator"""
    if classifier is None and regressor is None:
        raise ContractError(f"predictor '{name}' needs a classifier or a regressor factory")
    PREDICTORS[name] = PredictorSpec(classifier=classifier, regressor=regressor)


@attrs.frozen
class ClassificationTask:
    """Predict a categorical metadata field from the zero-padded measurement series"""

    field: str
    kind = "classification"


@attrs.frozen
class ForecastTask:
    """Predict the last `horizon` steps of a numeric dimension from the steps before them"""

    horizon: int
    dim: Union[int, str] = 0
    kind = "regression"

    def __attrs_post_init__(self):
        if self.horizon < 1:
            raise ContractError(f"forecast horizon must be >= 1, got {self.horizon}")


Task = Union[ClassificationTask, ForecastTask]


@attrs.frozen(eq=False)
class AbabSplit:
    """Real halves A (train) / A_prime (test) and model samples B / B_prime of matching sizes"""

    a: Dataset
    a_prime: Dataset
    b: Dataset
    b_prime: Dataset


def split_real(real_ds: Dataset, seed: int = 0) -> Tuple[Dataset, Dataset]:
    if len(real_ds) < 2:
        raise ContractError(f"need at least 2 real samples to split, got {len(real_ds)}")
    order = np.random.default_rng(seed).permutation(len(real_ds))
    half = len(real_ds) // 2
    return real_ds.subset(np.sort(order[:half])), real_ds.subset(np.sort(order[half:]))


def split_abab(real_ds: Dataset, model: SynthesisModel, seed: int = 0) -> AbabSplit:
    """Split real data 50/50, fit the model on A and draw B and B_prime from it"""
    a, a_prime = split_real(real_ds, seed)
    model.fit(a)
    logger.info(f"Sampling B ({len(a)}) and B' ({len(a_prime)}) from {model.name}")
    return AbabSplit(a=a, a_prime=a_prime, b=model.sample(len(a), seed=seed), b_prime=model.sample(len(a_prime), seed=seed + 1))


def _padded_features(ds: Dataset, steps: int) -> np.ndarray:
    features = np.zeros((len(ds), steps * ds.schema.k), dtype=np.float64)
    for i, sample in enumerate(ds):
        values = sample.measurements[:steps].reshape(-1)
        features[i, : values.size] = values
    return features


def task_arrays(train_ds: Dataset, test_ds: Dataset, task: Task):
    """(x_train, y_train, x_test, y_test) of a task over two datasets"""
    if isinstance(task, ClassificationTask):
        steps = int(max(train_ds.lengths.max(), test_ds.lengths.max()))
        return (
            _padded_features(train_ds, steps),
            np.asarray(train_ds.metadata_column(task.field), dtype=object).astype(str),
            _padded_features(test_ds, steps),
            np.asarray(test_ds.metadata_column(task.field), dtype=object).astype(str),
        )

    def split(ds: Dataset, history: int):
        series = [x for x in ds.measurement_series(task.dim) if len(x) > task.horizon]
        if len(series) < len(ds):
            logger.warning(f"⚠️ Skipped {len(ds) - len(series)} samples not longer than horizon {task.horizon}")
        x = np.zeros((len(series), history))
        y = np.zeros((len(series), task.horizon))
        for i, values in enumerate(series):
            past = values[: len(values) - task.horizon][-history:]
            x[i, history - len(past):] = past
            y[i] = values[len(values) - task.horizon:]
        return x, y

    history = int(max(train_ds.lengths.max(), test_ds.lengths.max())) - task.horizon
    if history < 1:
        raise ContractError(f"horizon {task.horizon} leaves no history to forecast from")
    x_train, y_train = split(train_ds, history)
    x_test, y_test = split(test_ds, history)
    return x_train, y_train, x_test, y_test


def r_squared(y_true, y_pred) -> float:
    """Coefficient of determination over all predicted values"""
    return float(r2_score(np.asarray(y_true, dtype=np.float64).reshape(-1), np.asarray(y_pred, dtype=np.float64).reshape(-1)))


def predict_eval(trainset: Dataset, testset: Dataset, predictor_id: str, task: Task, seed: int = 0) -> float:
    """
    Fit a predictor on trainset and score it on testset

    Returns:
        Test accuracy for a ClassificationTask, R^2 for a ForecastTask
    """
    spec = PREDICTORS.get(predictor_id)
    if spec is None:
        raise ContractError(f"unknown predictor '{predictor_id}', expected one of {', '.join(sorted(PREDICTORS))}")
    factory = spec.classifier if task.kind == "classification" else spec.regressor
    if factory is None:
        raise ContractError(f"predictor '{predictor_id}' does not support {task.kind}")
    x_train, y_train, x_test, y_test = task_arrays(trainset, testset, task)
    if len(x_train) == 0 or len(x_test) == 0:
        raise ContractError("task leaves no training or test examples")

    estimator = factory(seed)
    estimator.fit(x_train, y_train)
    predicted = estimator.predict(x_test)
    if task.kind == "classification":
        return float(accuracy_score(y_test, predicted))
    return r_squared(y_test, predicted)


def rank_correlation(real_scores: Sequence[float], synth_scores: Sequence[float]) -> float:
    """Spearman rank correlation, ties get their average rank"""
    real = np.asarray(real_scores, dtype=np.float64)
    synth = np.asarray(synth_scores, dtype=np.float64)
    if real.shape != synth.shape:
        raise ContractError(f"score vectors differ in length: {real.size} vs {synth.size}")
    if real.size < 2:
        raise ContractError("rank correlation needs at least 2 scores")
    return float(spearmanr(real, synth)[0])


@attrs.frozen
class DownstreamResult:
    """Predictor scores trained on real and on synthetic data plus their rank agreement"""

    task: str
    pathway: str
    rows: Dict[str, Dict[str, float]]
    spearman: Optional[float]

    def to_dict(self) -> dict:
        return attrs.asdict(self)


def evaluate_downstream(
    split: AbabSplit, task: Task, predictors: Sequence[str], pathway: str = "test_real", seed: int = 0
) -> DownstreamResult:
    """
    Score every predictor trained on A and on B

    pathway "test_real" tests both on A_prime; "test_synth" tests the
    synthetic-trained predictor on B_prime instead.
    """
    if pathway not in ("test_real", "test_synth"):
        raise ContractError(f"unknown pathway '{pathway}'")
    synth_test = split.a_prime if pathway == "test_real" else split.b_prime
    rows: Dict[str, Dict[str, float]] = {}
    for predictor in predictors:
        rows[predictor] = {
            "train_real": predict_eval(split.a, split.a_prime, predictor, task, seed),
            "train_synth": predict_eval(split.b, synth_test, predictor, task, seed),
        }
        logger.log_metric(f"{predictor} ({task.kind})", rows[predictor])
    spearman = None
    if len(predictors) >= 2:
        spearman = rank_correlation(
            [rows[p]["train_real"] for p in predictors], [rows[p]["train_synth"] for p in predictors]
        )
    return DownstreamResult(task=task.kind, pathway=pathway, rows=rows, spearman=spearman)
