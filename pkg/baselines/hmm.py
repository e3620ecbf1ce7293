"""Gaussian-emission HMM baseline; metadata is sampled independently of the chain."""
import copy
from typing import List, Optional

import numpy as np
from hmmlearn.hmm import GaussianHMM

from baselines.base import SynthesisModel
from baselines.metadata_sampler import EmpiricalMetadataSampler
from config.run_config import ModelConfig, TrainConfig
from dataset.schema import Dataset, Sample
from utils.exceptions import ContractError
from utils.logger import logger


class HMMModel(SynthesisModel):
    name = "hmm"

    def __init__(
        self,
        model_cfg: Optional[ModelConfig] = None,
        train_cfg: Optional[TrainConfig] = None,
        n_states: int = 10,
        max_iter: int = 100,
        tol: float = 1e-4,
    ):
        super().__init__(model_cfg, train_cfg)
        if n_states < 1:
            raise ContractError(f"n_states must be >= 1, got {n_states}")
        self.n_states = n_states
        self.max_iter = max_iter
        self.tol = tol
        self.hmm: Optional[GaussianHMM] = None
        self.sampler = None
        self.log_likelihoods: List[float] = []
        self.converged = False

    @property
    def state_means(self) -> np.ndarray:
        return self.hmm.means_

    def _fit(self, ds: Dataset) -> None:
        if ds.schema.numeric_measurement_indices != list(range(ds.schema.k)):
            raise ContractError("the HMM baseline supports numeric measurements only")
        self.sampler = EmpiricalMetadataSampler.fit(ds)
        X = np.concatenate([s.measurements for s in ds.samples])
        lengths = [s.length for s in ds.samples]

        # one EM iteration per fit() call so every likelihood is kept
        model = GaussianHMM(
            n_components=self.n_states,
            covariance_type="diag",
            covars_prior=0.0,
            n_iter=1,
            tol=0.0,
            random_state=self.train_cfg.seed,
            init_params="stmc",
            params="stmc",
        )
        best, best_score = None, -np.inf
        for iteration in range(self.max_iter):
            previous = copy.deepcopy(model)
            try:
                model.fit(X, lengths)
            except ValueError as e:
                logger.warning(f"⚠️ EM stopped at iteration {iteration}: {e}")
                model = previous
                break
            score = float(model.monitor_.history[-1])
            self.log_likelihoods.append(score)
            if iteration > 0 and score > best_score:
                best, best_score = previous, score
            model.init_params = ""
            if len(self.log_likelihoods) > 1 and self.log_likelihoods[-1] - self.log_likelihoods[-2] < self.tol:
                self.converged = True
                break

        final_score = float(model.score(X, lengths))
        if final_score >= best_score or best is None:
            best, best_score = model, final_score
        self.log_likelihoods.append(final_score)
        self.hmm = best
        if not self.converged:
            logger.warning(
                f"⚠️ EM did not converge within {self.max_iter} iterations; keeping best log-likelihood {best_score:.4f}"
            )
        logger.info(f"HMM with {self.n_states} states fitted, log-likelihood {best_score:.4f}")

    def _sample(self, n: int, seed: int) -> Dataset:
        rng = np.random.default_rng(seed)
        metadata_rows = self.sampler.sample_metadata(n, rng)
        lengths = self.sampler.sample_lengths(n, rng)
        samples = []
        for meta, length in zip(metadata_rows, lengths):
            values, _ = self.hmm.sample(int(length), random_state=int(rng.integers(2 ** 31 - 1)))
            samples.append(Sample(metadata=meta, measurements=values))
        return Dataset(self.schema, samples)


def fit_hmm(
    ds: Dataset,
    n_states: int = 10,
    train_cfg: Optional[TrainConfig] = None,
    max_iter: int = 100,
    tol: float = 1e-4,
) -> HMMModel:
    """Fit the HMM baseline by expectation-maximization"""
    return HMMModel(train_cfg=train_cfg, n_states=n_states, max_iter=max_iter, tol=tol).fit(ds)
