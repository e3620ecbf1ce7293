"""
Membership-inference audit of trained generators and the differential-privacy
ablation study.
"""
import hashlib
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import attrs
import numpy as np

from baselines.base import SynthesisModel
from config.run_config import DPConfig, ModelConfig, TrainConfig
from dataset.schema import Dataset
from evaluation.fidelity import MetricResult, autocorrelation, curve_mse
from gan.doppelganger import critic_scores
from gan.generation import sample
from gan.network import GeneratorBundle
from gan.training import train
from utils.exceptions import ContractError
from utils.logger import logger

Scorer = Union[GeneratorBundle, SynthesisModel, Callable[[Dataset], np.ndarray]]
PrivacyAccountant = Callable[[float, float, int, float], Optional[float]]


def no_accountant(sigma: float, clip_norm: float, steps: int, sample_rate: float) -> Optional[float]:
    """Placeholder accountant: reports no epsilon"""
    return None


def _score(scorer: Scorer, ds: Dataset) -> np.ndarray:
    if isinstance(scorer, GeneratorBundle):
        return critic_scores(scorer, ds)
    if isinstance(scorer, SynthesisModel):
        return np.asarray(scorer.score(ds), dtype=np.float64)
    return np.asarray(scorer(ds), dtype=np.float64)


def _fingerprint(sample) -> str:
    digest = hashlib.sha256(repr(tuple(sample.metadata)).encode("utf-8"))
    digest.update(np.ascontiguousarray(sample.measurements).tobytes())
    return digest.hexdigest()


def membership_attack(scorer: Scorer, members: Dataset, non_members: Dataset) -> float:
    """
    Discriminator-score membership inference

    Every sample of the pooled set is labelled "member" when its score is
    above the pooled median. Returns the fraction of correct labels; 0.5 is
    the random-guessing baseline.

    Raises:
        ContractError: If the two sets are unbalanced, empty or overlap
    """
    if len(members) != len(non_members):
        raise ContractError(f"unbalanced attack sets: {len(members)} members vs {len(non_members)} non-members")
    if len(members) == 0:
        raise ContractError("attack sets are empty")
    if {_fingerprint(s) for s in members} & {_fingerprint(s) for s in non_members}:
        raise ContractError("members and non-members share samples")

    scores = np.concatenate([_score(scorer, members), _score(scorer, non_members)])
    truth = np.concatenate([np.ones(len(members), dtype=bool), np.zeros(len(non_members), dtype=bool)])
    guessed = scores > np.median(scores)
    success = float(np.mean(guessed == truth))
    logger.log_metric("membership attack success", success)
    return success


@attrs.frozen(eq=False)
class AttackCurve:
    sizes: List[int]
    success: List[float]
    per_seed: List[List[float]]

    def to_metric(self) -> MetricResult:
        spread = [float(np.ptp(runs)) for runs in self.per_seed]
        return MetricResult(
            name="membership_attack",
            curve=(self.sizes, self.success),
            details={"per_seed": self.per_seed, "seed_spread": spread},
        )


def attack_vs_trainsize(
    corpus: Dataset,
    sizes: Sequence[int],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    seeds: Sequence[int] = (0,),
) -> AttackCurve:
    """
    Train a fresh generator per (size, seed) on `size` members and attack it
    with `size` held-out non-members; success per size is the median over seeds
    """
    if not sizes:
        raise ContractError("at least one training size is needed")
    too_large = [size for size in sizes if size < 1 or 2 * size > len(corpus)]
    if too_large:
        raise ContractError(
            f"sizes {too_large} need 2*size <= corpus size {len(corpus)} to reserve non-members"
        )
    per_seed: List[List[float]] = []
    for size in sizes:
        runs = []
        for seed in seeds:
            order = np.random.default_rng(seed).permutation(len(corpus))
            members = corpus.subset(np.sort(order[:size]))
            non_members = corpus.subset(np.sort(order[size: 2 * size]))
            bundle, _ = train(members, model_cfg, train_cfg.model_copy(update={"seed": seed}))
            runs.append(membership_attack(bundle, members, non_members))
        logger.info(f"📊 n_train={size}: attack success {runs}")
        per_seed.append(runs)
    return AttackCurve(
        sizes=[int(s) for s in sizes],
        success=[float(np.median(runs)) for runs in per_seed],
        per_seed=per_seed,
    )


@attrs.frozen(eq=False)
class DPAblationReport:
    """Autocorrelation of real data and of one DP-trained generator per noise multiplier"""

    real_curve: np.ndarray
    curves: Dict[float, np.ndarray]
    mse: Dict[float, float]
    settings: Dict[str, Any]

    def to_metrics(self) -> List[MetricResult]:
        metrics = [MetricResult(name="autocorr_real", curve=(np.arange(self.real_curve.size), self.real_curve))]
        for sigma, curve in self.curves.items():
            metrics.append(
                MetricResult(
                    name=f"autocorr_sigma_{sigma:g}",
                    scalar=self.mse[sigma],
                    curve=(np.arange(curve.size), curve),
                    details={"sigma": sigma, **self.settings},
                )
            )
        return metrics


def dp_ablation(
    corpus: Dataset,
    sigmas: Sequence[float],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    clip_norm: float = 1.0,
    max_lag: int = 28,
    n_generate: Optional[int] = None,
    accountant: PrivacyAccountant = no_accountant,
) -> DPAblationReport:
    """Train one DP generator per sigma and compare its autocorrelation with the real curve"""
    if not sigmas:
        raise ContractError("at least one noise multiplier is needed")
    real_curve = autocorrelation(corpus, max_lag).curve[1]
    n_generate = n_generate or len(corpus)
    batch_size = min(model_cfg.batch_size, len(corpus))
    steps = train_cfg.resolve_max_batches(len(corpus), model_cfg.batch_size)
    curves: Dict[float, np.ndarray] = {}
    mse: Dict[float, float] = {}
    epsilons: Dict[str, Optional[float]] = {}
    for sigma in sigmas:
        dp_cfg = train_cfg.model_copy(update={"dp": DPConfig(clip_norm=clip_norm, noise_multiplier=sigma)})
        bundle, _ = train(corpus, model_cfg, dp_cfg)
        curve = autocorrelation(sample(bundle, n_generate), max_lag).curve[1]
        curves[float(sigma)] = curve
        mse[float(sigma)] = curve_mse(real_curve, curve)
        epsilons[f"{sigma:g}"] = accountant(sigma, clip_norm, steps, batch_size / len(corpus))
        logger.info(f"🔒 sigma={sigma:g}: autocorr MSE {mse[float(sigma)]:.6f}")
    return DPAblationReport(
        real_curve=real_curve,
        curves=curves,
        mse=mse,
        settings={
            "clip_norm": clip_norm,
            "steps": steps,
            "batch_size": batch_size,
            "n": len(corpus),
            "epsilon": epsilons,
        },
    )
