from pathlib import Path
from typing import Optional, Union

from baselines.ar import ARModel
from baselines.base import SynthesisModel
from baselines.hmm import HMMModel
from baselines.naive_gan import NaiveGANModel
from baselines.rnn import RNNModel
from config.run_config import RunConfig
from gan.doppelganger import DoppelGANgerModel
from utils.exceptions import CheckpointError, ContractError

MODEL_NAMES = ("doppelganger", "ar", "rnn", "hmm", "naive_gan")


def create_model(run_config: RunConfig, checkpoint_dir: Optional[Union[str, Path]] = None) -> SynthesisModel:
    """Instantiate the generator selected by run_config.model"""
    name = run_config.model
    cfg, train_cfg = run_config.network, run_config.train
    if name == "doppelganger":
        return DoppelGANgerModel(cfg, train_cfg, checkpoint_dir=checkpoint_dir)
    if name == "ar":
        return ARModel(cfg, train_cfg, p=run_config.ar_order)
    if name == "rnn":
        return RNNModel(cfg, train_cfg)
    if name == "hmm":
        return HMMModel(cfg, train_cfg, n_states=run_config.hmm_states)
    if name == "naive_gan":
        return NaiveGANModel(cfg, train_cfg)
    raise ContractError(f"unknown model '{name}', expected one of {', '.join(MODEL_NAMES)}")


def load_model(path: Union[str, Path]) -> SynthesisModel:
    """Load any saved model: .pt files are generator checkpoints, anything else a pickled baseline"""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"model file not found: {path}")
    if path.suffix == ".pt":
        return DoppelGANgerModel.load(path)
    return SynthesisModel.load(path)
