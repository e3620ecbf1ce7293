import hashlib
import random
from pathlib import Path
from typing import Iterable, Union

import numpy as np
import torch

from config.settings import NetSynthSettings
from utils.logger import logger


def seed_everything(seed: int) -> np.random.Generator:
    """Seed python, numpy and torch; returns a numpy Generator for the run."""
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)
    torch.set_num_threads(NetSynthSettings.NUM_THREADS)
    logger.debug(f"Seeded run with {seed} ({NetSynthSettings.NUM_THREADS} torch threads)")
    return np.random.default_rng(seed)


def dataset_hash(root_path: Union[str, Path]) -> str:
    """sha256 over the files of a dataset directory, in name order; a single file hashes alone."""
    root = Path(root_path)
    digest = hashlib.sha256()
    files = [root] if root.is_file() else sorted(p for p in root.iterdir() if p.is_file())
    for path in files:
        digest.update(path.name.encode("utf-8"))
        digest.update(path.read_bytes())
    return digest.hexdigest()


def parameter_digest(parameters: Iterable[torch.Tensor]) -> str:
    """sha256 of raw parameter bytes; equal digests mean bit-identical weights."""
    digest = hashlib.sha256()
    for tensor in parameters:
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()
