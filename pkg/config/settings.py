import os
from pathlib import Path
from typing import Dict, Any, Optional

from dotenv import load_dotenv

load_dotenv()


class NetSynthSettings:
    """Centralized configuration management for netsynth runs"""

    VERSION = "1.0.0"

    # Environment Configuration
    ENVIRONMENT = os.getenv("NETSYNTH_ENV", "development")
    SEED = os.getenv("NETSYNTH_SEED")

    # Compute Configuration
    NUM_THREADS = int(os.getenv("NUM_THREADS", "1"))

    # Logging Configuration
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
    LOG_DIR = os.getenv("LOG_DIR", "logs")
    LOG_TO_FILE = os.getenv("LOG_TO_FILE", "true").lower() == "true"

    # I/O Configuration
    RETRY_COUNT = int(os.getenv("RETRY_COUNT", "3"))
    RETRY_DELAY = float(os.getenv("RETRY_DELAY", "0.5"))

    # Output Configuration
    OUTPUT_DIR = os.getenv("OUTPUT_DIR", "runs")
    PLOT_FORMAT = os.getenv("PLOT_FORMAT", "svg")
    CHECKPOINT_EVERY = int(os.getenv("CHECKPOINT_EVERY", "1000"))

    @classmethod
    def resolve_seed(cls, explicit: Optional[int] = None) -> int:
        """Pick the run seed: explicit value, then NETSYNTH_SEED, then 0"""
        if explicit is not None:
            return int(explicit)
        env_seed = os.getenv("NETSYNTH_SEED", cls.SEED)
        if env_seed not in (None, ""):
            return int(env_seed)
        return 0

    @classmethod
    def get_training_defaults(cls) -> Dict[str, Any]:
        """Defaults used for TrainConfig fields that are not set explicitly"""
        return {
            "checkpoint_every": cls.CHECKPOINT_EVERY,
        }

    @classmethod
    def get_output_paths(cls, run_name: str, output_dir: Optional[str] = None) -> Dict[str, Path]:
        """Get the standard artifact locations of a run"""
        root = Path(output_dir or cls.OUTPUT_DIR) / run_name
        return {
            "root": root,
            "checkpoints": root / "checkpoints",
            "plots": root / "plots",
            "manifest": root / "manifest.json",
            "train_log": root / "train_log.csv",
            "report": root / "report.json",
        }
