import logging
import os
from datetime import datetime
from typing import Any, Mapping

from config.settings import NetSynthSettings


class NetSynthLogger:
    """Centralized logging utility for netsynth"""

    _instance = None
    _logger = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(NetSynthLogger, cls).__new__(cls)
        return cls._instance

    def __init__(self):
        if self._logger is None:
            self._setup_logger()

    def _setup_logger(self):
        """Setup logger with file and console handlers"""
        self._logger = logging.getLogger('netsynth')
        self._logger.setLevel(logging.DEBUG)
        self._logger.propagate = False

        # Clear existing handlers
        self._logger.handlers.clear()

        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s'
        )

        if NetSynthSettings.LOG_TO_FILE:
            os.makedirs(NetSynthSettings.LOG_DIR, exist_ok=True)
            log_file = os.path.join(
                NetSynthSettings.LOG_DIR,
                f'netsynth_{datetime.now().strftime("%Y%m%d_%H%M%S")}_{os.getpid()}.log'
            )
            file_handler = logging.FileHandler(log_file, encoding='utf-8')
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(formatter)
            self._logger.addHandler(file_handler)

        console_handler = logging.StreamHandler()
        console_handler.setLevel(getattr(logging, NetSynthSettings.LOG_LEVEL, logging.INFO))
        console_handler.setFormatter(formatter)
        self._logger.addHandler(console_handler)

    # stacklevel=2 so funcName/lineno point at the caller, not this wrapper
    def info(self, message: str):
        self._logger.info(message, stacklevel=2)

    def debug(self, message: str):
        self._logger.debug(message, stacklevel=2)

    def warning(self, message: str):
        self._logger.warning(message, stacklevel=2)

    def error(self, message: str):
        self._logger.error(message, stacklevel=2)

    def critical(self, message: str):
        self._logger.critical(message, stacklevel=2)

    def log_run_start(self, command: str, seed: int):
        """Log the start of a CLI command or pipeline run"""
        self._logger.info(f"🚀 Starting {command} (seed={seed})", stacklevel=2)

    def log_run_end(self, command: str, status: str):
        """Log run end with status"""
        self._logger.info(f"✅ {command} finished with status: {status}", stacklevel=2)

    def log_train_step(self, step: int, losses: Mapping[str, float]):
        """Log a training step summary"""
        parts = ", ".join(f"{key}={value:.4f}" for key, value in losses.items())
        self._logger.debug(f"step {step}: {parts}", stacklevel=2)

    def log_metric(self, name: str, value: Any):
        """Log an evaluation metric"""
        self._logger.info(f"📊 {name}: {value}", stacklevel=2)

    def log_artifact(self, kind: str, path: str):
        """Log an artifact written to disk"""
        self._logger.info(f"💾 Wrote {kind}: {path}", stacklevel=2)


# Global logger instance
logger = NetSynthLogger()
