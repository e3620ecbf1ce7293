import os
from datetime import datetime
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from config.settings import NetSynthSettings  # noqa: E402
from utils.logger import logger  # noqa: E402


class FigureCapture:
    """Writes line, histogram and CDF plots of evaluation results into a run directory"""

    def __init__(self, plot_dir: str, plot_format: Optional[str] = None):
        self.plot_dir = plot_dir
        self.plot_format = plot_format or NetSynthSettings.PLOT_FORMAT
        self._ensure_plot_dir()

    def _ensure_plot_dir(self):
        if not os.path.exists(self.plot_dir):
            os.makedirs(self.plot_dir)
            logger.info(f"Created plot directory: {self.plot_dir}")

    def _path(self, name: str) -> str:
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        clean_name = name.replace(" ", "_").replace(":", "_").replace("/", "_")
        return os.path.join(self.plot_dir, f"{clean_name}_{timestamp}.{self.plot_format}")

    def _save(self, fig, name: str) -> str:
        filepath = self._path(name)
        try:
            fig.savefig(filepath, format=self.plot_format)
            logger.log_artifact("plot", filepath)
            return filepath
        finally:
            plt.close(fig)

    def capture_curves(
        self,
        name: str,
        curves: Dict[str, Sequence[float]],
        x: Optional[Sequence[float]] = None,
        xlabel: str = "lag",
        ylabel: str = "value",
    ) -> str:
        """
        Plot several named curves on one axis (e.g. real vs synthetic autocorrelation)

        Returns:
            Path to the written plot file
        """
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, ys in curves.items():
            xs = x if x is not None and len(x) == len(ys) else np.arange(len(ys))
            ax.plot(xs, ys, label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend()
        ax.set_title(name)
        return self._save(fig, name)

    def capture_histograms(
        self, name: str, edges: Sequence[float], counts: Dict[str, Sequence[float]], xlabel: str = "value"
    ) -> str:
        """Overlay step histograms that share bin edges"""
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, values in counts.items():
            total = float(np.sum(values)) or 1.0
            ax.stairs(np.asarray(values, dtype=float) / total, edges, label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("frequency")
        ax.legend()
        ax.set_title(name)
        return self._save(fig, name)

    def capture_cdfs(self, name: str, samples: Dict[str, Sequence[float]], xlabel: str = "value") -> str:
        """Empirical CDFs of several samples"""
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, values in samples.items():
            ordered = np.sort(np.asarray(values, dtype=float))
            if ordered.size == 0:
                continue
            ax.step(ordered, np.arange(1, ordered.size + 1) / ordered.size, where="post", label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("CDF")
        ax.legend()
        ax.set_title(name)
        return self._save(fig, name)
