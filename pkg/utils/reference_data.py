import json
import os
from typing import Any, Dict, List, Optional

from utils.logger import logger


class ReferenceData:
    """Oracle constants and published reference numbers used by the test suites"""

    def __init__(self, data_file_path: Optional[str] = None):
        """
        Initialize ReferenceData

        Args:
            data_file_path: Path to the reference values JSON file
        """
        self.data_file_path = data_file_path or os.path.join(
            os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
            "test_data",
            "reference_values.json",
        )
        self._data: Dict[str, Any] = {}
        self._load()

    def _load(self) -> None:
        try:
            if os.path.exists(self.data_file_path):
                with open(self.data_file_path, 'r', encoding='utf-8') as file:
                    self._data = json.load(file)
                logger.info(f"✅ Reference values loaded from {self.data_file_path}")
            else:
                logger.warning(f"⚠️ Reference values file not found: {self.data_file_path}")
                self._data = {}
        except json.JSONDecodeError as e:
            logger.error(f"❌ Failed to parse reference values: {str(e)}")
            self._data = {}

    def get_oracle(self, name: str) -> Any:
        """
        Get a hand-computed oracle case by name

        Args:
            name: Key under "oracles" (e.g. "jsd_half_vs_point")

        Returns:
            The stored case, or None when missing
        """
        value = self._data.get("oracles", {}).get(name)
        if value is None:
            logger.warning(f"⚠️ Oracle '{name}' not found in reference values")
        return value

    def get_published(self, name: str) -> Any:
        """Get a published reference number (recorded, never desk-reproduced)"""
        value = self._data.get("published", {}).get(name)
        if value is None:
            logger.warning(f"⚠️ Published value '{name}' not found in reference values")
        return value

    @property
    def corpus_variants(self) -> List[str]:
        return list(self._data.get("corpus", {}))

    def get_corpus(self, variant: str = "default") -> Dict[str, Any]:
        """Get sinusoid corpus parameters for a named variant"""
        corpora = self._data.get("corpus", {})
        params = dict(corpora.get("default", {}))
        if variant != "default":
            if variant not in corpora:
                logger.warning(f"⚠️ Corpus variant '{variant}' not found in reference values")
            params.update(corpora.get(variant, {}))
        return params

    def get_threshold(self, name: str) -> Optional[float]:
        """Get an acceptance threshold"""
        return self._data.get("thresholds", {}).get(name)


# Global reference data instance
reference_data = ReferenceData()
