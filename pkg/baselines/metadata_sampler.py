from collections import Counter
from typing import Any, List, Optional, Tuple

import attrs
import numpy as np

from dataset.schema import Dataset, DataSchema
from utils.exceptions import ContractError


@attrs.frozen(eq=False)
class EmpiricalMetadataSampler:
    """
    Multinomial over observed metadata tuples, a first-records distribution and
    the empirical length distribution

    The first ``window`` records of every sample at least that long give a
    Gaussian per numeric measurement dimension and a category frequency table
    per categorical one. window=1 is the distribution of R_1.
    """

    schema: DataSchema
    tuples: Tuple[Tuple[Any, ...], ...]
    probabilities: np.ndarray
    first_mean: np.ndarray
    first_std: np.ndarray
    first_category_probs: Tuple[np.ndarray, ...]
    length_values: np.ndarray
    length_probabilities: np.ndarray
    window: int = 1

    @classmethod
    def fit(cls, ds: Dataset, window: int = 1) -> "EmpiricalMetadataSampler":
        """
        Args:
            ds: Training dataset
            window: Number of leading records modelled per sample

        Raises:
            ContractError: If ds is empty or no sample has ``window`` records
        """
        if len(ds) == 0:
            raise ContractError("cannot fit a metadata sampler on an empty dataset")
        if window < 1:
            raise ContractError(f"window must be >= 1, got {window}")
        counts = Counter(sample.metadata for sample in ds.samples)
        tuples = tuple(sorted(counts, key=lambda t: tuple(str(v) for v in t)))
        probabilities = np.array([counts[t] for t in tuples], dtype=np.float64) / len(ds)

        heads = [s.measurements[:window] for s in ds.samples if s.length >= window]
        if not heads:
            raise ContractError(f"no sample has {window} records")
        heads = np.stack(heads)
        numeric = ds.schema.numeric_measurement_indices
        category_probs = []
        for j, spec in enumerate(ds.schema.measurement_fields):
            if not spec.is_categorical:
                continue
            codes = heads[:, :, j].astype(np.int64)
            table = np.stack([np.bincount(codes[:, t], minlength=len(spec.categories)) for t in range(window)])
            category_probs.append(table / table.sum(axis=1, keepdims=True))

        lengths = Counter(int(length) for length in ds.lengths)
        length_values = np.array(sorted(lengths), dtype=np.int64)
        return cls(
            schema=ds.schema,
            tuples=tuples,
            probabilities=probabilities,
            first_mean=heads[:, :, numeric].mean(axis=0),
            first_std=heads[:, :, numeric].std(axis=0),
            first_category_probs=tuple(category_probs),
            length_values=length_values,
            length_probabilities=np.array([lengths[v] for v in length_values], dtype=np.float64) / len(ds),
            window=window,
        )

    def sample_metadata(self, n: int, rng: Optional[np.random.Generator] = None) -> List[Tuple[Any, ...]]:
        rng = rng or np.random.default_rng(0)
        picks = rng.choice(len(self.tuples), size=n, p=self.probabilities)
        return [self.tuples[i] for i in picks]

    def sample_first_records(self, n: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """n x window x K raw records; categorical dimensions hold category codes"""
        rng = rng or np.random.default_rng(0)
        records = np.zeros((n, self.window, self.schema.k), dtype=np.float64)
        numeric = self.schema.numeric_measurement_indices
        records[:, :, numeric] = rng.normal(self.first_mean, self.first_std, size=(n, self.window, len(numeric)))
        categorical = [j for j, spec in enumerate(self.schema.measurement_fields) if spec.is_categorical]
        for j, table in zip(categorical, self.first_category_probs):
            for t in range(self.window):
                records[:, t, j] = rng.choice(table.shape[1], size=n, p=table[t])
        return records

    def sample_lengths(self, n: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        rng = rng or np.random.default_rng(0)
        return rng.choice(self.length_values, size=n, p=self.length_probabilities)
