from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Sequence

import numpy as np

from core.errors import ContractViolation
from core.graph import Dag


@dataclass(frozen=True)
class Dataset:
    """n x p observation matrix with optional ground truth attached.

    ``names`` is the only place variable labels live; graphs and matrices use
    zero-based column indices.
    """

    data: np.ndarray
    sigma_true: Optional[np.ndarray] = None
    omega_true: Optional[np.ndarray] = None
    dag: Optional[Dag] = None
    names: Optional[Sequence[str]] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim != 2:
            raise ContractViolation(f"data must be a 2-d array, got {arr.ndim} dimensions")
        if not np.all(np.isfinite(arr)):
            raise ContractViolation("data contains non-finite values")
        object.__setattr__(self, "data", arr)
        if self.names is not None and len(self.names) != arr.shape[1]:
            raise ContractViolation("names must match the number of columns")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    @property
    def has_truth(self) -> bool:
        return self.sigma_true is not None

    def rows(self, index: np.ndarray) -> "Dataset":
        return replace(self, data=self.data[np.asarray(index)])

    def columns(self, index: Sequence[int]) -> "Dataset":
        """Restrict to a subset of variables; ground truth is dropped."""
        idx = list(index)
        names = [self.names[i] for i in idx] if self.names is not None else None
        return Dataset(self.data[:, idx], names=names, meta=dict(self.meta))

    def centered(self, mean: Optional[np.ndarray] = None) -> "Dataset":
        """Subtract ``mean`` (default: the column means of this data)."""
        mu = self.data.mean(axis=0) if mean is None else np.asarray(mean, dtype=float)
        return replace(self, data=self.data - mu)
