from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from core.dagcov import EstimationResult, sample_covariance
from core.dataset import Dataset
from core.errors import PositiveDefinitenessError
from estimators.base import fit_each
from estimators.registry import register


@register("diagonal")
@dataclass
class DiagonalEstimator:
    """Diagonal sample variances; the sanity baseline for cross-validation."""

    name: str = "diagonal"
    parameter_name: str = ""

    def default_grid(self, train: Dataset) -> List[float]:
        return [0.0]

    def sparser_first(self, grid: Sequence[float]) -> List[float]:
        return list(grid)

    def fit(self, train: Dataset, parameter: Optional[float] = None, *, seed: int = 0) -> EstimationResult:
        var = np.diag(sample_covariance(train)).copy()
        if np.any(var <= 0):
            raise PositiveDefinitenessError("diagonal estimator needs positive sample variances")
        return EstimationResult(sigma=np.diag(var), omega=np.diag(1.0 / var), method=self.name, tuning=parameter)

    def fit_path(self, train: Dataset, grid: Sequence[float], *, seed: int = 0) -> List[Optional[EstimationResult]]:
        return fit_each(self, train, grid, seed=seed)
