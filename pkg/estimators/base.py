from __future__ import annotations

import logging
from typing import List, Optional, Protocol, Sequence

from core.dagcov import EstimationResult
from core.dataset import Dataset
from core.errors import PcDagError

logger = logging.getLogger(__name__)


class Estimator(Protocol):
    """A covariance/precision estimator indexed by a single tuning parameter.

    ``parameter_name`` is empty for estimators without a tuning parameter.
    """

    name: str
    parameter_name: str

    def default_grid(self, train: Dataset) -> List[float]: ...

    # grid reordered from the sparsest fit to the densest
    def sparser_first(self, grid: Sequence[float]) -> List[float]: ...

    def fit(self, train: Dataset, parameter: Optional[float], *, seed: int = 0) -> EstimationResult: ...

    def fit_path(self, train: Dataset, grid: Sequence[float], *, seed: int = 0) -> List[Optional[EstimationResult]]: ...


def fit_each(est: Estimator, train: Dataset, grid: Sequence[float], *, seed: int = 0) -> List[Optional[EstimationResult]]:
    """Fit every grid value independently; failed fits come back as None."""
    out: List[Optional[EstimationResult]] = []
    for value in grid:
        try:
            out.append(est.fit(train, value, seed=seed))
        except PcDagError as e:
            logger.warning("%s fit failed at %s=%s: %s", est.name, est.parameter_name, value, e)
            out.append(None)
    return out
