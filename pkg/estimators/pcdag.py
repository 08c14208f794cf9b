from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

from config.settings import settings
from core.dagcov import EstimationResult, initial_covariance, pc_dag_estimate
from core.dataset import Dataset
from core.errors import ContractViolation, PcDagError
from core.pcalg import alpha_nesting_violations
from core.robust import OgkConfig
from estimators.registry import register

logger = logging.getLogger(__name__)


@dataclass
class PcDagEstimator:
    name: str = "pcdag"
    parameter_name: str = "alpha"
    initial: str = "mle"
    n_dags: int = settings.N_DAGS
    max_order: Optional[int] = None
    ogk_config: Optional[OgkConfig] = None
    alpha_grid: Tuple[float, ...] = tuple(settings.ALPHA_GRID)

    def default_grid(self, train: Dataset) -> List[float]:
        return list(self.alpha_grid)

    def sparser_first(self, grid: Sequence[float]) -> List[float]:
        # smaller alpha removes more edges
        return sorted(grid)

    def fit(self, train: Dataset, parameter: Optional[float], *, seed: int = 0, sigma_init=None) -> EstimationResult:
        if parameter is None:
            raise ContractViolation(f"{self.name} needs a significance level alpha")
        return pc_dag_estimate(
            train,
            parameter,
            n_dags=self.n_dags,
            initial=self.initial,
            seed=seed,
            max_order=self.max_order,
            ogk_config=self.ogk_config,
            sigma_init=sigma_init,
        )

    def fit_path(self, train: Dataset, grid: Sequence[float], *, seed: int = 0) -> List[Optional[EstimationResult]]:
        """The initial covariance does not depend on alpha, so it is computed once for the whole grid.

        Skeletons that are not nested across the grid are logged.
        """
        diagnostics: Dict[str, Any] = {}
        try:
            sigma_init = initial_covariance(train, self.initial, self.ogk_config, diagnostics)
        except PcDagError as e:
            logger.warning("%s: initial covariance failed: %s", self.name, e)
            return [None] * len(grid)
        out: List[Optional[EstimationResult]] = []
        for value in grid:
            try:
                res = self.fit(train, value, seed=seed, sigma_init=sigma_init)
            except PcDagError as e:
                logger.warning("%s fit failed at alpha=%s: %s", self.name, value, e)
                out.append(None)
                continue
            for key, item in diagnostics.items():
                res.diagnostics.setdefault(key, item)
            out.append(res)
        alpha_nesting_violations({value: res.graph for value, res in zip(grid, out) if res is not None})
        return out


@register("pcdag")
class _PcDag(PcDagEstimator):
    pass


@register("pcdag-robust")
@dataclass
class _PcDagRobust(PcDagEstimator):
    initial: str = "ogk"

