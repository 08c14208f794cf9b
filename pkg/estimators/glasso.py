from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from config.settings import settings
from core.dagcov import EstimationResult, initial_covariance
from core.dataset import Dataset
from core.errors import ContractViolation, PcDagError, PositiveDefinitenessError
from core.glasso import GlassoConfig, GlassoSolution, glasso_fit, glasso_kkt_residual, glasso_path, lambda_grid
from core.robust import OgkConfig
from estimators.registry import register

logger = logging.getLogger(__name__)


@dataclass
class GlassoEstimator:
    name: str = "glasso"
    parameter_name: str = "lambda"
    initial: str = "mle"
    tol: float = settings.GLASSO_TOL
    max_iter: int = settings.GLASSO_MAX_ITER
    ogk_config: Optional[OgkConfig] = None
    grid_size: int = settings.LAMBDA_GRID_SIZE
    grid_ratio: float = settings.LAMBDA_GRID_RATIO
    penalize_diagonal: bool = False

    def _config(self, lam: float) -> GlassoConfig:
        return GlassoConfig(lam=lam, tol=self.tol, max_iter=self.max_iter, penalize_diagonal=self.penalize_diagonal)

    def _input(self, train: Dataset, diagnostics: Dict[str, Any]) -> np.ndarray:
        return initial_covariance(train, self.initial, self.ogk_config, diagnostics)

    def default_grid(self, train: Dataset) -> List[float]:
        return lambda_grid(self._input(train, {}), self.grid_size, self.grid_ratio)

    def sparser_first(self, grid: Sequence[float]) -> List[float]:
        return sorted(grid, reverse=True)

    def _result(self, s: np.ndarray, sol: GlassoSolution, diagnostics: Dict[str, Any]) -> EstimationResult:
        if not np.all(np.isfinite(sol.omega)) or np.linalg.eigvalsh(sol.omega).min() <= 0:
            raise PositiveDefinitenessError(f"glasso precision is not positive definite at lambda={sol.lam}")
        diag = dict(diagnostics)
        diag.update(
            {
                "initial": self.initial,
                "n_iter": sol.n_iter,
                "converged": sol.converged,
                "penalize_diagonal": self.penalize_diagonal,
                "kkt_residual": glasso_kkt_residual(s, sol.lam, sol.omega, sol.sigma, penalize_diagonal=self.penalize_diagonal),
            }
        )
        return EstimationResult(
            sigma=sol.sigma,
            omega=sol.omega,
            method=self.name,
            tuning=sol.lam,
            diagnostics=diag,
        )

    def fit(self, train: Dataset, parameter: Optional[float], *, seed: int = 0) -> EstimationResult:
        if parameter is None:
            raise ContractViolation(f"{self.name} needs a penalty lambda")
        diagnostics: Dict[str, Any] = {}
        s = self._input(train, diagnostics)
        sol = glasso_fit(s, self._config(parameter))
        return self._result(s, sol, diagnostics)

    def fit_path(self, train: Dataset, grid: Sequence[float], *, seed: int = 0) -> List[Optional[EstimationResult]]:
        """Warm-started path from the largest lambda down; results follow the order of ``grid``."""
        diagnostics: Dict[str, Any] = {}
        try:
            s = self._input(train, diagnostics)
            path = glasso_path(s, list(grid), self._config(0.0))
        except PcDagError as e:
            logger.warning("%s path failed: %s", self.name, e)
            return [None] * len(grid)
        out: List[Optional[EstimationResult]] = []
        for sol in path:
            try:
                out.append(self._result(s, sol, diagnostics))
            except PcDagError as e:
                logger.warning("%s fit failed at lambda=%s: %s", self.name, sol.lam, e)
                out.append(None)
        return out


@register("glasso")
class _Glasso(GlassoEstimator):
    pass


@register("glasso-robust")
@dataclass
class _GlassoRobust(GlassoEstimator):
    initial: str = "ogk"
