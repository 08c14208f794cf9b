"""
Orthogonalized Gnanadesikan-Kettenring (OGK) covariance.

Pairwise covariances come from the identity
    cov(x, y) = (scale(x + y)^2 - scale(x - y)^2) / 4
applied to standardized columns; the resulting matrix is made positive
semi-definite by re-estimating variances along its eigenvectors.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.stats import median_abs_deviation

from config.settings import settings
from core.dataset import Dataset
from core.errors import ContractViolation, DegenerateScaleError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OgkConfig:
    iterations: int = settings.OGK_ITERATIONS
    scale: str = "mad"
    psd_floor: float = settings.OGK_PSD_FLOOR

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ContractViolation("OGK needs at least one orthogonalization step")
        if self.psd_floor < 0:
            raise ContractViolation("psd_floor must be non-negative")
        if self.scale != "mad":
            raise ContractViolation(f"unsupported robust scale {self.scale!r}")


def _mad_scale(x: np.ndarray, axis: int = 0) -> np.ndarray:
    # scale="normal" applies the 1.4826 Gaussian consistency factor
    return median_abs_deviation(x, axis=axis, scale="normal")


def robust_scale(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 2:
        raise ContractViolation("robust_scale needs at least two observations")
    value = float(_mad_scale(x))
    if value <= 0.0:
        raise DegenerateScaleError("median absolute deviation is zero")
    return value


def gk_pairwise_cov(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ContractViolation("gk_pairwise_cov needs samples of equal length")
    sx, sy = robust_scale(x), robust_scale(y)
    u, v = x / sx, y / sy
    plus = float(_mad_scale(u + v))
    minus = float(_mad_scale(u - v))
    return 0.25 * (plus**2 - minus**2) * sx * sy


def _gk_matrix(y: np.ndarray) -> np.ndarray:
    """Pairwise GK matrix of already-standardized columns (unit diagonal)."""
    p = y.shape[1]
    plus = _mad_scale((y[:, :, None] + y[:, None, :]).reshape(y.shape[0], -1)).reshape(p, p)
    minus = _mad_scale((y[:, :, None] - y[:, None, :]).reshape(y.shape[0], -1)).reshape(p, p)
    u = 0.25 * (plus**2 - minus**2)
    u = (u + u.T) / 2.0
    np.fill_diagonal(u, 1.0)
    return u


def _ogk_step(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """One orthogonalization: returns scores z and loadings b with x = z @ b.T."""
    scales = _mad_scale(x)
    safe = np.where(scales > 0, scales, 1.0)
    y = x / safe
    u = _gk_matrix(y)
    _, vecs = linalg.eigh(u)
    z = y @ vecs
    b = np.diag(safe) @ vecs
    return z, b


def ogk_covariance(
    data: Union[Dataset, np.ndarray],
    cfg: Optional[OgkConfig] = None,
    *,
    diagnostics: Optional[Dict[str, object]] = None,
) -> np.ndarray:
    cfg = cfg or OgkConfig()
    x = data.data if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    n, p = x.shape
    if n < 2:
        raise ContractViolation("OGK needs at least two observations")

    col_scales = _mad_scale(x)
    keep: List[int] = np.flatnonzero(col_scales > 0).tolist()
    excluded = [j for j in range(p) if j not in keep]
    if excluded:
        logger.warning("OGK: excluding %d column(s) with zero robust scale: %s", len(excluded), excluded)
    if diagnostics is not None:
        diagnostics["ogk_excluded_columns"] = excluded

    out = np.zeros((p, p))
    if keep:
        z = x[:, keep]
        loadings = np.eye(len(keep))
        for _ in range(cfg.iterations):
            z, b = _ogk_step(z)
            loadings = loadings @ b
        gamma = _mad_scale(z) ** 2
        sub = loadings @ np.diag(gamma) @ loadings.T
        out[np.ix_(keep, keep)] = (sub + sub.T) / 2.0

    vals, vecs = linalg.eigh(out)
    floor = cfg.psd_floor * max(float(vals.max()), 0.0)
    if floor == 0.0:
        floor = cfg.psd_floor
    clipped = np.maximum(vals, floor)
    cov = (vecs * clipped) @ vecs.T
    return (cov + cov.T) / 2.0
