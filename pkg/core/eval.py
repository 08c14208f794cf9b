"""
Losses, validation-set tuning and k-fold cross-validation.

The Monte-Carlo benchmark built on top of these lives in
``workers/benchmark_worker.py``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg
from sklearn.model_selection import KFold

from core.dagcov import EstimationResult
from core.dataset import Dataset
from core.errors import ContractViolation, LossUndefinedError, PcDagError, TuningError

logger = logging.getLogger(__name__)

NONZERO_TOL = 1e-8
CV_CURVE_COLUMNS = ["parameter", "mean_neg_loglik", "mean_nonzero", "log_mean_nonzero"]


def _square(m: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractViolation(f"{what} must be a square matrix")
    return m


def _logdet_pd(m: np.ndarray, what: str) -> float:
    try:
        c, _ = linalg.cho_factor(m)
    except linalg.LinAlgError as e:
        raise LossUndefinedError(f"{what} is not positive definite") from e
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def kl_loss(sigma_true: np.ndarray, omega_hat: np.ndarray) -> float:
    """tr(Sigma Omega_hat) - log det(Sigma Omega_hat) - p."""
    sigma_true = _square(sigma_true, "sigma_true")
    omega_hat = _square(omega_hat, "omega_hat")
    if sigma_true.shape != omega_hat.shape:
        raise ContractViolation(f"shape mismatch: {sigma_true.shape} vs {omega_hat.shape}")
    logdet = _logdet_pd((omega_hat + omega_hat.T) / 2.0, "omega_hat") + _logdet_pd(sigma_true, "sigma_true")
    value = float(np.sum(sigma_true * omega_hat.T)) - logdet - sigma_true.shape[0]
    return max(value, 0.0)


def frobenius_diff(m1: np.ndarray, m2: np.ndarray) -> float:
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    if m1.shape != m2.shape:
        raise ContractViolation(f"shape mismatch: {m1.shape} vs {m2.shape}")
    return float(np.linalg.norm(m1 - m2))


def neg_gauss_loglik(omega_hat: np.ndarray, data: Union[Dataset, np.ndarray]) -> float:
    """Gaussian negative log-likelihood of already-centered data under precision ``omega_hat``."""
    omega_hat = _square(omega_hat, "omega_hat")
    x = data.data if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    n, p = x.shape
    if p != omega_hat.shape[0]:
        raise ContractViolation(f"data has {p} columns, precision is {omega_hat.shape[0]}x{omega_hat.shape[0]}")
    logdet = _logdet_pd((omega_hat + omega_hat.T) / 2.0, "omega_hat")
    s = x.T @ x / n
    return 0.5 * n * (-logdet + float(np.sum(s * omega_hat))) + 0.5 * n * p * math.log(2.0 * math.pi)


def nonzero_count(omega: np.ndarray, tol: float = NONZERO_TOL) -> int:
    """Entries with |value| > tol, diagonal included."""
    return int(np.count_nonzero(np.abs(np.asarray(omega, dtype=float)) > tol))


def dedupe_grid(grid: Sequence[float]) -> List[float]:
    seen: List[float] = []
    for value in grid:
        value = float(value)
        if value in seen:
            logger.warning("Dropping duplicate grid value %s", value)
            continue
        seen.append(value)
    return seen


@dataclass
class TuningResult:
    best: float
    best_fit: EstimationResult
    # grid value -> validation score (nan for failed fits)
    scores: Dict[float, float] = field(default_factory=dict)
    fits: Dict[float, Optional[EstimationResult]] = field(default_factory=dict)
    failed: List[float] = field(default_factory=list)


def tune_by_validation(
    train: Dataset,
    valid: Dataset,
    method,
    grid: Optional[Sequence[float]] = None,
    *,
    seed: int = 0,
) -> TuningResult:
    """Fit ``method`` on ``train`` over ``grid`` and pick the value with the smallest validation loss.

    The validation split is centered with the training mean. Grid values are
    scanned sparsest first and a later value must be strictly better to win,
    so ties go to the sparser fit. Failed fits are recorded, never selected.
    """
    from estimators.registry import resolve

    est = resolve(method)
    values = dedupe_grid(est.default_grid(train) if grid is None else grid)
    if not values:
        raise ContractViolation("tuning grid is empty")
    ordered = est.sparser_first(values)
    valid_c = valid.centered(train.data.mean(axis=0))

    fits = est.fit_path(train, ordered, seed=seed)
    result_scores: Dict[float, float] = {}
    result_fits: Dict[float, Optional[EstimationResult]] = {}
    failed: List[float] = []
    best: Optional[Tuple[float, EstimationResult, float]] = None
    for value, fit in zip(ordered, fits):
        result_fits[value] = fit
        if fit is None:
            failed.append(value)
            result_scores[value] = math.nan
            continue
        try:
            score = neg_gauss_loglik(fit.omega, valid_c)
        except PcDagError as e:
            logger.warning("%s: validation loss undefined at %s=%s: %s", est.name, est.parameter_name, value, e)
            failed.append(value)
            result_scores[value] = math.nan
            continue
        result_scores[value] = score
        if best is None or score < best[2]:
            best = (value, fit, score)
    if best is None:
        raise TuningError(f"every {est.name} fit failed on the grid {values}")
    return TuningResult(best=best[0], best_fit=best[1], scores=result_scores, fits=result_fits, failed=failed)


def _fold_splits(n: int, folds: int, seed: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    if folds < 2:
        raise ContractViolation(f"k-fold CV needs at least 2 folds, got {folds}")
    if n < folds:
        raise ContractViolation(f"k-fold CV needs n >= k, got n={n}, k={folds}")
    splits = list(KFold(n_splits=folds, shuffle=True, random_state=seed).split(np.zeros((n, 1))))
    for train_idx, _ in splits:
        if train_idx.size < 2:
            raise ContractViolation("every training split needs at least 2 rows")
    return splits


def _cv_scores(data: Dataset, folds: int, method, parameter: Optional[float], seed: int) -> Tuple[List[float], List[int]]:
    from estimators.registry import resolve

    est = resolve(method)
    scores: List[float] = []
    nonzeros: List[int] = []
    for train_idx, test_idx in _fold_splits(data.n, folds, seed):
        train = data.rows(train_idx)
        mean = train.data.mean(axis=0)
        fit = est.fit(train.centered(mean), parameter, seed=seed)
        scores.append(neg_gauss_loglik(fit.omega, data.rows(test_idx).centered(mean)))
        nonzeros.append(fit.nonzero)
    return scores, nonzeros


def kfold_cv_loglik(data: Dataset, folds: int, method, parameter: Optional[float], *, seed: int = 0) -> float:
    """Mean held-out negative log-likelihood over ``folds`` shuffled folds."""
    scores, _ = _cv_scores(data, folds, method, parameter, seed)
    return float(np.mean(scores))


def kfold_cv_curve(data: Dataset, folds: int, method, grid: Sequence[float], *, seed: int = 0) -> pd.DataFrame:
    """One row per grid value: mean held-out loss and mean nonzero count of the fold fits.

    A grid value whose fits fail gets NaN entries.
    """
    values = dedupe_grid(grid)
    if not values:
        raise ContractViolation("CV grid is empty")
    rows = []
    for value in values:
        try:
            scores, nonzeros = _cv_scores(data, folds, method, value, seed)
        except ContractViolation:
            raise
        except PcDagError as e:
            logger.warning("CV failed at parameter %s: %s", value, e)
            rows.append({"parameter": value, "mean_neg_loglik": math.nan, "mean_nonzero": math.nan, "log_mean_nonzero": math.nan})
            continue
        mean_nz = float(np.mean(nonzeros))
        rows.append(
            {
                "parameter": value,
                "mean_neg_loglik": float(np.mean(scores)),
                "mean_nonzero": mean_nz,
                "log_mean_nonzero": math.log(mean_nz),
            }
        )
    return pd.DataFrame(rows, columns=CV_CURVE_COLUMNS)
