"""
Graphical lasso by block coordinate descent.

Minimises  -log det(Omega) + tr(S Omega) + lam * sum_{i != j} |Omega_ij|
(diagonal unpenalised) over positive definite Omega. Each outer sweep updates
one row/column of the working covariance W = Omega^-1 at a time by solving a
lasso problem with coordinate descent.

With ``penalize_diagonal`` the penalty runs over all entries, as in the
original glasso program; the diagonal of W is then pinned at S_ii + lam.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from config.settings import settings
from core.errors import ContractViolation

logger = logging.getLogger(__name__)

INNER_TOL = 1e-10
INNER_MAX_ITER = 1000
MONOTONE_SLACK = 1e-9


@dataclass(frozen=True)
class GlassoConfig:
    lam: float
    tol: float = settings.GLASSO_TOL
    max_iter: int = settings.GLASSO_MAX_ITER
    penalize_diagonal: bool = False

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ContractViolation(f"lambda must be non-negative, got {self.lam}")
        if self.tol <= 0:
            raise ContractViolation("tol must be positive")
        if self.max_iter < 1:
            raise ContractViolation("max_iter must be at least 1")


@dataclass
class GlassoSolution:
    sigma: np.ndarray
    omega: np.ndarray
    lam: float
    n_iter: int
    converged: bool
    objectives: List[float] = field(default_factory=list)
    # per-column lasso coefficients, reused as a warm start
    coefs: Optional[np.ndarray] = None


def _check_input(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ContractViolation("glasso input must be a square matrix")
    if not np.allclose(s, s.T, atol=1e-10 * max(1.0, float(np.abs(s).max()))):
        raise ContractViolation("glasso input must be symmetric")
    if np.any(np.diag(s) <= 0):
        raise ContractViolation("glasso input must have a positive diagonal")
    return (s + s.T) / 2.0


def lambda_max(s: np.ndarray) -> float:
    """Smallest penalty giving a diagonal solution: max_{i<j} |S_ij|."""
    s = np.asarray(s, dtype=float)
    if s.shape[0] < 2:
        return 0.0
    return float(np.max(np.abs(s[np.triu_indices(s.shape[0], k=1)])))


def lambda_grid(
    s: np.ndarray,
    size: int = settings.LAMBDA_GRID_SIZE,
    ratio: float = settings.LAMBDA_GRID_RATIO,
) -> List[float]:
    """Geometric grid from lambda_max down to ratio * lambda_max, largest first."""
    top = lambda_max(s)
    if top <= 0:
        return [0.0]
    return [float(v) for v in np.geomspace(top, top * ratio, num=size)]


def penalized_objective(s: np.ndarray, omega: np.ndarray, lam: float, penalize_diagonal: bool = False) -> float:
    sign, logdet = np.linalg.slogdet(omega)
    if sign <= 0:
        return float("inf")
    penalty = np.abs(omega).sum()
    if not penalize_diagonal:
        penalty -= np.abs(np.diag(omega)).sum()
    return float(-logdet + np.trace(s @ omega) + lam * penalty)


def _lasso_cd(w11: np.ndarray, s12: np.ndarray, lam: float, beta: np.ndarray) -> np.ndarray:
    """min_b 1/2 b'W11 b - b's12 + lam*|b|_1 by cyclic coordinate descent."""
    grad = w11 @ beta
    diag = np.diag(w11)
    scale = max(float(np.abs(s12).max()), 1e-300)
    for _ in range(INNER_MAX_ITER):
        max_step = 0.0
        for k in range(beta.shape[0]):
            old = beta[k]
            r = s12[k] - grad[k] + diag[k] * old
            new = np.sign(r) * max(abs(r) - lam, 0.0) / diag[k]
            if new != old:
                grad += w11[:, k] * (new - old)
                beta[k] = new
                max_step = max(max_step, abs(new - old) * diag[k])
        if max_step <= INNER_TOL * scale:
            break
    return beta


def _omega_from(w: np.ndarray, coefs: np.ndarray) -> np.ndarray:
    p = w.shape[0]
    omega = np.zeros((p, p))
    for j in range(p):
        idx = np.arange(p) != j
        beta = coefs[j]
        theta_jj = 1.0 / (w[j, j] - w[idx, j] @ beta)
        omega[j, j] = theta_jj
        omega[idx, j] = -beta * theta_jj
    return (omega + omega.T) / 2.0


def glasso_fit(
    s: np.ndarray,
    cfg: GlassoConfig,
    *,
    warm_start: Optional[GlassoSolution] = None,
) -> GlassoSolution:
    s = _check_input(s)
    p = s.shape[0]
    ridge = cfg.lam if cfg.penalize_diagonal else 0.0
    if p == 1:
        w = s + ridge
        return GlassoSolution(sigma=w, omega=1.0 / w, lam=cfg.lam, n_iter=0, converged=True, coefs=np.zeros((1, 0)))

    if warm_start is not None and warm_start.coefs is not None:
        w = warm_start.sigma.copy()
        coefs = warm_start.coefs.copy()
    else:
        w = s.copy()
        coefs = np.zeros((p, p - 1))
    np.fill_diagonal(w, np.diag(s) + ridge)

    off = ~np.eye(p, dtype=bool)
    threshold = cfg.tol * float(np.mean(np.abs(s[off])))
    objectives: List[float] = []
    converged = False
    n_iter = 0
    for n_iter in range(1, cfg.max_iter + 1):
        w_old = w.copy()
        for j in range(p):
            idx = np.arange(p) != j
            w11 = w[np.ix_(idx, idx)]
            beta = _lasso_cd(w11, s[idx, j], cfg.lam, coefs[j])
            coefs[j] = beta
            w12 = w11 @ beta
            w[idx, j] = w12
            w[j, idx] = w12
        obj = penalized_objective(s, _omega_from(w, coefs), cfg.lam, cfg.penalize_diagonal)
        if objectives and obj > objectives[-1] + MONOTONE_SLACK * max(1.0, abs(objectives[-1])):
            logger.warning("Glasso objective increased at sweep %d (%.6g -> %.6g)", n_iter, objectives[-1], obj)
        objectives.append(obj)
        if np.mean(np.abs(w - w_old)[off]) <= threshold:
            converged = True
            break
    if not converged:
        logger.warning("Glasso did not converge in %d sweeps (lambda=%.4g)", cfg.max_iter, cfg.lam)

    omega = _omega_from(w, coefs)
    return GlassoSolution(
        sigma=(w + w.T) / 2.0,
        omega=omega,
        lam=cfg.lam,
        n_iter=n_iter,
        converged=converged,
        objectives=objectives,
        coefs=coefs,
    )


def glasso_path(s: np.ndarray, lambdas: Sequence[float], cfg: Optional[GlassoConfig] = None) -> List[GlassoSolution]:
    """Fit along ``lambdas`` from the largest value down, warm-starting each fit from the previous one.

    Solutions are returned in the order of ``lambdas``.
    """
    base = cfg or GlassoConfig(lam=0.0)
    order = sorted(range(len(lambdas)), key=lambda k: -lambdas[k])
    out: List[Optional[GlassoSolution]] = [None] * len(lambdas)
    previous: Optional[GlassoSolution] = None
    for k in order:
        sol = glasso_fit(s, dataclasses.replace(base, lam=float(lambdas[k])), warm_start=previous)
        out[k] = sol
        previous = sol
    return [sol for sol in out if sol is not None]


def glasso_kkt_residual(
    s: np.ndarray,
    lam: float,
    omega: np.ndarray,
    sigma: np.ndarray,
    zero_tol: float = 1e-10,
    penalize_diagonal: bool = False,
) -> float:
    """Largest violation of the stationarity conditions of the penalised likelihood.

    Gradient of the smooth part is S - Sigma. Off-diagonal entries with
    Omega_ij != 0 need (S - Sigma)_ij + lam*sign(Omega_ij) = 0; zero entries need
    |(S - Sigma)_ij| <= lam; diagonal entries need (S - Sigma)_ii = 0, or
    (S - Sigma)_ii + lam = 0 when the diagonal is penalised.
    """
    s = np.asarray(s, dtype=float)
    grad = s - np.asarray(sigma, dtype=float)
    omega = np.asarray(omega, dtype=float)
    p = s.shape[0]
    scale = max(float(np.abs(omega).max()), 1e-300)
    nonzero = np.abs(omega) > zero_tol * scale
    off = ~np.eye(p, dtype=bool)
    resid = np.zeros_like(grad)
    active = nonzero & off
    resid[active] = np.abs(grad[active] + lam * np.sign(omega[active]))
    inactive = ~nonzero & off
    resid[inactive] = np.maximum(np.abs(grad[inactive]) - lam, 0.0)
    resid[~off] = np.abs(np.diag(grad) + (lam if penalize_diagonal else 0.0))
    return float(resid.max()) if p else 0.0
