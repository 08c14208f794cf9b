"""
Synthetic models with known truth.

DAG models follow X_i = sum_{r<i} B_ir X_r + eps_i with a Bernoulli(s)
lower-triangular support and Uniform[0.1, 1] weights. Non-DAG models set
Omega = B + delta*I with 0.5 off-diagonal entries drawn with probability pi
and delta chosen so that cond(Omega) = p.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import linalg, optimize

from core.dataset import Dataset
from core.errors import ContractViolation, UnsupportedCombinationError
from core.graph import Dag

logger = logging.getLogger(__name__)

CONTAMINATION = 0.1
WEIGHT_LOW, WEIGHT_HIGH = 0.1, 1.0
DELTA_RTOL = 1e-9


class ErrorDistribution(str, enum.Enum):
    GAUSSIAN = "gaussian"
    T3_CONTAMINATED = "t3"
    CAUCHY_CONTAMINATED = "cauchy"

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        base = rng.standard_normal(size)
        if self is ErrorDistribution.GAUSSIAN:
            return base
        mask = rng.random(size) < CONTAMINATION
        if self is ErrorDistribution.T3_CONTAMINATED:
            other = rng.standard_t(3, size)
        else:
            other = rng.standard_cauchy(size)
        return np.where(mask, other, base)


@dataclass(frozen=True)
class DagModel:
    b: np.ndarray
    dag: Dag
    sigma_true: np.ndarray
    omega_true: np.ndarray

    @property
    def p(self) -> int:
        return self.b.shape[0]


@dataclass(frozen=True)
class NonDagModel:
    b: np.ndarray
    omega_true: np.ndarray
    sigma_true: np.ndarray
    delta: float
    pi: float
    degenerate: bool = False

    @property
    def p(self) -> int:
        return self.b.shape[0]


Model = Union[DagModel, NonDagModel, np.ndarray]


def condition_number(m: np.ndarray) -> float:
    """lambda_max / lambda_min; inf when the matrix is not positive definite."""
    m = np.asarray(m, dtype=float)
    if not np.allclose(m, m.T, atol=1e-10):
        raise ContractViolation("condition_number expects a symmetric matrix")
    vals = linalg.eigvalsh(m)
    if vals[0] <= 0:
        return math.inf
    return float(vals[-1] / vals[0])


def sample_dag_model(p: int, s: float, rng: np.random.Generator, *, sign_flip: bool = False) -> DagModel:
    if p < 2:
        raise ContractViolation(f"DAG model needs p >= 2, got {p}")
    if not 0.0 <= s <= 1.0:
        raise ContractViolation(f"sparsity s must lie in [0, 1], got {s}")
    support = np.tril(rng.random((p, p)) < s, k=-1)
    weights = rng.uniform(WEIGHT_LOW, WEIGHT_HIGH, size=(p, p))
    if sign_flip:
        weights *= rng.choice([-1.0, 1.0], size=(p, p))
    b = np.where(support, weights, 0.0)
    # edge r -> i iff B[i, r] != 0
    dag = Dag((b.T != 0).astype(np.int8))
    i_minus_b = np.eye(p) - b
    inv = linalg.solve_triangular(i_minus_b, np.eye(p), lower=True, unit_diagonal=True)
    sigma = inv @ inv.T
    omega = i_minus_b.T @ i_minus_b
    return DagModel(b=b, dag=dag, sigma_true=(sigma + sigma.T) / 2.0, omega_true=(omega + omega.T) / 2.0)


def _solve_delta(b: np.ndarray, p: int) -> float:
    vals = linalg.eigvalsh(b)
    lo, hi = float(vals[0]), float(vals[-1])
    delta = (hi - p * lo) / (p - 1)
    if lo + delta > 0 and math.isclose((hi + delta) / (lo + delta), p, rel_tol=1e-9):
        return delta

    def gap(d: float) -> float:
        return (hi + d) / (lo + d) - p

    logger.debug("Closed-form delta rejected; bisecting")
    left = -lo + 1e-12 * max(1.0, abs(lo))
    right = max(1.0, abs(hi))
    while gap(right) > 0:
        right *= 2.0
    return float(optimize.bisect(gap, left, right, rtol=DELTA_RTOL, maxiter=500))


def sample_nondag_model(p: int, pi: float, rng: np.random.Generator) -> NonDagModel:
    if p < 2:
        raise ContractViolation(f"non-DAG model needs p >= 2, got {p}")
    if not 0.0 <= pi <= 1.0:
        raise ContractViolation(f"pi must lie in [0, 1], got {pi}")
    upper = np.triu(rng.random((p, p)) < pi, k=1) * 0.5
    b = upper + upper.T
    if not np.any(b):
        logger.warning("Non-DAG draw has no off-diagonal entries; returning the identity")
        eye = np.eye(p)
        return NonDagModel(b=b, omega_true=eye, sigma_true=eye.copy(), delta=1.0, pi=pi, degenerate=True)
    delta = _solve_delta(b, p)
    omega = b + delta * np.eye(p)
    sigma = linalg.inv(omega)
    return NonDagModel(b=b, omega_true=omega, sigma_true=(sigma + sigma.T) / 2.0, delta=delta, pi=pi)


def sample_data(
    model: Model,
    n: int,
    err: ErrorDistribution = ErrorDistribution.GAUSSIAN,
    *,
    rng: np.random.Generator,
) -> Dataset:
    if n < 1:
        raise ContractViolation(f"n must be at least 1, got {n}")
    err = ErrorDistribution(err)
    if isinstance(model, DagModel):
        eps = err.draw(rng, (model.p, n))
        # (I - B) X^T = eps^T, lower triangular
        x = linalg.solve_triangular(np.eye(model.p) - model.b, eps, lower=True, unit_diagonal=True).T
        return Dataset(x, sigma_true=model.sigma_true, omega_true=model.omega_true, dag=model.dag)

    if err is not ErrorDistribution.GAUSSIAN:
        raise UnsupportedCombinationError("contaminated errors are only defined for DAG models")
    if isinstance(model, NonDagModel):
        sigma, omega = model.sigma_true, model.omega_true
    else:
        sigma = np.asarray(model, dtype=float)
        omega = linalg.inv(sigma)
    factor = linalg.cholesky(sigma, lower=True)
    x = rng.standard_normal((n, sigma.shape[0])) @ factor.T
    return Dataset(x, sigma_true=sigma, omega_true=(omega + omega.T) / 2.0)
