"""
DAG-structured covariance and precision estimation.

For a DAG with parent sets pa(i), each variable is regressed on its parents
using an initial covariance estimate. Collecting the regressions row-wise gives
A X = eps with A unit-diagonal and Cov(eps) = D diagonal, so

    Sigma   = A^-1 D A^-T
    Omega   = A^T D^-1 A

Both are computed from the sparse factors; no penalisation is involved.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg, sparse

from config.settings import settings
from core.dataset import Dataset
from core.errors import ContractViolation, InvalidCpdagError, PositiveDefinitenessError
from core.graph import Cpdag, Dag, PartiallyDirectedGraph, extend_to_dag_counted
from core.pcalg import PcDiagnostics, cov_to_corr, pc_cpdag
from core.robust import OgkConfig, ogk_covariance

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-8
INITIAL_ESTIMATORS = ("mle", "ogk")


class ParentRegression(NamedTuple):
    beta: np.ndarray
    variance: float
    pseudo_inverse: bool


@dataclass(frozen=True)
class DagLinearSystem:
    a: np.ndarray
    d: np.ndarray
    order: Tuple[int, ...]
    n_pseudo_inverse: int = 0

    def __post_init__(self) -> None:
        if not np.allclose(np.diag(self.a), 1.0):
            raise ContractViolation("regression matrix must have a unit diagonal")
        if np.any(self.d <= 0):
            raise PositiveDefinitenessError("conditional variances must be strictly positive")

    @property
    def p(self) -> int:
        return self.a.shape[0]


@dataclass
class EstimationResult:
    sigma: np.ndarray
    omega: np.ndarray
    method: str
    tuning: Optional[float]
    graph: Optional[PartiallyDirectedGraph] = None
    dags: List[Dag] = field(default_factory=list)
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.sigma = (self.sigma + self.sigma.T) / 2.0
        self.omega = (self.omega + self.omega.T) / 2.0
        from core.eval import nonzero_count

        self.diagnostics.setdefault("nonzero", nonzero_count(self.omega))
        self.diagnostics.setdefault("min_eigenvalue_omega", float(np.linalg.eigvalsh(self.omega).min()))
        self.diagnostics.setdefault("min_eigenvalue_sigma", float(np.linalg.eigvalsh(self.sigma).min()))

    @property
    def nonzero(self) -> int:
        return int(self.diagnostics["nonzero"])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "tuning": self.tuning,
            "sigma": self.sigma.tolist(),
            "omega": self.omega.tolist(),
            "graph": self.graph.to_json_dict() if self.graph is not None else None,
            "dags": [d.to_json_dict() for d in self.dags],
            "diagnostics": {k: _plain(v) for k, v in sorted(self.diagnostics.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _plain(value: Any) -> Any:
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def sample_covariance(data: Union[Dataset, np.ndarray]) -> np.ndarray:
    """Maximum-likelihood covariance (divisor n)."""
    x = data.data if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if x.shape[0] < 1:
        raise ContractViolation("sample covariance needs at least one observation")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / x.shape[0]
    return (cov + cov.T) / 2.0


def _variance_floor(sigma_init: np.ndarray) -> float:
    return VARIANCE_FLOOR * max(float(np.max(np.diag(sigma_init))), VARIANCE_FLOOR)


def regress_on_parents(sigma_init: np.ndarray, i: int, pa: Sequence[int]) -> ParentRegression:
    pa = list(pa)
    if i in pa:
        raise ContractViolation(f"node {i} cannot be its own parent")
    floor = _variance_floor(sigma_init)
    if not pa:
        return ParentRegression(np.zeros(0), max(float(sigma_init[i, i]), floor), False)
    s_pp = sigma_init[np.ix_(pa, pa)]
    s_pi = sigma_init[pa, i]
    used_pinv = False
    try:
        beta = linalg.cho_solve(linalg.cho_factor(s_pp), s_pi)
    except linalg.LinAlgError:
        logger.warning("Parent covariance of node %d is singular; using pseudo-inverse", i)
        beta = linalg.pinvh(s_pp) @ s_pi
        used_pinv = True
    variance = float(sigma_init[i, i] - beta @ s_pi)
    return ParentRegression(beta, max(variance, floor), used_pinv)


def dag_linear_system(sigma_init: np.ndarray, dag: Dag) -> DagLinearSystem:
    sigma_init = np.asarray(sigma_init, dtype=float)
    p = dag.p
    if sigma_init.shape != (p, p):
        raise ContractViolation(f"covariance shape {sigma_init.shape} does not match p={p}")
    a = np.eye(p)
    d = np.empty(p)
    n_pinv = 0
    for i in range(p):
        pa = dag.parents(i)
        reg = regress_on_parents(sigma_init, i, pa)
        if pa:
            a[i, pa] = -reg.beta
        d[i] = reg.variance
        n_pinv += int(reg.pseudo_inverse)
    return DagLinearSystem(a=a, d=d, order=dag.topological_order, n_pseudo_inverse=n_pinv)


def dag_covariance(sys: DagLinearSystem) -> Tuple[np.ndarray, np.ndarray]:
    if np.any(sys.d <= 0):
        raise PositiveDefinitenessError("conditional variances must be strictly positive")
    a_sp = sparse.csr_matrix(sys.a)
    omega = (a_sp.T @ sparse.diags(1.0 / sys.d) @ a_sp).toarray()

    # in topological order A is unit lower triangular
    order = np.asarray(sys.order)
    lower = sys.a[np.ix_(order, order)]
    factor = linalg.solve_triangular(lower, np.diag(np.sqrt(sys.d[order])), lower=True, unit_diagonal=True)
    sigma_perm = factor @ factor.T
    inverse = np.argsort(order)
    sigma = sigma_perm[np.ix_(inverse, inverse)]
    return (sigma + sigma.T) / 2.0, (omega + omega.T) / 2.0


def initial_covariance(data: Dataset, initial: str, ogk_config: Optional[OgkConfig] = None, diagnostics: Optional[dict] = None) -> np.ndarray:
    if initial == "mle":
        return sample_covariance(data)
    if initial == "ogk":
        return ogk_covariance(data, ogk_config, diagnostics=diagnostics)
    raise ContractViolation(f"unknown initial estimator {initial!r}; expected one of {INITIAL_ESTIMATORS}")


def estimate_for_dag(sigma_init: np.ndarray, dag: Dag) -> Tuple[np.ndarray, np.ndarray, int]:
    sys = dag_linear_system(sigma_init, dag)
    sigma, omega = dag_covariance(sys)
    return sigma, omega, sys.n_pseudo_inverse


def pc_dag_estimate(
    data: Dataset,
    alpha: float,
    n_dags: int = settings.N_DAGS,
    initial: str = "mle",
    *,
    seed: int = 0,
    max_order: Optional[int] = None,
    ogk_config: Optional[OgkConfig] = None,
    sigma_init: Optional[np.ndarray] = None,
) -> EstimationResult:
    """PC-DAG estimate: CPDAG via PC on the initial covariance, then the average over sampled DAG members.

    Sigma and Omega estimates are averaged separately over the ``n_dags`` extensions.
    ``sigma_init`` skips recomputing the initial covariance when the caller already has it.
    """
    if n_dags < 1:
        raise ContractViolation("n_dags must be at least 1")
    if data.n < 4:
        raise ContractViolation(f"PC-DAG needs n >= 4, got {data.n}")
    diagnostics: Dict[str, Any] = {}
    if sigma_init is None:
        sigma_init = initial_covariance(data, initial, ogk_config, diagnostics)
    pc_diag = PcDiagnostics()
    cpdag, _ = pc_cpdag(cov_to_corr(sigma_init), alpha, n=data.n, max_order=max_order, diagnostics=pc_diag)

    dags: List[Dag] = []
    sigmas: List[np.ndarray] = []
    omegas: List[np.ndarray] = []
    n_pinv = 0
    failures = 0
    attempts = 0
    if not cpdag.extendable:
        logger.warning("Estimated CPDAG has no consistent extension; skipping DAG draws")
        draws = 0
    elif cpdag.undirected_edges():
        draws = n_dags
    else:
        # a fully directed CPDAG has exactly one member
        draws = 1
    for k in range(draws):
        rng = np.random.default_rng([seed, k])
        try:
            outcome = extend_to_dag_counted(cpdag, rng)
        except InvalidCpdagError:
            failures += 1
            continue
        attempts += outcome.attempts
        sigma_k, omega_k, pinv_k = estimate_for_dag(sigma_init, outcome.dag)
        dags.append(outcome.dag)
        sigmas.append(sigma_k)
        omegas.append(omega_k)
        n_pinv += pinv_k

    fallback = not dags
    if fallback:
        logger.warning("No DAG extension of the estimated CPDAG succeeded; falling back to the empty DAG")
        empty = Dag(np.zeros((data.p, data.p), dtype=np.int8))
        sigma_k, omega_k, pinv_k = estimate_for_dag(sigma_init, empty)
        dags, sigmas, omegas = [empty], [sigma_k], [omega_k]

    sigma = np.mean(sigmas, axis=0)
    omega = np.mean(omegas, axis=0)
    diagnostics.update(pc_diag.as_dict())
    diagnostics.update(
        {
            "initial": initial,
            "n_edges": cpdag.n_edges,
            "n_undirected": len(cpdag.undirected_edges()),
            "n_dags_requested": n_dags,
            "n_dags_used": len(dags),
            "extension_failures": failures,
            "extension_attempts": attempts,
            "fallback_empty_dag": fallback,
            "n_pseudo_inverse": n_pinv,
            "inverse_deviation": float(np.max(np.abs(omega @ sigma - np.eye(data.p)))),
        }
    )
    return EstimationResult(
        sigma=sigma,
        omega=omega,
        method="pcdag" if initial == "mle" else "pcdag-robust",
        tuning=alpha,
        graph=cpdag,
        dags=dags,
        diagnostics=diagnostics,
    )
