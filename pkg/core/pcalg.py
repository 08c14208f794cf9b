"""
Gaussian conditional-independence testing and the two-phase PC-algorithm.

Phase one (``pc_skeleton``) starts from the complete graph and deletes edges
whose partial correlation is not significantly different from zero, recording
separation sets. Phase two (``pc_orient``) places v-structures from those sets
and closes the result under the Meek rules.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.stats import norm

from core.dataset import Dataset
from core.errors import ContractViolation, SingularConditioningError
from core.graph import Cpdag, Edge, PartiallyDirectedGraph, VStructure, meek_orient

logger = logging.getLogger(__name__)

RHO_CLAMP = 1e-12
SINGULAR_CONDITION = 1e14

IndependenceTest = Callable[[int, int, Tuple[int, ...]], bool]


@dataclass(frozen=True)
class CiTestContext:
    corr: np.ndarray
    n: int
    alpha: float
    # when set, |rho| <= oracle_tol decides independence instead of the z-test
    oracle_tol: Optional[float] = None

    def __post_init__(self) -> None:
        corr = np.asarray(self.corr, dtype=float)
        if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
            raise ContractViolation("correlation matrix must be square")
        if not np.allclose(corr, corr.T, atol=1e-10):
            raise ContractViolation("correlation matrix must be symmetric")
        if not np.allclose(np.diag(corr), 1.0, atol=1e-8):
            raise ContractViolation("correlation matrix must have a unit diagonal")
        if np.any(np.abs(corr) > 1.0 + 1e-8):
            raise ContractViolation("correlation entries must lie in [-1, 1]")
        if self.n < 2:
            raise ContractViolation(f"sample size must be at least 2, got {self.n}")
        if not 0.0 < self.alpha < 1.0:
            raise ContractViolation(f"alpha must lie in (0, 1), got {self.alpha}")
        object.__setattr__(self, "corr", corr)

    @property
    def p(self) -> int:
        return self.corr.shape[0]

    @property
    def threshold(self) -> float:
        return float(norm.ppf(1.0 - self.alpha / 2.0))


@dataclass
class SepSets:
    """Separation sets S(i, j), stored symmetrically."""

    sets: Dict[Tuple[int, int], FrozenSet[int]] = field(default_factory=dict)

    def record(self, i: int, j: int, k: Iterable[int]) -> None:
        k = frozenset(k)
        if i in k or j in k:
            raise ContractViolation(f"separation set for ({i}, {j}) contains an endpoint")
        self.sets[(i, j)] = k
        self.sets[(j, i)] = k

    def get(self, i: int, j: int) -> Optional[FrozenSet[int]]:
        return self.sets.get((i, j))

    def __contains__(self, pair: Tuple[int, int]) -> bool:
        return pair in self.sets

    def __len__(self) -> int:
        return len(self.sets) // 2


@dataclass
class PcDiagnostics:
    n_tests: int = 0
    n_singular: int = 0
    n_degenerate: int = 0
    max_level: int = 0
    n_conflicts: int = 0
    n_retries: int = 0
    invalid_cpdag: bool = False

    def as_dict(self) -> Dict[str, Union[int, bool]]:
        return dict(self.__dict__)


def cov_to_corr(sigma: np.ndarray) -> np.ndarray:
    """Rescale a covariance to unit diagonal; zero-variance columns get zero correlations."""
    sigma = np.asarray(sigma, dtype=float)
    sd = np.sqrt(np.clip(np.diag(sigma), 0.0, None))
    safe = np.where(sd > 0, sd, 1.0)
    corr = sigma / np.outer(safe, safe)
    corr[sd == 0, :] = 0.0
    corr[:, sd == 0] = 0.0
    corr = np.clip((corr + corr.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def partial_correlation(corr: np.ndarray, i: int, j: int, k: Sequence[int]) -> float:
    """rho_{i,j|K} from the inverse of the (|K|+2)-dimensional submatrix, clamped away from +-1."""
    k = list(k)
    if i == j:
        raise ContractViolation("partial correlation needs two distinct nodes")
    if i in k or j in k:
        raise ContractViolation("conditioning set must exclude i and j")
    if not k:
        rho = float(corr[i, j])
    else:
        idx = [i, j, *k]
        sub = corr[np.ix_(idx, idx)]
        if np.linalg.cond(sub) > SINGULAR_CONDITION:
            raise SingularConditioningError(f"conditioning set {k} is numerically singular for ({i}, {j})")
        try:
            prec = linalg.inv(sub)
        except linalg.LinAlgError as e:
            raise SingularConditioningError(str(e)) from e
        denom = prec[0, 0] * prec[1, 1]
        if denom <= 0:
            raise SingularConditioningError(f"non-positive precision diagonal for ({i}, {j}) given {k}")
        rho = float(-prec[0, 1] / math.sqrt(denom))
    return float(np.clip(rho, -1.0 + RHO_CLAMP, 1.0 - RHO_CLAMP))


def fisher_z(rho: float) -> float:
    if abs(rho) >= 1.0:
        raise ContractViolation(f"fisher_z is undefined for |rho| >= 1 (got {rho})")
    return 0.5 * math.log((1.0 + rho) / (1.0 - rho))


def gauss_ci_test(ctx: CiTestContext, i: int, j: int, k: Sequence[int]) -> bool:
    """True when independence of i and j given k is retained at level ctx.alpha."""
    rho = partial_correlation(ctx.corr, i, j, k)
    if ctx.oracle_tol is not None:
        return abs(rho) <= ctx.oracle_tol
    dof = ctx.n - len(k) - 3
    if dof <= 0:
        return True
    return math.sqrt(dof) * abs(fisher_z(rho)) <= ctx.threshold


def pc_skeleton(
    ctx: CiTestContext,
    max_order: Optional[int] = None,
    *,
    independence: Optional[IndependenceTest] = None,
    diagnostics: Optional[PcDiagnostics] = None,
) -> Tuple[PartiallyDirectedGraph, SepSets]:
    """Skeleton phase with lexicographic pair order and lexicographic conditioning sets.

    ``independence`` replaces the Gaussian test, e.g. with a d-separation oracle.
    """
    diag = diagnostics if diagnostics is not None else PcDiagnostics()
    p = ctx.p
    adj = np.ones((p, p), dtype=bool)
    np.fill_diagonal(adj, False)
    sepsets = SepSets()

    def _test(i: int, j: int, k: Tuple[int, ...]) -> bool:
        diag.n_tests += 1
        if independence is not None:
            return independence(i, j, k)
        if ctx.oracle_tol is None and ctx.n - len(k) - 3 <= 0:
            diag.n_degenerate += 1
        try:
            return gauss_ci_test(ctx, i, j, k)
        except SingularConditioningError:
            diag.n_singular += 1
            logger.debug("Singular conditioning set %s for pair (%d, %d); removing edge", k, i, j)
            return True

    level = 0
    while max_order is None or level <= max_order:
        any_eligible = False
        for i in range(p):
            for j in range(p):
                if i == j or not adj[i, j]:
                    continue
                candidates = [v for v in np.flatnonzero(adj[i]).tolist() if v != j]
                if len(candidates) < level:
                    continue
                any_eligible = True
                for k in combinations(candidates, level):
                    if _test(i, j, k):
                        adj[i, j] = adj[j, i] = False
                        sepsets.record(i, j, k)
                        break
        if not any_eligible:
            break
        diag.max_level = level
        logger.debug("PC level %d done, %d edges left", level, int(adj.sum()) // 2)
        level += 1
    return PartiallyDirectedGraph(adj.astype(np.int8)), sepsets


def _place_v_structures(
    skel: PartiallyDirectedGraph,
    triples: List[VStructure],
) -> Tuple[np.ndarray, Set[VStructure]]:
    """Orient i -> k <- j for each triple, first arrowhead wins. Returns the marks and the conflicting triples."""
    amat = skel.adjacency().astype(np.int8)
    conflicts: Set[VStructure] = set()
    for i, k, j in triples:
        for end in (i, j):
            if amat[end, k] and amat[k, end]:
                amat[k, end] = 0
            elif amat[k, end] and not amat[end, k]:
                # k -> end already placed; keep it
                conflicts.add((i, k, j))
    return amat, conflicts


def _candidate_v_structures(skel: PartiallyDirectedGraph, sepsets: SepSets) -> List[VStructure]:
    out: List[VStructure] = []
    p = skel.p
    for i in range(p):
        for j in range(i + 1, p):
            if skel.is_adjacent(i, j):
                continue
            sep = sepsets.get(i, j) or frozenset()
            common = sorted(set(skel.adjacent(i)) & set(skel.adjacent(j)))
            out.extend((i, k, j) for k in common if k not in sep)
    return out


def pc_orient(
    skel: PartiallyDirectedGraph,
    s: SepSets,
    *,
    diagnostics: Optional[PcDiagnostics] = None,
) -> Cpdag:
    """Orientation phase: v-structures from separation sets, then Meek closure.

    If the result admits no consistent DAG the v-structures are re-placed in
    reversed order once, then placed again without the conflicting ones. A still
    invalid result is returned as a Cpdag with ``extendable`` False.
    """
    diag = diagnostics if diagnostics is not None else PcDiagnostics()
    triples = _candidate_v_structures(skel, s)

    amat, conflicts = _place_v_structures(skel, triples)
    diag.n_conflicts += len(conflicts)
    if conflicts:
        logger.warning("%d conflicting v-structures, kept first orientations", len(conflicts))
    cpdag = Cpdag(meek_orient(PartiallyDirectedGraph(amat)).amat)
    if cpdag.extendable:
        return cpdag

    diag.n_retries += 1
    logger.warning("Estimated CPDAG is not extendable; retrying with reversed v-structure order")
    amat_rev, conflicts_rev = _place_v_structures(skel, list(reversed(triples)))
    retry = Cpdag(meek_orient(PartiallyDirectedGraph(amat_rev)).amat)
    if retry.extendable:
        return retry

    diag.n_retries += 1
    dropped = conflicts | conflicts_rev
    kept = [t for t in triples if t not in dropped]
    amat_kept, _ = _place_v_structures(skel, kept)
    final = Cpdag(meek_orient(PartiallyDirectedGraph(amat_kept)).amat)
    if not final.extendable:
        diag.invalid_cpdag = True
        logger.warning("CPDAG still not extendable after dropping %d conflicting v-structures", len(dropped))
    return final


def pc_cpdag(
    source: Union[Dataset, np.ndarray],
    alpha: float,
    *,
    n: Optional[int] = None,
    max_order: Optional[int] = None,
    diagnostics: Optional[PcDiagnostics] = None,
) -> Tuple[Cpdag, SepSets]:
    """Estimate a CPDAG from data or from a correlation (or covariance) matrix plus its sample size."""
    if isinstance(source, Dataset):
        from core.dagcov import sample_covariance

        corr = cov_to_corr(sample_covariance(source))
        n = source.n if n is None else n
    else:
        if n is None:
            raise ContractViolation("sample size n is required when passing a matrix")
        corr = cov_to_corr(source)
    if n < 4:
        raise ContractViolation(f"PC needs n >= 4, got {n}")
    ctx = CiTestContext(corr=corr, n=n, alpha=alpha)
    diag = diagnostics if diagnostics is not None else PcDiagnostics()
    skel, sepsets = pc_skeleton(ctx, max_order, diagnostics=diag)
    return pc_orient(skel, sepsets, diagnostics=diag), sepsets


def alpha_nesting_violations(
    graphs: Mapping[float, PartiallyDirectedGraph],
) -> List[Tuple[float, float, Edge]]:
    """Adjacencies present at a smaller alpha but missing at the next larger one.

    Skeleton edge sets are not guaranteed to grow with alpha, so violations are
    reported and logged, never raised.
    """
    levels = sorted(graphs)
    adjacencies = {a: {(u, v) for u, v, _ in graphs[a].edges()} for a in levels}
    out: List[Tuple[float, float, Edge]] = []
    for lo, hi in zip(levels, levels[1:]):
        for edge in sorted(adjacencies[lo] - adjacencies[hi]):
            out.append((lo, hi, edge))
    if out:
        logger.info("Skeleton not nested in alpha: %d adjacency(ies) lost, first %s", len(out), out[0])
    return out
