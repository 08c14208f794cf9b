"""
Partially directed graphs over nodes 0..p-1.

Edges are stored in a dense p x p 0/1 mark matrix ``amat``:

    amat[i, j] == 1 and amat[j, i] == 1   ->  undirected edge i - j
    amat[i, j] == 1 and amat[j, i] == 0   ->  directed edge i -> j
    amat[i, j] == 0 and amat[j, i] == 0   ->  no edge

Graph values are immutable; every operation returns a new graph.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Any, Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np

from core.errors import ContractViolation, InvalidCpdagError

logger = logging.getLogger(__name__)

UNDIRECTED = "undirected"
MAX_EXTENSION_ATTEMPTS = 100

Edge = Tuple[int, int]
VStructure = Tuple[int, int, int]


class PartiallyDirectedGraph:
    """Graph with per-pair marks: absent, undirected or directed."""

    def __init__(self, amat: np.ndarray) -> None:
        amat = np.array(amat, dtype=np.int8, copy=True)
        if amat.ndim != 2 or amat.shape[0] != amat.shape[1]:
            raise ContractViolation(f"mark matrix must be square, got shape {amat.shape}")
        if np.any((amat != 0) & (amat != 1)):
            raise ContractViolation("mark matrix entries must be 0 or 1")
        if np.any(np.diag(amat)):
            raise ContractViolation("self-edges are not allowed")
        amat.setflags(write=False)
        self._amat = amat

    # -- construction -----------------------------------------------------

    @classmethod
    def empty(cls, p: int):
        return cls(np.zeros((p, p), dtype=np.int8))

    @classmethod
    def complete(cls, p: int):
        return cls(np.ones((p, p), dtype=np.int8) - np.eye(p, dtype=np.int8))

    @classmethod
    def from_edges(
        cls,
        p: int,
        directed: Iterable[Edge] = (),
        undirected: Iterable[Edge] = (),
    ):
        amat = np.zeros((p, p), dtype=np.int8)
        for a, b in directed:
            _check_pair(p, a, b)
            if amat[a, b] or amat[b, a]:
                raise ContractViolation(f"pair ({a}, {b}) marked twice")
            amat[a, b] = 1
        for a, b in undirected:
            _check_pair(p, a, b)
            if amat[a, b] or amat[b, a]:
                raise ContractViolation(f"pair ({a}, {b}) marked twice")
            amat[a, b] = amat[b, a] = 1
        return cls(amat)

    @classmethod
    def from_json_dict(cls, payload: Dict[str, Any]):
        p = int(payload["p"])
        directed: List[Edge] = []
        undirected: List[Edge] = []
        for edge in payload.get("edges", []):
            a, b, mark = int(edge["a"]), int(edge["b"]), edge["mark"]
            if mark == UNDIRECTED:
                undirected.append((a, b))
            elif mark == "a->b":
                directed.append((a, b))
            elif mark == "b->a":
                directed.append((b, a))
            else:
                raise ContractViolation(f"unknown edge mark {mark!r}")
        return cls.from_edges(p, directed=directed, undirected=undirected)

    # -- accessors --------------------------------------------------------

    @property
    def amat(self) -> np.ndarray:
        return self._amat

    @property
    def p(self) -> int:
        return self._amat.shape[0]

    def is_adjacent(self, i: int, j: int) -> bool:
        return bool(self._amat[i, j] or self._amat[j, i])

    def is_directed(self, i: int, j: int) -> bool:
        """True iff the edge i -> j is present."""
        return bool(self._amat[i, j] and not self._amat[j, i])

    def is_undirected(self, i: int, j: int) -> bool:
        return bool(self._amat[i, j] and self._amat[j, i])

    def adjacent(self, i: int) -> List[int]:
        return np.flatnonzero(self._amat[i] | self._amat[:, i]).tolist()

    def parents(self, i: int) -> List[int]:
        return np.flatnonzero((self._amat[:, i] == 1) & (self._amat[i] == 0)).tolist()

    def children(self, i: int) -> List[int]:
        return np.flatnonzero((self._amat[i] == 1) & (self._amat[:, i] == 0)).tolist()

    def undirected_neighbors(self, i: int) -> List[int]:
        return np.flatnonzero((self._amat[i] == 1) & (self._amat[:, i] == 1)).tolist()

    def edges(self) -> Iterator[Tuple[int, int, str]]:
        """Yield (a, b, mark) for a < b with mark in {"undirected", "a->b", "b->a"}."""
        rows, cols = np.nonzero(np.triu(self._amat | self._amat.T, k=1))
        for a, b in zip(rows.tolist(), cols.tolist()):
            if self.is_undirected(a, b):
                yield a, b, UNDIRECTED
            elif self._amat[a, b]:
                yield a, b, "a->b"
            else:
                yield a, b, "b->a"

    def undirected_edges(self) -> List[Edge]:
        return [(a, b) for a, b, mark in self.edges() if mark == UNDIRECTED]

    def directed_edges(self) -> List[Edge]:
        out = []
        for a, b, mark in self.edges():
            if mark == "a->b":
                out.append((a, b))
            elif mark == "b->a":
                out.append((b, a))
        return sorted(out)

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self._amat | self._amat.T, k=1)))

    def adjacency(self) -> np.ndarray:
        """Symmetric boolean adjacency (skeleton) matrix."""
        return (self._amat | self._amat.T).astype(bool)

    def to_json_dict(self) -> Dict[str, Any]:
        return {"p": self.p, "edges": [{"a": a, "b": b, "mark": m} for a, b, m in self.edges()]}

    # -- value semantics ----------------------------------------------------

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PartiallyDirectedGraph):
            return NotImplemented
        return self.p == other.p and np.array_equal(self._amat, other._amat)

    def __hash__(self) -> int:
        return hash((self.p, self._amat.tobytes()))

    def __repr__(self) -> str:
        return f"{type(self).__name__}(p={self.p}, edges={[f'{a}{_arrow(m)}{b}' for a, b, m in self.edges()]})"


class Dag(PartiallyDirectedGraph):
    """All marks directed, no directed cycle. Topological order is cached."""

    def __init__(self, amat: np.ndarray) -> None:
        super().__init__(amat)
        if np.any(self._amat & self._amat.T):
            raise ContractViolation("a DAG cannot contain undirected edges")
        if not is_acyclic(self):
            raise ContractViolation("graph contains a directed cycle")

    @cached_property
    def topological_order(self) -> Tuple[int, ...]:
        return tuple(nx.lexicographical_topological_sort(_to_digraph(self)))


class Cpdag(PartiallyDirectedGraph):
    """Equivalence-class representative; ``extendable`` is False when no consistent DAG exists."""

    def __init__(self, amat: np.ndarray) -> None:
        super().__init__(amat)
        self.extendable = _sink_elimination(self._amat) is not None


@dataclass(frozen=True)
class ExtensionOutcome:
    dag: Dag
    attempts: int


def _check_pair(p: int, a: int, b: int) -> None:
    if a == b:
        raise ContractViolation(f"self-edge on node {a}")
    if not (0 <= a < p and 0 <= b < p):
        raise ContractViolation(f"edge ({a}, {b}) out of range for p={p}")


def _arrow(mark: str) -> str:
    return {"undirected": "-", "a->b": "->", "b->a": "<-"}[mark]


def _to_digraph(g: PartiallyDirectedGraph) -> nx.DiGraph:
    dg = nx.DiGraph()
    dg.add_nodes_from(range(g.p))
    rows, cols = np.nonzero(g.amat)
    dg.add_edges_from(zip(rows.tolist(), cols.tolist()))
    return dg


# -- basic operations -------------------------------------------------------


def skeleton(g: PartiallyDirectedGraph) -> PartiallyDirectedGraph:
    adj = g.adjacency().astype(np.int8)
    return PartiallyDirectedGraph(adj)


def is_acyclic(g: PartiallyDirectedGraph) -> bool:
    if np.any(g.amat & g.amat.T):
        raise ContractViolation("is_acyclic requires a fully directed graph")
    return nx.is_directed_acyclic_graph(_to_digraph(g))


def v_structures(g: PartiallyDirectedGraph) -> Set[VStructure]:
    """Triples (a, k, b), a < b, with a -> k <- b and a, b nonadjacent."""
    out: Set[VStructure] = set()
    for k in range(g.p):
        for a, b in combinations(g.parents(k), 2):
            if not g.is_adjacent(a, b):
                out.add((a, k, b))
    return out


def moral_graph(d: Dag) -> PartiallyDirectedGraph:
    """Undirected graph joining each node to its parents and marrying co-parents."""
    adj = d.adjacency().astype(np.int8)
    for k in range(d.p):
        for a, b in combinations(d.parents(k), 2):
            adj[a, b] = adj[b, a] = 1
    return PartiallyDirectedGraph(adj)


# -- Meek closure -------------------------------------------------------------


def _meek_pass(amat: np.ndarray) -> bool:
    """One sweep of R1-R3 over all undirected edges; mutates amat, returns True if anything changed."""
    p = amat.shape[0]
    changed = False
    for i in range(p):
        for j in range(p):
            if i == j or not (amat[i, j] and amat[j, i]):
                continue
            directed_into = (amat[:, i] == 1) & (amat[i] == 0)
            adjacent_j = (amat[:, j] == 1) | (amat[j] == 1)
            # R1: k -> i - j with k, j nonadjacent
            r1 = directed_into.copy()
            r1[j] = False
            if np.any(r1 & ~adjacent_j):
                amat[j, i] = 0
                changed = True
                continue
            # R2: i -> k -> j
            out_of_i = (amat[i] == 1) & (amat[:, i] == 0)
            into_j = (amat[:, j] == 1) & (amat[j] == 0)
            if np.any(out_of_i & into_j):
                amat[j, i] = 0
                changed = True
                continue
            # R3: i - k -> j, i - l -> j, k and l nonadjacent
            undirected_i = (amat[i] == 1) & (amat[:, i] == 1)
            candidates = np.flatnonzero(undirected_i & into_j).tolist()
            for k, l in combinations(candidates, 2):
                if not (amat[k, l] or amat[l, k]):
                    amat[j, i] = 0
                    changed = True
                    break
    return changed


def meek_orient(g: PartiallyDirectedGraph) -> PartiallyDirectedGraph:
    """Apply R1, R2 and R3 until none fires. Existing arrowheads are never reversed."""
    amat = np.array(g.amat, copy=True)
    while _meek_pass(amat):
        pass
    return type(g)(amat)


# -- CPDAG <-> DAG --------------------------------------------------------------


def cpdag_of(d: Dag) -> Cpdag:
    amat = d.adjacency().astype(np.int8)
    for a, k, b in v_structures(d):
        amat[k, a] = 0
        amat[k, b] = 0
    closed = meek_orient(PartiallyDirectedGraph(amat))
    return Cpdag(closed.amat)


def _has_directed_path(amat: np.ndarray, src: int, dst: int) -> bool:
    """Directed path src ~> dst using only directed edges."""
    directed = (amat == 1) & (amat.T == 0)
    seen = {src}
    queue = deque([src])
    while queue:
        node = queue.popleft()
        if node == dst:
            return True
        for nxt in np.flatnonzero(directed[node]).tolist():
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return False


def _is_legal(amat: np.ndarray, a: int, b: int) -> bool:
    """Orienting a -> b creates no new v-structure at b and no directed cycle."""
    into_b = np.flatnonzero((amat[:, b] == 1) & (amat[b] == 0)).tolist()
    for c in into_b:
        if c != a and not (amat[a, c] or amat[c, a]):
            return False
    return not _has_directed_path(amat, b, a)


def _sink_elimination(amat: np.ndarray) -> Optional[np.ndarray]:
    """Deterministic consistent extension by repeated sink removal; None if none exists.

    A node x qualifies when it has no outgoing directed edge and every undirected
    neighbour of x is adjacent to all other neighbours of x.
    """
    work = np.array(amat, dtype=np.int8, copy=True)
    out = np.array(amat, dtype=np.int8, copy=True)
    alive = list(range(work.shape[0]))
    while alive:
        chosen = None
        for x in alive:
            if np.any((work[x] == 1) & (work[:, x] == 0)):
                continue
            nbrs = np.flatnonzero(work[x] | work[:, x]).tolist()
            und = np.flatnonzero((work[x] == 1) & (work[:, x] == 1)).tolist()
            if all(work[y, z] or work[z, y] for y in und for z in nbrs if z != y):
                chosen = x
                break
        if chosen is None:
            return None
        for y in np.flatnonzero((work[chosen] == 1) & (work[:, chosen] == 1)).tolist():
            out[chosen, y] = 0
        work[chosen, :] = 0
        work[:, chosen] = 0
        alive.remove(chosen)
    return out


def is_extendable(g: PartiallyDirectedGraph) -> bool:
    return _sink_elimination(g.amat) is not None


def _valid_extension(c: PartiallyDirectedGraph, amat: np.ndarray) -> bool:
    if np.any(amat & amat.T):
        return False
    if not nx.is_directed_acyclic_graph(_to_digraph(PartiallyDirectedGraph(amat))):
        return False
    candidate = PartiallyDirectedGraph(amat)
    if not np.array_equal(candidate.adjacency(), c.adjacency()):
        return False
    return v_structures(candidate) == v_structures(c)


def _extend_once(c: PartiallyDirectedGraph, rng: Optional[np.random.Generator]) -> Optional[np.ndarray]:
    amat = np.array(c.amat, copy=True)
    while True:
        und = [(a, b) for a, b in zip(*np.nonzero(np.triu(amat & amat.T, k=1)))]
        if not und:
            break
        if rng is None:
            a, b = int(und[0][0]), int(und[0][1])
            directions = [(a, b), (b, a)]
        else:
            a, b = (int(v) for v in und[int(rng.integers(len(und)))])
            directions = [(a, b), (b, a)] if rng.random() < 0.5 else [(b, a), (a, b)]
        legal = [(x, y) for x, y in directions if _is_legal(amat, x, y)]
        if not legal:
            return None
        x, y = legal[0]
        amat[y, x] = 0
        while _meek_pass(amat):
            pass
    return amat if _valid_extension(c, amat) else None


def extend_to_dag(c: PartiallyDirectedGraph, rng: Optional[np.random.Generator] = None) -> Dag:
    """Pick a member of the equivalence class encoded by ``c``.

    Undirected edges are oriented one at a time (lowest-indexed edge first when
    ``rng`` is None, otherwise a uniformly drawn edge and direction), each followed
    by Meek closure. A failed attempt is retried from scratch; after the retry
    budget the deterministic sink-elimination extension is tried last.
    """
    return extend_to_dag_counted(c, rng).dag


def extend_to_dag_counted(c: PartiallyDirectedGraph, rng: Optional[np.random.Generator] = None) -> ExtensionOutcome:
    attempts = 1 if rng is None else MAX_EXTENSION_ATTEMPTS
    for attempt in range(1, attempts + 1):
        amat = _extend_once(c, rng)
        if amat is not None:
            return ExtensionOutcome(Dag(amat), attempt)
    fallback = _sink_elimination(c.amat)
    if fallback is not None and _valid_extension(c, fallback):
        logger.warning("Random extension failed %d times, using sink elimination", attempts)
        return ExtensionOutcome(Dag(fallback), attempts + 1)
    raise InvalidCpdagError(f"no consistent DAG extension after {attempts} attempts")


# -- d-separation ---------------------------------------------------------------


def d_separated(d: Dag, a: Iterable[int], b: Iterable[int], s: Iterable[int]) -> bool:
    """Reachability ("Bayes ball") test of whether s blocks every path between a and b."""
    a_set, b_set, s_set = frozenset(a), frozenset(b), frozenset(s)
    if (a_set & b_set) or (a_set & s_set) or (b_set & s_set):
        raise ContractViolation("node sets passed to d_separated must be pairwise disjoint")
    ancestors_of_s: Set[int] = set(s_set)
    queue = deque(s_set)
    while queue:
        node = queue.popleft()
        for par in d.parents(node):
            if par not in ancestors_of_s:
                ancestors_of_s.add(par)
                queue.append(par)

    # (node, True) = arrived from a child (moving up), (node, False) = from a parent
    visited: Set[Tuple[int, bool]] = set()
    reachable: Set[int] = set()
    frontier = deque((x, True) for x in sorted(a_set))
    while frontier:
        node, upward = frontier.popleft()
        if (node, upward) in visited:
            continue
        visited.add((node, upward))
        if node not in s_set:
            reachable.add(node)
        if upward and node not in s_set:
            frontier.extend((par, True) for par in d.parents(node))
            frontier.extend((ch, False) for ch in d.children(node))
        elif not upward:
            if node not in s_set:
                frontier.extend((ch, False) for ch in d.children(node))
            if node in ancestors_of_s:
                frontier.extend((par, True) for par in d.parents(node))
    return not (reachable & b_set)


def all_dags(p: int) -> Iterator[Dag]:
    """Every DAG on p labelled nodes. Exponential; meant for p <= 4 in tests."""
    pairs = list(combinations(range(p), 2))
    for code in range(3 ** len(pairs)):
        amat = np.zeros((p, p), dtype=np.int8)
        for a, b in pairs:
            code, digit = divmod(code, 3)
            if digit == 1:
                amat[a, b] = 1
            elif digit == 2:
                amat[b, a] = 1
        g = PartiallyDirectedGraph(amat)
        if is_acyclic(g):
            yield Dag(amat)


def markov_equivalent(d1: Dag, d2: Dag) -> bool:
    return np.array_equal(d1.adjacency(), d2.adjacency()) and v_structures(d1) == v_structures(d2)


__all__: Sequence[str] = [
    "PartiallyDirectedGraph",
    "Dag",
    "Cpdag",
    "ExtensionOutcome",
    "skeleton",
    "is_acyclic",
    "v_structures",
    "moral_graph",
    "meek_orient",
    "cpdag_of",
    "is_extendable",
    "extend_to_dag",
    "extend_to_dag_counted",
    "d_separated",
    "all_dags",
    "markov_equivalent",
]
