from __future__ import annotations

import math

import numpy as np
import pytest

from core.dataset import Dataset
from core.errors import ContractViolation
from core.graph import Dag, PartiallyDirectedGraph, cpdag_of, d_separated
from core.pcalg import (
    CiTestContext,
    PcDiagnostics,
    SepSets,
    alpha_nesting_violations,
    cov_to_corr,
    fisher_z,
    gauss_ci_test,
    partial_correlation,
    pc_cpdag,
    pc_orient,
    pc_skeleton,
)
from core.simgen import sample_dag_model, sample_data


def _chain_corr():
    return np.array([[1.0, 0.8, 0.64], [0.8, 1.0, 0.8], [0.64, 0.8, 1.0]])


def _permuted_dag_model(rng, p, s):
    model = sample_dag_model(p, s, rng)
    perm = rng.permutation(p)
    sigma = model.sigma_true[np.ix_(perm, perm)]
    dag = Dag(model.dag.amat[np.ix_(perm, perm)])
    return sigma, dag


def test_partial_correlation_examples():
    corr = _chain_corr()
    assert partial_correlation(corr, 0, 1, []) == pytest.approx(0.8)
    assert partial_correlation(corr, 0, 2, [1]) == pytest.approx(0.0, abs=1e-12)
    assert partial_correlation(np.eye(4), 0, 3, [1, 2]) == pytest.approx(0.0)


def test_partial_correlation_matches_recursion():
    corr = np.array([[1.0, 0.3, 0.5], [0.3, 1.0, -0.2], [0.5, -0.2, 1.0]])
    expected = (0.3 - 0.5 * -0.2) / math.sqrt((1 - 0.25) * (1 - 0.04))
    assert partial_correlation(corr, 0, 1, [2]) == pytest.approx(expected)


def test_partial_correlation_contract():
    with pytest.raises(ContractViolation):
        partial_correlation(np.eye(3), 0, 0, [])
    with pytest.raises(ContractViolation):
        partial_correlation(np.eye(3), 0, 1, [1])


def test_fisher_z():
    assert fisher_z(0.0) == 0.0
    assert fisher_z(0.5) == pytest.approx(0.549306, abs=1e-6)
    assert fisher_z(-0.5) == pytest.approx(-0.549306, abs=1e-6)
    with pytest.raises(ContractViolation):
        fisher_z(1.0)


def test_gauss_ci_test_examples():
    r = math.tanh(0.1006)
    corr = np.eye(3)
    corr[0, 1] = corr[1, 0] = r
    assert gauss_ci_test(CiTestContext(corr, n=100, alpha=0.05), 0, 1, [2])

    assert gauss_ci_test(CiTestContext(np.eye(2), n=500, alpha=0.3), 0, 1, [])

    strong = np.array([[1.0, 0.9], [0.9, 1.0]])
    assert not gauss_ci_test(CiTestContext(strong, n=50, alpha=0.05), 0, 1, [])


def test_gauss_ci_test_degenerate_dof_retains_independence():
    corr = np.full((3, 3), 0.9)
    np.fill_diagonal(corr, 1.0)
    assert gauss_ci_test(CiTestContext(corr, n=4, alpha=0.05), 0, 1, [2])


def test_context_validation():
    with pytest.raises(ContractViolation):
        CiTestContext(np.eye(2), n=10, alpha=0.0)
    with pytest.raises(ContractViolation):
        CiTestContext(np.eye(2), n=1, alpha=0.05)
    with pytest.raises(ContractViolation):
        CiTestContext(np.array([[1.0, 0.2], [0.3, 1.0]]), n=10, alpha=0.05)


def test_sepsets_symmetric():
    s = SepSets()
    s.record(0, 2, [1])
    assert s.get(2, 0) == frozenset({1})
    assert (0, 2) in s and len(s) == 1
    with pytest.raises(ContractViolation):
        s.record(0, 1, [0])


def test_skeleton_chain_population():
    ctx = CiTestContext(_chain_corr(), n=10_000, alpha=0.05)
    skel, sepsets = pc_skeleton(ctx)
    assert skel.undirected_edges() == [(0, 1), (1, 2)]
    assert sepsets.get(0, 2) == frozenset({1})


def test_skeleton_identity_is_empty():
    diag = PcDiagnostics()
    skel, sepsets = pc_skeleton(CiTestContext(np.eye(4), n=100, alpha=0.05), diagnostics=diag)
    assert skel.n_edges == 0
    assert len(sepsets) == 6
    assert diag.n_tests == 6 and diag.max_level == 0


def test_skeleton_keeps_strongly_dependent_pairs():
    corr = np.full((4, 4), 0.7)
    np.fill_diagonal(corr, 1.0)
    skel, _ = pc_skeleton(CiTestContext(corr, n=1_000_000, alpha=0.01))
    assert skel.n_edges == 6


def test_skeleton_respects_max_order():
    skel, sepsets = pc_skeleton(CiTestContext(_chain_corr(), n=10_000, alpha=0.05), max_order=0)
    assert skel.n_edges == 3
    assert len(sepsets) == 0


def test_orient_chain_and_collider():
    skel = PartiallyDirectedGraph.from_edges(3, undirected=[(0, 1), (1, 2)])
    chain_sep = SepSets()
    chain_sep.record(0, 2, [1])
    chain = pc_orient(skel, chain_sep)
    assert chain.undirected_edges() == [(0, 1), (1, 2)]

    collider_sep = SepSets()
    collider_sep.record(0, 2, [])
    collider = pc_orient(skel, collider_sep)
    assert collider.directed_edges() == [(0, 1), (2, 1)]

    assert pc_orient(PartiallyDirectedGraph.empty(3), SepSets()).n_edges == 0


def test_orient_conflicting_v_structures_first_wins():
    # 0 - 1 - 2 - 3 with empty separating sets asks for 0->1<-2 and 1->2<-3
    skel = PartiallyDirectedGraph.from_edges(4, undirected=[(0, 1), (1, 2), (2, 3)])
    s = SepSets()
    s.record(0, 2, [])
    s.record(1, 3, [])
    s.record(0, 3, [])
    diag = PcDiagnostics()
    out = pc_orient(skel, s, diagnostics=diag)
    assert diag.n_conflicts >= 1
    assert out.is_directed(0, 1) and out.is_directed(2, 1)
    assert out.extendable


def test_population_oracle_with_d_separation():
    rng = np.random.default_rng(2024)
    for _ in range(60):
        p = int(rng.integers(3, 8))
        _, dag = _permuted_dag_model(rng, p, 0.35)
        ctx = CiTestContext(np.eye(p), n=1000, alpha=0.05)
        skel, sepsets = pc_skeleton(ctx, independence=lambda i, j, k: d_separated(dag, {i}, {j}, set(k)))
        assert pc_orient(skel, sepsets) == cpdag_of(dag)


def test_population_oracle_with_exact_correlations():
    rng = np.random.default_rng(7)
    for _ in range(60):
        p = int(rng.integers(3, 8))
        sigma, dag = _permuted_dag_model(rng, p, 0.35)
        ctx = CiTestContext(cov_to_corr(sigma), n=1000, alpha=0.05, oracle_tol=1e-9)
        skel, sepsets = pc_skeleton(ctx)
        assert pc_orient(skel, sepsets) == cpdag_of(dag)


def test_pc_cpdag_recovers_strong_chain():
    b = np.zeros((3, 3))
    b[1, 0] = b[2, 1] = 0.9
    sigma_inv = np.linalg.inv(np.eye(3) - b)
    sigma = sigma_inv @ sigma_inv.T
    rng = np.random.default_rng(0)
    data = Dataset(rng.multivariate_normal(np.zeros(3), sigma, size=10_000))
    cpdag, sepsets = pc_cpdag(data, 0.001)
    assert cpdag.undirected_edges() == [(0, 1), (1, 2)]
    assert sepsets.get(0, 2) == frozenset({1})


def test_pc_cpdag_tiny_alpha_gives_empty_graph():
    rng = np.random.default_rng(1)
    model = sample_dag_model(6, 0.3, rng)
    data = sample_data(model, 40, rng=rng)
    cpdag, _ = pc_cpdag(data, 1e-300)
    assert cpdag.n_edges == 0


def test_pc_cpdag_needs_four_rows():
    with pytest.raises(ContractViolation):
        pc_cpdag(Dataset(np.random.default_rng(0).standard_normal((3, 2))), 0.05)
    with pytest.raises(ContractViolation):
        pc_cpdag(np.eye(3), 0.05)


def test_pc_is_deterministic():
    rng = np.random.default_rng(9)
    model = sample_dag_model(10, 0.2, rng)
    data = sample_data(model, 60, rng=rng)
    first, s1 = pc_cpdag(data, 0.05)
    second, s2 = pc_cpdag(data, 0.05)
    assert first == second
    assert s1.sets == s2.sets


def _chain_data(rng, n):
    x0 = rng.standard_normal(n)
    x1 = 0.9 * x0 + rng.standard_normal(n)
    x2 = 0.9 * x1 + rng.standard_normal(n)
    return Dataset(np.column_stack([x0, x1, x2]))


def test_chain_recovered_in_over_95_percent_of_seeds():
    hits = 0
    for seed in range(100):
        cpdag, _ = pc_cpdag(_chain_data(np.random.default_rng(seed), 10_000), 0.01)
        hits += cpdag.n_edges == 2 and cpdag.undirected_edges() == [(0, 1), (1, 2)]
    assert hits > 95


def test_independent_columns_give_near_empty_graph():
    counts = []
    for seed in range(100):
        data = Dataset(np.random.default_rng(seed).standard_normal((50, 10)))
        cpdag, _ = pc_cpdag(data, 0.01)
        counts.append(cpdag.n_edges)
    # 45 pairs, each kept with probability at most about alpha
    assert np.mean(counts) < 1.0


def test_alpha_nesting_violations_lists_lost_adjacencies(caplog):
    wide = PartiallyDirectedGraph.from_edges(3, undirected=[(0, 1), (1, 2)])
    narrow = PartiallyDirectedGraph.from_edges(3, directed=[(1, 0)])
    with caplog.at_level("INFO", logger="core.pcalg"):
        out = alpha_nesting_violations({0.05: narrow, 0.01: wide})
    assert out == [(0.01, 0.05, (1, 2))]
    assert "not nested" in caplog.text
    assert alpha_nesting_violations({0.01: narrow, 0.05: wide}) == []
    assert alpha_nesting_violations({0.05: wide}) == []


def test_alpha_nesting_matches_skeleton_differences_over_seeds():
    grid = [1e-300, 0.001, 0.01, 0.05, 0.2]
    for seed in range(20):
        rng = np.random.default_rng([11, seed])
        model = sample_dag_model(12, 0.15, rng)
        data = sample_data(model, 40, rng=rng)
        graphs = {a: pc_cpdag(data, a)[0] for a in grid}
        expected = []
        for lo, hi in zip(grid, grid[1:]):
            lost = np.triu(graphs[lo].adjacency() & ~graphs[hi].adjacency(), k=1)
            expected += [(lo, hi, (int(u), int(v))) for u, v in zip(*np.nonzero(lost))]
        assert alpha_nesting_violations(graphs) == expected
        assert graphs[1e-300].n_edges == 0
