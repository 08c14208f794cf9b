from __future__ import annotations

import json

import numpy as np
import pytest

import core.dagcov as dagcov
from core.dagcov import (
    DagLinearSystem,
    EstimationResult,
    dag_covariance,
    dag_linear_system,
    estimate_for_dag,
    pc_dag_estimate,
    regress_on_parents,
    sample_covariance,
)
from core.dataset import Dataset
from core.errors import ContractViolation, PositiveDefinitenessError
from core.graph import Cpdag, Dag, PartiallyDirectedGraph, extend_to_dag, moral_graph
from core.pcalg import cov_to_corr, pc_cpdag
from core.simgen import sample_dag_model, sample_data


def _dag(p, edges):
    return Dag(PartiallyDirectedGraph.from_edges(p, directed=edges).amat)


def test_sample_covariance_examples():
    assert np.array_equal(sample_covariance(np.array([[3.0, 4.0]])), np.zeros((2, 2)))
    s = sample_covariance(np.array([[1.0, 0.0], [-1.0, 0.0]]))
    assert np.allclose(s, [[1.0, 0.0], [0.0, 0.0]])


def test_regress_on_parents():
    sigma = np.array([[1.0, 0.5], [0.5, 1.0]])
    reg = regress_on_parents(sigma, 0, [1])
    assert reg.beta == pytest.approx([0.5])
    assert reg.variance == pytest.approx(0.75)
    assert not reg.pseudo_inverse

    empty = regress_on_parents(sigma, 1, [])
    assert empty.beta.size == 0 and empty.variance == pytest.approx(1.0)

    diag = np.diag([2.0, 3.0, 4.0])
    reg = regress_on_parents(diag, 2, [0, 1])
    assert np.allclose(reg.beta, 0.0) and reg.variance == pytest.approx(4.0)

    with pytest.raises(ContractViolation):
        regress_on_parents(sigma, 0, [0])


def test_regress_on_singular_parents_uses_pseudo_inverse():
    sigma = np.ones((3, 3))
    reg = regress_on_parents(sigma, 2, [0, 1])
    assert reg.pseudo_inverse
    assert reg.variance > 0


def test_linear_system_and_covariance_for_chain():
    sigma = np.array([[1.0, 0.5], [0.5, 1.0]])
    sys = dag_linear_system(sigma, _dag(2, [(0, 1)]))
    assert np.allclose(sys.a, [[1.0, 0.0], [-0.5, 1.0]])
    assert np.allclose(sys.d, [1.0, 0.75])
    s, o = dag_covariance(sys)
    assert np.allclose(s, sigma, atol=1e-14)
    assert np.allclose(o @ s, np.eye(2), atol=1e-12)


def test_empty_dag_gives_diagonal():
    sigma = np.array([[2.0, 0.3], [0.3, 1.0]])
    sys = dag_linear_system(sigma, Dag(np.zeros((2, 2), dtype=np.int8)))
    assert np.array_equal(sys.a, np.eye(2))
    assert np.allclose(sys.d, [2.0, 1.0])
    s, o = dag_covariance(DagLinearSystem(np.eye(3), np.ones(3), (0, 1, 2)))
    assert np.array_equal(s, np.eye(3)) and np.array_equal(o, np.eye(3))


def test_linear_system_rejects_nonpositive_variance():
    with pytest.raises(PositiveDefinitenessError):
        DagLinearSystem(np.eye(2), np.array([1.0, 0.0]), (0, 1))


def test_round_trip_on_true_models():
    rng = np.random.default_rng(42)
    for _ in range(100):
        p = int(rng.integers(2, 41))
        model = sample_dag_model(p, 0.1, rng)
        sys = dag_linear_system(model.sigma_true, model.dag)
        assert np.allclose(sys.a, np.eye(p) - model.b, atol=1e-10)
        assert np.allclose(sys.d, 1.0, atol=1e-10)
        sigma, omega = dag_covariance(sys)
        scale = np.abs(model.sigma_true).max()
        assert np.abs(sigma - model.sigma_true).max() <= 1e-10 * scale
        assert np.abs(omega - model.omega_true).max() <= 1e-10 * np.abs(model.omega_true).max()


def test_round_trip_on_permuted_dag():
    rng = np.random.default_rng(3)
    model = sample_dag_model(12, 0.3, rng)
    perm = rng.permutation(12)
    sigma_true = model.sigma_true[np.ix_(perm, perm)]
    dag = Dag(model.dag.amat[np.ix_(perm, perm)])
    sigma, omega = dag_covariance(dag_linear_system(sigma_true, dag))
    assert np.allclose(sigma, sigma_true, atol=1e-10)
    assert np.allclose(omega @ sigma, np.eye(12), atol=1e-8)


def test_single_dag_support_is_within_moral_graph():
    rng = np.random.default_rng(8)
    for _ in range(20):
        model = sample_dag_model(15, 0.15, rng)
        data = sample_data(model, 60, rng=rng)
        _, omega, _ = estimate_for_dag(sample_covariance(data), model.dag)
        allowed = moral_graph(model.dag).adjacency() | np.eye(15, dtype=bool)
        assert not np.any(omega[~allowed])
        assert np.linalg.eigvalsh(omega).min() > 0


def test_zero_pattern_same_for_class_members():
    rng = np.random.default_rng(12)
    checked = 0
    while checked < 20:
        model = sample_dag_model(12, 0.2, rng)
        data = sample_data(model, 80, rng=rng)
        cpdag, _ = pc_cpdag(data, 0.05)
        if not cpdag.extendable:
            continue
        d1 = extend_to_dag(cpdag, np.random.default_rng(checked))
        d2 = extend_to_dag(cpdag, np.random.default_rng(1000 + checked))
        assert moral_graph(d1) == moral_graph(d2)
        s = sample_covariance(data)
        _, o1, _ = estimate_for_dag(s, d1)
        _, o2, _ = estimate_for_dag(s, d2)
        assert np.array_equal(np.abs(o1) > 0, np.abs(o2) > 0)
        checked += 1


def test_pc_dag_estimate_tiny_alpha_is_diagonal():
    rng = np.random.default_rng(5)
    model = sample_dag_model(8, 0.3, rng)
    data = sample_data(model, 30, rng=rng)
    res = pc_dag_estimate(data, 1e-300, n_dags=3)
    var = np.diag(sample_covariance(data))
    assert np.allclose(res.sigma, np.diag(var))
    assert np.allclose(res.omega, np.diag(1.0 / var))
    assert res.nonzero == 8
    assert res.graph.n_edges == 0


def test_pc_dag_estimate_fully_directed_cpdag_ignores_n_dags():
    # strong collider 0 -> 2 <- 1 gives a fully directed CPDAG
    rng = np.random.default_rng(0)
    x0, x1 = rng.standard_normal((2, 2000))
    x2 = x0 + x1 + 0.5 * rng.standard_normal(2000)
    data = Dataset(np.column_stack([x0, x1, x2]))
    one = pc_dag_estimate(data, 0.001, n_dags=1)
    five = pc_dag_estimate(data, 0.001, n_dags=5)
    assert one.graph.undirected_edges() == []
    assert np.array_equal(one.sigma, five.sigma)
    assert np.array_equal(one.omega, five.omega)


def test_pc_dag_estimate_unextendable_cpdag_goes_straight_to_empty_dag(monkeypatch):
    cycle = Cpdag(PartiallyDirectedGraph.from_edges(4, undirected=[(0, 1), (1, 2), (2, 3), (0, 3)]).amat)
    assert not cycle.extendable

    def _no_extension(*args, **kwargs):
        raise AssertionError("extension must not be attempted")

    monkeypatch.setattr(dagcov, "pc_cpdag", lambda *args, **kwargs: (cycle, None))
    monkeypatch.setattr(dagcov, "extend_to_dag_counted", _no_extension)
    data = Dataset(np.random.default_rng(2).standard_normal((40, 4)))
    res = pc_dag_estimate(data, 0.05, n_dags=5)
    var = np.diag(sample_covariance(data))
    assert res.diagnostics["fallback_empty_dag"] is True
    assert res.diagnostics["extension_attempts"] == 0
    assert res.diagnostics["n_dags_used"] == 1
    assert np.allclose(res.omega, np.diag(1.0 / var))


def test_pc_dag_estimate_properties_and_determinism():
    rng = np.random.default_rng(21)
    model = sample_dag_model(20, 0.1, rng)
    data = sample_data(model, 50, rng=rng)
    a = pc_dag_estimate(data, 0.05, n_dags=4, seed=3)
    b = pc_dag_estimate(data, 0.05, n_dags=4, seed=3)
    assert np.array_equal(a.sigma, b.sigma) and np.array_equal(a.omega, b.omega)
    assert np.allclose(a.sigma, a.sigma.T) and np.allclose(a.omega, a.omega.T)
    vals = np.linalg.eigvalsh(a.sigma)
    assert vals.min() >= -1e-10 * vals.max()
    assert a.method == "pcdag" and a.tuning == 0.05
    assert 1 <= a.diagnostics["n_dags_used"] <= 4
    assert "inverse_deviation" in a.diagnostics


def test_pc_dag_estimate_robust_initial():
    rng = np.random.default_rng(4)
    model = sample_dag_model(10, 0.2, rng)
    data = sample_data(model, 60, rng=rng)
    res = pc_dag_estimate(data, 0.05, n_dags=2, initial="ogk")
    assert res.method == "pcdag-robust"
    assert np.linalg.eigvalsh(res.omega).min() > 0


def test_pc_dag_estimate_contract():
    data = Dataset(np.random.default_rng(0).standard_normal((3, 4)))
    with pytest.raises(ContractViolation):
        pc_dag_estimate(data, 0.05)
    data = Dataset(np.random.default_rng(0).standard_normal((10, 4)))
    with pytest.raises(ContractViolation):
        pc_dag_estimate(data, 0.05, n_dags=0)
    with pytest.raises(ContractViolation):
        pc_dag_estimate(data, 0.05, initial="huber")


def test_estimation_result_serializes():
    res = EstimationResult(sigma=np.eye(2), omega=np.eye(2), method="diagonal", tuning=None, graph=_dag(2, [(0, 1)]))
    payload = json.loads(res.to_json())
    assert payload["graph"] == {"p": 2, "edges": [{"a": 0, "b": 1, "mark": "a->b"}]}
    assert payload["diagnostics"]["nonzero"] == 2
    assert payload["omega"] == [[1.0, 0.0], [0.0, 1.0]]
