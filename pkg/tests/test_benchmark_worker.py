from __future__ import annotations

import math

import numpy as np
import pytest
from pydantic import ValidationError

import workers.benchmark_worker as worker
from core.errors import PositiveDefinitenessError, UsageError
from core.simgen import ErrorDistribution
from workers.benchmark_worker import (
    METRICS,
    NAMED_SETTINGS,
    BenchmarkSetting,
    named_setting,
    run_benchmark,
    run_replicate,
    without_nan,
)


def _tiny(**overrides):
    base = dict(name="tiny", model="dag", n=20, s=0.3, p_grid=[4, 6], replicates=3, methods=["pcdag", "glasso"], n_dags=2)
    base.update(overrides)
    return BenchmarkSetting(**base)


def test_named_settings_match_published_configurations():
    expected = {
        "D1": ("dag", 30, 0.01),
        "D2": ("dag", 50, 0.01),
        "D3": ("dag", 30, 0.05),
        "D4": ("dag", 50, 0.05),
        "nD1": ("nondag", 30, 0.1),
        "nD2": ("nondag", 50, 0.1),
        "nD3": ("nondag", 30, 0.5),
        "nD4": ("nondag", 50, 0.5),
    }
    for name, (model, n, density) in expected.items():
        setting = NAMED_SETTINGS[name]
        assert setting.model == model and setting.n == n
        assert (setting.s if model == "dag" else setting.pi) == density
        assert setting.p_grid == list(range(40, 130, 10))
        assert setting.replicates == 50
    robust = NAMED_SETTINGS["R"]
    assert (robust.n, robust.p_grid, robust.s) == (50, [80], 0.01)
    assert set(robust.methods) == {"pcdag", "pcdag-robust", "glasso", "glasso-robust"}


def test_named_setting_overrides():
    setting = named_setting("D2", p_grid=[10], replicates=2, error="t3")
    assert setting.p_grid == [10] and setting.replicates == 2
    assert setting.error is ErrorDistribution.T3_CONTAMINATED
    assert NAMED_SETTINGS["D2"].replicates == 50
    with pytest.raises(UsageError):
        named_setting("D9")


def test_glasso_baseline_diagonal_penalty_follows_setting():
    assert worker._estimator("glasso", NAMED_SETTINGS["D2"]).penalize_diagonal is True
    assert worker._estimator("glasso-robust", NAMED_SETTINGS["R"]).penalize_diagonal is True
    off = named_setting("D2", glasso_penalize_diagonal=False)
    assert worker._estimator("glasso", off).penalize_diagonal is False
    assert worker._estimator("pcdag", off).n_dags == off.n_dags


def test_setting_validation():
    with pytest.raises(ValidationError):
        BenchmarkSetting(name="x", model="dag", n=20)
    with pytest.raises(ValidationError):
        BenchmarkSetting(name="x", model="nondag", n=20, pi=0.1, error="cauchy")
    with pytest.raises(ValidationError):
        _tiny(methods=["mcd"])
    with pytest.raises(ValidationError):
        _tiny(p_grid=[])
    with pytest.raises(ValidationError):
        _tiny(replicates=0)


def test_replicate_is_deterministic_and_complete():
    setting = _tiny()
    a = run_replicate(setting, 5, 0, master_seed=1)
    b = run_replicate(setting, 5, 0, master_seed=1)
    assert a["status"] == "ok"
    assert without_nan(a) == without_nan(b)
    for method in setting.methods:
        losses = a["methods"][method]
        assert losses["kl"] >= 0
        assert losses["kl_best"] <= losses["kl"] + 1e-12
        assert [entry["grid_index"] for entry in losses["path"]] == list(range(len(losses["path"])))
    assert a["methods"]["pcdag"]["tuning"] in setting.alpha_grid
    c = run_replicate(setting, 5, 1, master_seed=1)
    assert c["methods"]["pcdag"]["kl"] != a["methods"]["pcdag"]["kl"]


def test_report_standard_errors_match_raw_losses():
    setting = _tiny()
    report = run_benchmark(setting, master_seed=2, jobs=1)
    assert len(report.raw) == 6
    assert [(o["p"], o["replicate"]) for o in report.raw] == [(4, 0), (4, 1), (4, 2), (6, 0), (6, 1), (6, 2)]
    rows = report.rows.set_index(["p", "method", "metric"])
    for p in setting.p_grid:
        kept = [o for o in report.raw if o["p"] == p and o["status"] == "ok"]
        for method in setting.methods:
            kls = np.array([o["methods"][method]["kl"] for o in kept])
            row = rows.loc[(p, method, "kl")]
            assert row["mean"] == pytest.approx(kls.mean())
            assert row["se"] == pytest.approx(kls.std(ddof=1) / math.sqrt(kls.size))
            assert row["replicates"] == kls.size
    assert set(report.rows["metric"]) == set(METRICS)
    assert set(report.paths["method"]) == {"pcdag", "glasso"}


def test_report_is_reproducible():
    setting = _tiny(p_grid=[5], replicates=2)
    first = run_benchmark(setting, master_seed=4).to_dict()
    second = run_benchmark(setting, master_seed=4).to_dict()
    assert first == second
    assert first["replicate_seeds"] == [[4, 5, 0], [4, 5, 1]]
    assert "wall_clock" not in first


def test_failing_method_drops_the_replicate_for_all_methods(monkeypatch):
    setting = _tiny(p_grid=[5], replicates=2)
    real = worker.tune_by_validation
    calls = []

    def flaky(train, valid, est, grid=None, *, seed=0):
        # the first glasso tuning (replicate 0) fails
        if est.name == "glasso":
            calls.append(est.name)
            if len(calls) == 1:
                raise PositiveDefinitenessError("forced")
        return real(train, valid, est, grid, seed=seed)

    monkeypatch.setattr(worker, "tune_by_validation", flaky)
    report = run_benchmark(setting, master_seed=0, jobs=1)
    assert [o["status"] for o in report.raw] == ["failed", "ok"]
    assert report.raw[0]["error"].startswith("glasso")
    assert report.dropped == {5: 1}
    kl_rows = report.rows[report.rows["metric"] == "kl"]
    assert kl_rows["replicates"].tolist() == [1, 1]
    assert kl_rows["se"].isna().all()


def test_without_nan():
    assert without_nan({"a": [1.0, math.nan], "b": (np.float64("nan"),)}) == {"a": [1.0, None], "b": [None]}
