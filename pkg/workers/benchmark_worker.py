#!/usr/bin/env python3
"""
Monte-Carlo benchmark worker.

Each replicate draws a model, a training set and an equally sized validation
set, tunes every method on the validation split and scores the selected fit
against the truth. Replicates run through joblib; results are reduced in
(p, replicate) order so the report does not depend on the number of workers.
"""
from __future__ import annotations

import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, model_validator

# Ensure project root is in path
CURRENT_DIR = os.path.dirname(os.path.abspath(__file__))
PROJECT_ROOT = os.path.abspath(os.path.join(CURRENT_DIR, os.pardir))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from config.settings import settings  # noqa: E402
from core.errors import PcDagError, UsageError  # noqa: E402
from core.eval import frobenius_diff, kl_loss, nonzero_count, tune_by_validation  # noqa: E402
from core.simgen import ErrorDistribution, sample_dag_model, sample_data, sample_nondag_model  # noqa: E402
from estimators.registry import list_estimators, resolve  # noqa: E402

logger = logging.getLogger(__name__)

DEFAULT_P_GRID = [40, 50, 60, 70, 80, 90, 100, 110, 120]
REPORT_COLUMNS = ["setting", "p", "method", "metric", "mean", "se", "replicates"]
PATH_COLUMNS = ["setting", "p", "method", "grid_index", "parameter", "mean_kl", "mean_nonzero", "log_mean_nonzero", "replicates"]
METRICS = ["kl", "frobenius_sigma", "frobenius_omega", "nonzero", "tuning", "kl_best", "true_nonzero"]


class BenchmarkSetting(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    model: Literal["dag", "nondag"]
    n: int = Field(ge=4)
    p_grid: List[int] = Field(default_factory=lambda: list(DEFAULT_P_GRID), min_length=1)
    s: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    pi: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    error: ErrorDistribution = ErrorDistribution.GAUSSIAN
    sign_flip: bool = False
    replicates: int = Field(default=50, ge=1)
    methods: List[str] = Field(default_factory=lambda: ["pcdag", "glasso"], min_length=1)
    n_dags: int = Field(default=settings.N_DAGS, ge=1)
    alpha_grid: List[float] = Field(default_factory=lambda: list(settings.ALPHA_GRID), min_length=1)
    lambda_grid_size: int = Field(default=settings.LAMBDA_GRID_SIZE, ge=1)
    lambda_grid_ratio: float = Field(default=settings.LAMBDA_GRID_RATIO, gt=0.0, le=1.0)
    # R glasso convention: the diagonal is penalised too
    glasso_penalize_diagonal: bool = True

    @model_validator(mode="after")
    def _check_model_parameters(self) -> "BenchmarkSetting":
        if self.model == "dag" and self.s is None:
            raise ValueError("DAG settings need s")
        if self.model == "nondag" and self.pi is None:
            raise ValueError("non-DAG settings need pi")
        if self.model == "nondag" and self.error is not ErrorDistribution.GAUSSIAN:
            raise ValueError("contaminated errors are only defined for DAG models")
        if any(p < 2 for p in self.p_grid):
            raise ValueError("every p must be at least 2")
        unknown = sorted(set(self.methods) - set(list_estimators()))
        if unknown:
            raise ValueError(f"unknown methods {unknown}; available: {list_estimators()}")
        return self


NAMED_SETTINGS: Dict[str, BenchmarkSetting] = {
    "D1": BenchmarkSetting(name="D1", model="dag", n=30, s=0.01),
    "D2": BenchmarkSetting(name="D2", model="dag", n=50, s=0.01),
    "D3": BenchmarkSetting(name="D3", model="dag", n=30, s=0.05),
    "D4": BenchmarkSetting(name="D4", model="dag", n=50, s=0.05),
    "nD1": BenchmarkSetting(name="nD1", model="nondag", n=30, pi=0.1),
    "nD2": BenchmarkSetting(name="nD2", model="nondag", n=50, pi=0.1),
    "nD3": BenchmarkSetting(name="nD3", model="nondag", n=30, pi=0.5),
    "nD4": BenchmarkSetting(name="nD4", model="nondag", n=50, pi=0.5),
    "R": BenchmarkSetting(
        name="R",
        model="dag",
        n=50,
        p_grid=[80],
        s=0.01,
        methods=["pcdag", "pcdag-robust", "glasso", "glasso-robust"],
    ),
}


def named_setting(name: str, **overrides: Any) -> BenchmarkSetting:
    if name not in NAMED_SETTINGS:
        raise UsageError(f"unknown setting {name!r}; choose from {sorted(NAMED_SETTINGS)}")
    base = NAMED_SETTINGS[name]
    if not overrides:
        return base
    return BenchmarkSetting.model_validate({**base.model_dump(), **overrides})


@dataclass
class BenchmarkReport:
    setting: BenchmarkSetting
    master_seed: int
    rows: pd.DataFrame
    paths: pd.DataFrame
    raw: List[Dict[str, Any]]
    # p -> number of replicates dropped for every method
    dropped: Dict[int, int] = field(default_factory=dict)
    wall_clock: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        """Everything except wall-clock, which belongs in the run manifest."""
        return {
            "setting": self.setting.model_dump(mode="json"),
            "master_seed": self.master_seed,
            "dropped": {str(p): k for p, k in sorted(self.dropped.items())},
            "replicate_seeds": [[self.master_seed, r["p"], r["replicate"]] for r in self.raw],
            "rows": without_nan(self.rows.to_dict(orient="records")),
        }


def _estimator(method: str, setting: BenchmarkSetting):
    est = resolve(method)
    if est.parameter_name == "alpha":
        return resolve(est, n_dags=setting.n_dags, alpha_grid=tuple(setting.alpha_grid))
    if est.parameter_name == "lambda":
        return resolve(
            est,
            grid_size=setting.lambda_grid_size,
            grid_ratio=setting.lambda_grid_ratio,
            penalize_diagonal=setting.glasso_penalize_diagonal,
        )
    return est


def _draw_model(setting: BenchmarkSetting, p: int, rng: np.random.Generator):
    if setting.model == "dag":
        return sample_dag_model(p, setting.s, rng, sign_flip=setting.sign_flip)
    return sample_nondag_model(p, setting.pi, rng)


def _safe_kl(sigma_true: np.ndarray, fit) -> float:
    if fit is None:
        return math.nan
    try:
        return kl_loss(sigma_true, fit.omega)
    except PcDagError:
        return math.nan


def run_replicate(setting: BenchmarkSetting, p: int, replicate: int, master_seed: int) -> Dict[str, Any]:
    """One paired replicate; any method failing marks the whole replicate as failed."""
    rng = np.random.default_rng([master_seed, p, replicate])
    fit_seed = int(np.random.SeedSequence([master_seed, p, replicate]).generate_state(1)[0])
    outcome: Dict[str, Any] = {"p": p, "replicate": replicate, "status": "ok", "error": None, "methods": {}}
    try:
        model = _draw_model(setting, p, rng)
        train = sample_data(model, setting.n, setting.error, rng=rng)
        valid = sample_data(model, setting.n, setting.error, rng=rng)
    except PcDagError as e:
        outcome.update(status="failed", error=f"model: {e}")
        return outcome
    outcome["true_nonzero"] = nonzero_count(model.omega_true)

    for method in setting.methods:
        est = _estimator(method, setting)
        try:
            grid = est.default_grid(train)
            tuning = tune_by_validation(train, valid, est, grid, seed=fit_seed)
            fit = tuning.best_fit
            losses: Dict[str, Any] = {
                "kl": kl_loss(model.sigma_true, fit.omega),
                "frobenius_sigma": frobenius_diff(fit.sigma, model.sigma_true),
                "frobenius_omega": frobenius_diff(fit.omega, model.omega_true),
                "nonzero": fit.nonzero,
                "tuning": tuning.best,
            }
        except PcDagError as e:
            logger.warning("Replicate p=%d r=%d: %s failed: %s", p, replicate, method, e)
            outcome.update(status="failed", error=f"{method}: {e}")
            return outcome
        path = []
        for index, value in enumerate(sorted(tuning.fits, key=grid.index)):
            path_fit = tuning.fits[value]
            path.append(
                {
                    "grid_index": index,
                    "parameter": value,
                    "kl": _safe_kl(model.sigma_true, path_fit),
                    "nonzero": path_fit.nonzero if path_fit is not None else math.nan,
                }
            )
        kls = [entry["kl"] for entry in path if not math.isnan(entry["kl"])]
        losses["kl_best"] = min(kls) if kls else math.nan
        losses["path"] = path
        outcome["methods"][method] = losses
    return outcome


def _mean_se(values: List[float]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    mean = float(arr.mean())
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else math.nan
    return mean, se


def aggregate(setting: BenchmarkSetting, outcomes: List[Dict[str, Any]]) -> Tuple[pd.DataFrame, pd.DataFrame, Dict[int, int]]:
    rows: List[Dict[str, Any]] = []
    path_rows: List[Dict[str, Any]] = []
    dropped: Dict[int, int] = {}
    for p in setting.p_grid:
        kept = [o for o in outcomes if o["p"] == p and o["status"] == "ok"]
        dropped[p] = sum(1 for o in outcomes if o["p"] == p and o["status"] != "ok")
        if dropped[p]:
            logger.warning("p=%d: dropped %d replicate(s) for all methods", p, dropped[p])
        for method in setting.methods:
            for metric in METRICS:
                if metric == "true_nonzero":
                    values = [o["true_nonzero"] for o in kept]
                else:
                    values = [o["methods"][method][metric] for o in kept]
                    if metric == "kl_best":
                        values = [v for v in values if not math.isnan(v)]
                mean, se = _mean_se(values)
                rows.append({"setting": setting.name, "p": p, "method": method, "metric": metric, "mean": mean, "se": se, "replicates": len(values)})

            by_index: Dict[int, List[Dict[str, Any]]] = {}
            for o in kept:
                for entry in o["methods"][method]["path"]:
                    by_index.setdefault(entry["grid_index"], []).append(entry)
            for index in sorted(by_index):
                entries = by_index[index]
                kls = [e["kl"] for e in entries if not math.isnan(e["kl"])]
                nonzeros = [e["nonzero"] for e in entries if not math.isnan(e["nonzero"])]
                mean_nz = float(np.mean(nonzeros)) if nonzeros else math.nan
                path_rows.append(
                    {
                        "setting": setting.name,
                        "p": p,
                        "method": method,
                        "grid_index": index,
                        "parameter": float(np.mean([e["parameter"] for e in entries])),
                        "mean_kl": float(np.mean(kls)) if kls else math.nan,
                        "mean_nonzero": mean_nz,
                        "log_mean_nonzero": math.log(mean_nz) if mean_nz > 0 else math.nan,
                        "replicates": len(kls),
                    }
                )
    return pd.DataFrame(rows, columns=REPORT_COLUMNS), pd.DataFrame(path_rows, columns=PATH_COLUMNS), dropped


def run_benchmark(setting: BenchmarkSetting, master_seed: int, jobs: int = settings.BENCHMARK_JOBS) -> BenchmarkReport:
    started = time.perf_counter()
    tasks = [(p, r) for p in setting.p_grid for r in range(setting.replicates)]
    logger.info("🚀 Benchmark %s: %d replicate(s) over p=%s, methods=%s, jobs=%d", setting.name, len(tasks), setting.p_grid, setting.methods, jobs)
    outcomes = Parallel(n_jobs=jobs)(delayed(run_replicate)(setting, p, r, master_seed) for p, r in tasks)
    outcomes = sorted(outcomes, key=lambda o: (setting.p_grid.index(o["p"]), o["replicate"]))
    rows, paths, dropped = aggregate(setting, outcomes)
    elapsed = time.perf_counter() - started
    logger.info("✅ Benchmark %s finished in %.1fs (%d dropped)", setting.name, elapsed, sum(dropped.values()))
    return BenchmarkReport(
        setting=setting,
        master_seed=master_seed,
        rows=rows,
        paths=paths,
        raw=outcomes,
        dropped=dropped,
        wall_clock=elapsed,
    )


def without_nan(value: Any) -> Any:
    """Replace NaN floats by None recursively so dumps stay valid JSON."""
    if isinstance(value, dict):
        return {k: without_nan(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [without_nan(v) for v in value]
    if isinstance(value, (float, np.floating)) and math.isnan(value):
        return None
    return value
