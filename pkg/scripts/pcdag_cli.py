#!/usr/bin/env python3
"""
Command-line entry point for simulation, estimation, benchmarking and CV.

Usage examples:
  python scripts/pcdag_cli.py simulate --model dag --p 40 --n 50 --s 0.01 --seed 7 --out-dir runs/sim
  python scripts/pcdag_cli.py estimate --method pcdag --alpha 0.01 --input runs/sim/data.csv --truth runs/sim/truth.json --out-dir runs/est
  python scripts/pcdag_cli.py benchmark --setting D2 --p-grid 40 --reps 50 --jobs 8 --out-dir runs/d2
  python scripts/pcdag_cli.py cv --input genes.csv --method glasso --grid 0.5,0.2,0.1 --top-variance 100 --out-dir runs/cv
  python scripts/pcdag_cli.py rerun --manifest runs/d2/manifest.json --out-dir runs/d2-again

Every command writes a manifest.json next to its outputs. Exit codes: 0 success,
1 usage, 2 input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, ValidationError

CURRENT_DIR = os.path.dirname(os.path.abspath(__file__))
PROJECT_ROOT = os.path.abspath(os.path.join(CURRENT_DIR, os.pardir))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from config.logging_setup import setup_logging  # noqa: E402
from config.settings import settings  # noqa: E402
from core.dataset import Dataset  # noqa: E402
from core.errors import EXIT_OK, EXIT_USAGE, InputError, PcDagError, UnsupportedCombinationError, UsageError  # noqa: E402
from core.eval import frobenius_diff, kfold_cv_curve, kl_loss  # noqa: E402
from core.simgen import DagModel, ErrorDistribution, sample_dag_model, sample_data, sample_nondag_model  # noqa: E402
from estimators.registry import list_estimators, resolve  # noqa: E402
from infra.storage.local import MANIFEST_NAME, LocalStorage, read_json, read_matrix_csv  # noqa: E402
from workers.benchmark_worker import BenchmarkSetting, named_setting, run_benchmark, without_nan  # noqa: E402

ARTIFACT_VERSION = "1.0.0"


class RunManifest(BaseModel):
    command: str
    argv: List[str]
    parameters: Dict[str, Any]
    master_seed: int
    artifact_version: str = ARTIFACT_VERSION
    inputs: List[str] = Field(default_factory=list)
    outputs: List[str] = Field(default_factory=list)
    wall_clock: float = 0.0


class CliParser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad flags; usage problems here map to 1."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {e}") from e


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {e}") from e


def _str_list(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _seed(args: argparse.Namespace) -> int:
    return settings.PCDAG_SEED if args.seed is None else args.seed


def _load_dataset(path: str) -> Dataset:
    return Dataset(read_matrix_csv(path))


def _finish(storage: LocalStorage, args: argparse.Namespace, started: float, inputs: Sequence[str], outputs: Sequence[str]) -> int:
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "argv")}
    manifest = RunManifest(
        command=args.cmd,
        argv=list(args.argv),
        parameters=params,
        master_seed=_seed(args),
        inputs=list(inputs),
        outputs=[str(storage.path(name)) for name in outputs],
        wall_clock=time.perf_counter() - started,
    )
    storage.write_manifest(manifest)
    for name in outputs:
        print(storage.path(name))
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    seed = _seed(args)
    rng = np.random.default_rng(seed)
    if args.model == "dag":
        if args.s is None:
            raise UsageError("--model dag needs --s")
        model = sample_dag_model(args.p, args.s, rng, sign_flip=args.sign_flip)
    else:
        if args.pi is None:
            raise UsageError("--model nondag needs --pi")
        if args.error != ErrorDistribution.GAUSSIAN.value:
            raise UnsupportedCombinationError(f"--error {args.error} is only supported with --model dag")
        model = sample_nondag_model(args.p, args.pi, rng)
    data = sample_data(model, args.n, ErrorDistribution(args.error), rng=rng)

    truth: Dict[str, Any] = {
        "model": args.model,
        "p": args.p,
        "n": args.n,
        "sigma_true": model.sigma_true,
        "omega_true": model.omega_true,
        "b": model.b,
        "dag": model.dag.to_json_dict() if isinstance(model, DagModel) else None,
    }
    storage = LocalStorage(args.out_dir)
    storage.write_matrix_csv("data.csv", data.data)
    storage.write_json("truth.json", truth)
    return _finish(storage, args, started, [], ["data.csv", "truth.json"])


def _read_truth(path: str, p: int) -> Dict[str, np.ndarray]:
    payload = read_json(path)
    try:
        sigma = np.asarray(payload["sigma_true"], dtype=float)
        omega = np.asarray(payload["omega_true"], dtype=float)
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"{path} is not a truth file: {e}") from e
    if sigma.shape != (p, p) or omega.shape != (p, p):
        raise InputError(f"{path}: truth matrices do not match p={p}")
    return {"sigma_true": sigma, "omega_true": omega}


def cmd_estimate(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    est = resolve(args.method)
    if est.parameter_name == "alpha":
        parameter = args.alpha
        est = resolve(est, n_dags=args.n_dags)
    elif est.parameter_name == "lambda":
        parameter = args.lam
        est = resolve(est, penalize_diagonal=args.penalize_diagonal)
    else:
        parameter = None
    if est.parameter_name and parameter is None:
        flag = "--alpha" if est.parameter_name == "alpha" else "--lambda"
        raise UsageError(f"--method {args.method} needs {flag}")

    data = _load_dataset(args.input)
    inputs = [args.input]
    truth = None
    if args.truth:
        truth = _read_truth(args.truth, data.p)
        inputs.append(args.truth)

    result = est.fit(data, parameter, seed=_seed(args))
    payload = result.to_dict()
    if truth is not None:
        payload["losses"] = {
            "kl_loss": kl_loss(truth["sigma_true"], result.omega),
            "frobenius_sigma": frobenius_diff(result.sigma, truth["sigma_true"]),
            "frobenius_omega": frobenius_diff(result.omega, truth["omega_true"]),
        }
    storage = LocalStorage(args.out_dir)
    storage.write_json("result.json", payload)
    return _finish(storage, args, started, inputs, ["result.json"])


def _benchmark_setting(args: argparse.Namespace) -> BenchmarkSetting:
    overrides: Dict[str, Any] = {}
    for flag, key in (("p_grid", "p_grid"), ("reps", "replicates"), ("methods", "methods"), ("n_dags", "n_dags"), ("error", "error"), ("glasso_penalize_diagonal", "glasso_penalize_diagonal")):
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = value
    if args.sign_flip:
        overrides["sign_flip"] = True
    try:
        if args.setting:
            return named_setting(args.setting, **overrides)
        if args.model is None or args.n is None:
            raise UsageError("benchmark needs --setting or --model with --n")
        return BenchmarkSetting(name="custom", model=args.model, n=args.n, s=args.s, pi=args.pi, **overrides)
    except ValidationError as e:
        raise UsageError(f"invalid benchmark setting: {e}") from e


def cmd_benchmark(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    setting = _benchmark_setting(args)
    report = run_benchmark(setting, _seed(args), jobs=args.jobs)
    storage = LocalStorage(args.out_dir)
    storage.write_frame("report.csv", report.rows)
    storage.write_frame("paths.csv", report.paths)
    storage.write_json("report.json", report.to_dict())
    storage.write_json("replicates.json", without_nan(report.raw))
    return _finish(storage, args, started, [], ["report.csv", "paths.csv", "report.json", "replicates.json"])


def cmd_cv(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    if not args.grid:
        raise UsageError("--grid must list at least one value")
    data = _load_dataset(args.input)
    if args.top_variance is not None:
        if not 1 <= args.top_variance <= data.p:
            raise UsageError(f"--top-variance must lie in [1, {data.p}]")
        variances = data.data.var(axis=0)
        keep = np.sort(np.argsort(-variances, kind="stable")[: args.top_variance])
        data = data.columns(keep.tolist())
    est = resolve(args.method)
    if est.parameter_name == "alpha":
        est = resolve(est, n_dags=args.n_dags)
    elif est.parameter_name == "lambda":
        est = resolve(est, penalize_diagonal=args.penalize_diagonal)
    curve = kfold_cv_curve(data, args.folds, est, args.grid, seed=_seed(args))
    storage = LocalStorage(args.out_dir)
    storage.write_frame("cv_curve.csv", curve)
    return _finish(storage, args, started, [args.input], ["cv_curve.csv"])


def _strip_flags(argv: Sequence[str], flags: Sequence[str]) -> List[str]:
    out: List[str] = []
    skip = False
    for token in argv:
        if skip:
            skip = False
            continue
        if token in flags:
            skip = True
            continue
        if any(token.startswith(f + "=") for f in flags):
            continue
        out.append(token)
    return out


def cmd_rerun(args: argparse.Namespace) -> int:
    try:
        manifest = RunManifest.model_validate(read_json(args.manifest))
    except ValidationError as e:
        raise InputError(f"{args.manifest} is not a run manifest: {e}") from e
    if manifest.command == "rerun":
        raise UsageError("a rerun manifest cannot be replayed")
    replay = _strip_flags(manifest.argv, ["--out-dir", "--seed"])
    replay += ["--seed", str(manifest.master_seed), "--out-dir", args.out_dir]
    return main(replay)


def build_parser() -> CliParser:
    parser = CliParser(prog="pcdag")
    parser.add_argument("--log-level", default=None, help="overrides LOG_LEVEL")
    sub = parser.add_subparsers(dest="cmd", parser_class=CliParser)
    methods = list_estimators()
    errors = [e.value for e in ErrorDistribution]

    p_sim = sub.add_parser("simulate")
    p_sim.add_argument("--model", choices=["dag", "nondag"], required=True)
    p_sim.add_argument("--p", type=int, required=True)
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--s", type=float, default=None)
    p_sim.add_argument("--pi", type=float, default=None)
    p_sim.add_argument("--error", choices=errors, default=ErrorDistribution.GAUSSIAN.value)
    p_sim.add_argument("--sign-flip", action="store_true")
    p_sim.set_defaults(func=cmd_simulate)

    p_est = sub.add_parser("estimate")
    p_est.add_argument("--method", choices=methods, required=True)
    p_est.add_argument("--alpha", type=float, default=None)
    p_est.add_argument("--lambda", dest="lam", type=float, default=None)
    p_est.add_argument("--input", required=True)
    p_est.add_argument("--truth", default=None)
    p_est.add_argument("--n-dags", type=int, default=settings.N_DAGS)
    p_est.add_argument("--penalize-diagonal", action="store_true", help="glasso: penalise the diagonal too")
    p_est.set_defaults(func=cmd_estimate)

    p_bench = sub.add_parser("benchmark")
    p_bench.add_argument("--setting", default=None)
    p_bench.add_argument("--model", choices=["dag", "nondag"], default=None)
    p_bench.add_argument("--n", type=int, default=None)
    p_bench.add_argument("--s", type=float, default=None)
    p_bench.add_argument("--pi", type=float, default=None)
    p_bench.add_argument("--error", choices=errors, default=None)
    p_bench.add_argument("--sign-flip", action="store_true")
    p_bench.add_argument("--reps", type=int, default=None)
    p_bench.add_argument("--p-grid", type=_int_list, default=None)
    p_bench.add_argument("--methods", type=_str_list, default=None)
    p_bench.add_argument("--n-dags", type=int, default=None)
    p_bench.add_argument("--glasso-penalize-diagonal", action=argparse.BooleanOptionalAction, default=None)
    p_bench.add_argument("--jobs", type=int, default=settings.BENCHMARK_JOBS)
    p_bench.set_defaults(func=cmd_benchmark)

    p_cv = sub.add_parser("cv")
    p_cv.add_argument("--input", required=True)
    p_cv.add_argument("--method", choices=methods, required=True)
    p_cv.add_argument("--grid", type=_float_list, required=True)
    p_cv.add_argument("--folds", type=int, default=settings.CV_FOLDS)
    p_cv.add_argument("--top-variance", type=int, default=None)
    p_cv.add_argument("--n-dags", type=int, default=settings.N_DAGS)
    p_cv.add_argument("--penalize-diagonal", action="store_true", help="glasso: penalise the diagonal too")
    p_cv.set_defaults(func=cmd_cv)

    p_rerun = sub.add_parser("rerun")
    p_rerun.add_argument("--manifest", required=True)
    p_rerun.set_defaults(func=cmd_rerun)

    for p in (p_sim, p_est, p_bench, p_cv):
        p.add_argument("--seed", type=int, default=None, help="defaults to PCDAG_SEED")
    for p in (p_sim, p_est, p_bench, p_cv, p_rerun):
        p.add_argument("--out-dir", default=settings.OUTPUT_DIR)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return e.exit_code
    setup_logging(args.log_level)
    if not hasattr(args, "func"):
        parser.print_help()
        return EXIT_USAGE
    # recorded without the global flags so rerun can replay it
    args.argv = argv[argv.index(args.cmd):]
    try:
        return args.func(args)
    except PcDagError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
