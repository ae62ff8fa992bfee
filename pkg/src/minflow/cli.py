"""Command-line interface: generate, fit, eval, oracle, bench.

Exit codes: 0 success, 2 usage/input error, 3 optimizer stopped without
converging, 4 oracle check failure.  Every command writes a JSON manifest
next to its primary output recording resolved configuration, seeds, input
and output digests, and per-phase wall-clock timings.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import __version__
from .continuous import NeighborConfig
from .data import read_dataset, write_dataset, write_dataset_csv
from .discrete import FitConfig, mpf_objective
from .errors import CapacityError, DimensionMismatchError, NumericError
from .fitting import (
    default_fit_optimizer,
    default_pot_model,
    fit_continuous_mpf,
    fit_discrete_mpf,
)
from .manifest import write_json_atomic, write_manifest
from .metrics import ising_recovery_metrics
from .models import (
    IsingModel,
    RbmMarginalModel,
    load_model,
    model_from_dict,
    save_model,
)
from .oracle import (
    build_transition_matrix,
    check_detailed_balance,
    exact_model_distribution,
    kl_growth_rate,
    min_hessian_eigenvalue,
    brute_force_objective,
)
from .optim import OptimizerConfig
from .sampler import SamplerConfig, gibbs_sample_ising, gibbs_sample_rbm


class CliError(Exception):
    """Usage or input problem; maps to exit code 2."""


def _load_model_file(path):
    try:
        return load_model(path)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot load model file {path}: {exc}") from exc


def _load_dataset_file(path, binary=None):
    try:
        return read_dataset(path, binary=binary)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot load dataset {path}: {exc}") from exc


# -- gen -------------------------------------------------------------------------


def cmd_gen(args) -> int:
    model = _load_model_file(args.model)
    cfg = SamplerConfig(
        n_samples=args.n, burn_in=args.burn_in, thin=args.thin, seed=args.seed
    )
    t0 = time.perf_counter()
    if isinstance(model, IsingModel):
        data = gibbs_sample_ising(model, cfg)
    elif isinstance(model, RbmMarginalModel):
        data = gibbs_sample_rbm(model, cfg)
    else:
        raise CliError("gen supports binary models (ising, rbm)")
    gen_s = time.perf_counter() - t0

    if args.format == "csv":
        write_dataset_csv(data, args.out)
    else:
        write_dataset(data, args.out, encoding=args.encoding)
    burn_in, thin = cfg.resolve(model.d)
    sidecar = {
        "format_version": 1,
        "model_file": args.model,
        "seed": args.seed,
        "burn_in": burn_in,
        "thin": thin,
        "n_samples": args.n,
        "d": model.d,
    }
    write_json_atomic(sidecar, args.out + ".meta.json")
    write_manifest(
        args.out + ".manifest.json",
        "gen",
        {
            "model": args.model,
            "n": args.n,
            "burn_in": burn_in,
            "thin": thin,
            "format": args.format,
            "encoding": args.encoding,
        },
        inputs=[args.model],
        outputs=[args.out, args.out + ".meta.json"],
        timings_s={"generate": gen_s},
        seeds={"sampler": args.seed},
    )
    return 0


# -- fit -------------------------------------------------------------------------


def _fit_optimizer(args) -> OptimizerConfig:
    base = default_fit_optimizer(max_iterations=args.max_iter)
    return OptimizerConfig(
        max_iterations=args.max_iter,
        gradient_norm_tolerance=args.grad_tol,
        relative_value_tolerance=base.relative_value_tolerance,
    )


def cmd_fit(args) -> int:
    data = _load_dataset_file(args.data)
    opt_cfg = _fit_optimizer(args)
    t0 = time.perf_counter()
    if args.kind in ("ising", "rbm"):
        if not data.binary:
            raise CliError("binary model kinds require a binary 0/1 dataset")
        cfg = FitConfig(
            mode=args.mode,
            eps=args.eps,
            n_workers=args.threads,
            strict_serial=args.threads == 1,
        )
        if args.kind == "ising":
            model0 = IsingModel(np.zeros((data.d, data.d)))
        else:
            if args.hidden is None:
                raise CliError("--hidden is required for --kind rbm")
            model0 = RbmMarginalModel(np.zeros((data.d, args.hidden)))
        fitted, trace = fit_discrete_mpf(model0, data, cfg, opt_cfg=opt_cfg)
        resolved = {
            "kind": args.kind,
            "mode": cfg.mode,
            "eps": cfg.eps,
            "threads": args.threads,
            "max_iter": args.max_iter,
            "grad_tol": args.grad_tol,
        }
    elif args.kind == "pot":
        if data.binary:
            raise CliError("product-of-t fits require a continuous dataset")
        if args.filters is None:
            raise CliError("--filters is required for --kind pot")
        ncfg = NeighborConfig(
            n_neighbors=args.neighbors, noise_scale=args.noise_scale, seed=args.seed
        )
        model0 = default_pot_model(data.d, args.filters, seed=args.seed)
        fitted, trace = fit_continuous_mpf(
            model0, data, ncfg, eps=args.eps, opt_cfg=opt_cfg, sample_mode=args.sample_mode
        )
        resolved = {
            "kind": "pot",
            "n_neighbors": args.neighbors,
            "noise_scale": args.noise_scale,
            "eps": args.eps,
            "sample_mode": args.sample_mode,
            "max_iter": args.max_iter,
            "grad_tol": args.grad_tol,
        }
    else:
        raise CliError(f"unknown model kind {args.kind!r}")
    fit_s = time.perf_counter() - t0

    save_model(fitted, args.out)
    outputs = [args.out]
    if args.trace:
        trace.to_csv(args.trace)
        outputs.append(args.trace)
    if args.trace_jsonl:
        trace.to_jsonl(args.trace_jsonl)
        outputs.append(args.trace_jsonl)
    write_manifest(
        args.out + ".manifest.json",
        "fit",
        resolved,
        inputs=[args.data],
        outputs=outputs,
        timings_s={"fit": fit_s},
        seeds={"seed": args.seed},
    )
    print(
        f"fit: {trace.termination} after {len(trace.records) - 1} iterations, "
        f"value {trace.final_value:.6g}, grad norm {trace.final_grad_norm:.3g}"
    )
    return 0 if trace.termination in ("gradient-tolerance", "value-tolerance") else 3


# -- eval ------------------------------------------------------------------------


def cmd_eval(args) -> int:
    fitted = _load_model_file(args.model)
    if not isinstance(fitted, IsingModel):
        raise CliError("eval currently compares binary pairwise (ising) models")
    if args.truth:
        truth = _load_model_file(args.truth)
        if not isinstance(truth, IsingModel):
            raise CliError("truth model must be an ising model")
        if truth.d != fitted.d:
            raise CliError("truth/fitted dimension mismatch")
        metrics = ising_recovery_metrics(
            fitted, truth=truth, sample_n=args.sample_n, seed=args.seed
        )
        inputs = [args.model, args.truth]
    elif args.data:
        data = _load_dataset_file(args.data, binary=True)
        if data.d != fitted.d:
            raise CliError("data/model dimension mismatch")
        metrics = ising_recovery_metrics(
            fitted, data=data, sample_n=args.sample_n, seed=args.seed
        )
        inputs = [args.model, args.data]
    else:
        raise CliError("eval needs --truth or --data")
    metrics["format_version"] = 1
    write_json_atomic(metrics, args.out)
    write_manifest(
        args.out + ".manifest.json",
        "eval",
        {"sample_n": args.sample_n},
        inputs=inputs,
        outputs=[args.out],
        timings_s={},
        seeds={"seed": args.seed},
    )
    return 0


# -- oracle ----------------------------------------------------------------------

_DEFAULT_TOLERANCES = {
    "objective_rel": 1e-12,
    "column_sum": 1e-12,
    "detailed_balance": 1e-12,
    "taylor_rel": 0.01,
    # absolute floor for the Taylor comparison; when the data covers every
    # state the strict objective is exactly 0 and the KL growth rate is
    # second order, so the extrapolated slope is only zero to O(t)
    "taylor_abs": 1e-6,
    "min_hessian_eig": -1e-6,
}


def run_oracle_fixture(fixture: dict) -> dict:
    """Cross-check sparse and dense paths on one small fixture."""
    model = model_from_dict(fixture["model"])
    dataset = np.asarray(fixture["dataset"], dtype=np.uint8)
    eps = float(fixture.get("eps", 1.0))
    mode = fixture.get("mode", "strict")
    tol = dict(_DEFAULT_TOLERANCES)
    tol.update(fixture.get("tolerances", {}))

    sparse = mpf_objective(model, dataset, cfg=FitConfig(mode=mode, eps=eps)).value
    dense = brute_force_objective(model, dataset, eps=eps, mode=mode)
    k_err = abs(sparse - dense) / max(abs(dense), 1e-300)

    tm = build_transition_matrix(model)
    p_inf = exact_model_distribution(model)
    column_sum = tm.column_sum_error()
    db = check_detailed_balance(tm, p_inf)

    taylor = kl_growth_rate(model, dataset)
    strict_value = taylor["strict_objective"]
    taylor_abs_err = abs(taylor["extrapolated_rate"] - strict_value)
    taylor_err = taylor_abs_err / max(abs(strict_value), 1e-12)

    min_eig = None
    if fixture["model"].get("kind") == "ising":
        min_eig = min_hessian_eigenvalue(model, dataset, cfg=FitConfig(mode=mode, eps=eps))

    checks = {
        "objective_agreement": bool(k_err <= tol["objective_rel"] or dense == sparse == 0.0),
        "column_sums": bool(column_sum <= tol["column_sum"]),
        "detailed_balance": bool(db <= tol["detailed_balance"]),
        "taylor_identity": bool(
            taylor_abs_err <= max(tol["taylor_rel"] * abs(strict_value), tol["taylor_abs"])
        ),
    }
    if min_eig is not None:
        checks["hessian_psd"] = bool(min_eig >= tol["min_hessian_eig"])
    return {
        "format_version": 1,
        "K_sparse": sparse,
        "K_dense": dense,
        "objective_rel_error": k_err,
        "column_sum_error": column_sum,
        "detailed_balance_violation": db,
        "taylor_slope": taylor["extrapolated_rate"],
        "taylor_rel_error": taylor_err,
        "min_hessian_eig": min_eig,
        "mode": mode,
        "checks": checks,
        "passed": all(checks.values()),
    }


def cmd_oracle(args) -> int:
    try:
        with open(args.fixture) as fh:
            fixture = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot load fixture {args.fixture}: {exc}") from exc
    try:
        report = run_oracle_fixture(fixture)
    except (KeyError, ValueError) as exc:
        raise CliError(f"malformed fixture {args.fixture}: {exc}") from exc
    out = args.out or (args.fixture + ".report.json")
    write_json_atomic(report, out)
    write_manifest(
        out + ".manifest.json",
        "oracle",
        {"fixture": args.fixture},
        inputs=[args.fixture],
        outputs=[out],
        timings_s={},
    )
    for name, ok in report["checks"].items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if report["passed"] else 4


# -- bench -----------------------------------------------------------------------


def cmd_bench(args) -> int:
    import os

    from .sampler import random_coupling

    os.makedirs(args.out_dir, exist_ok=True)
    paths = {
        "truth": os.path.join(args.out_dir, "truth.json"),
        "data": os.path.join(args.out_dir, "data.bin"),
        "fitted": os.path.join(args.out_dir, "fitted.json"),
        "metrics": os.path.join(args.out_dir, "metrics.json"),
        "timings": os.path.join(args.out_dir, "timings.csv"),
    }
    timings = {}

    truth = random_coupling(args.units, args.variance, seed=args.seed)
    save_model(truth, paths["truth"])

    t0 = time.perf_counter()
    data = gibbs_sample_ising(truth, SamplerConfig(n_samples=args.samples, seed=args.seed + 1))
    timings["generate"] = time.perf_counter() - t0
    write_dataset(data, paths["data"])

    t0 = time.perf_counter()
    fitted, trace = fit_discrete_mpf(
        IsingModel(np.zeros((args.units, args.units))),
        data,
        FitConfig(),
        opt_cfg=default_fit_optimizer(max_iterations=args.max_iter),
    )
    timings["fit"] = time.perf_counter() - t0
    save_model(fitted, paths["fitted"])

    t0 = time.perf_counter()
    metrics = ising_recovery_metrics(
        fitted, truth=truth, sample_n=args.eval_samples, seed=args.seed + 2
    )
    timings["eval"] = time.perf_counter() - t0
    metrics["format_version"] = 1
    write_json_atomic(metrics, paths["metrics"])

    with open(paths["timings"], "w") as fh:
        fh.write("phase,seconds\n")
        for phase, seconds in timings.items():
            fh.write(f"{phase},{seconds:.3f}\n")
    write_manifest(
        os.path.join(args.out_dir, "bench.manifest.json"),
        "bench",
        {
            "units": args.units,
            "samples": args.samples,
            "variance": args.variance,
            "max_iter": args.max_iter,
            "eval_samples": args.eval_samples,
        },
        inputs=[],
        outputs=list(paths.values()),
        timings_s=timings,
        seeds={"seed": args.seed},
    )
    print(
        f"bench: units={args.units} samples={args.samples} "
        + " ".join(f"{k}={v:.2f}s" for k, v in timings.items())
        + f" (fit terminated: {trace.termination})"
    )
    return 0


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minflow",
        description="Partition-function-free estimation for energy-based models",
    )
    parser.add_argument("--version", action="version", version=f"minflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="sample a synthetic dataset from a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--thin", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["binary", "csv"], default="binary")
    p.add_argument("--encoding", choices=["bit-packed", "byte-per-element"], default="bit-packed")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", help="estimate model parameters from a dataset")
    p.add_argument("--kind", choices=["ising", "rbm", "pot"], required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["full-neighbor", "strict"], default="full-neighbor")
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--neighbors", type=int, default=2)
    p.add_argument("--noise-scale", type=float, default=0.1)
    p.add_argument("--sample-mode", choices=["frozen", "stochastic"], default="frozen")
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--filters", type=int, default=None)
    p.add_argument("--trace", default=None, help="write per-iteration trace CSV here")
    p.add_argument("--trace-jsonl", default=None)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--grad-tol", type=float, default=1e-7)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="recovery metrics against a truth model or dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--truth", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--sample-n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="dense-dynamics cross-checks on a fixture file")
    p.add_argument("--fixture", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("bench", help="end-to-end generate/fit/eval timing scenario")
    p.add_argument("--units", type=int, default=40)
    p.add_argument("--samples", type=int, default=20_000)
    p.add_argument("--variance", type=float, default=0.04)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--eval-samples", type=int, default=100_000)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DimensionMismatchError, CapacityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())
