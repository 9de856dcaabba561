"""Command-line runner: ``hyflexa generate | solve | bench``.

Exit codes: 0 success, 1 usage or configuration error, 2 no convergence
within the iteration budget (the trace is still written), 3 numeric failure.

Solver flags mirror the dotted configuration keys (``--theta`` is
``step.theta``, ``--tau`` is ``sampling.tau`` and so on); ``--config`` reads
a JSON object of dotted keys, and explicit flags override it.  The worker
count defaults to ``$HYFLEXA_WORKERS`` (else 1).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .driver import SolverConfig, run
from .exceptions import ConfigError, ConvergenceError, HyflexaError, NumericError, SolverError
from .io import load_instance, save_instance
from .lasso import generate_nesterov

__all__ = ["main", "TRACE_COLUMNS", "AGGREGATE_COLUMNS", "RUN_COLUMNS"]

TRACE_COLUMNS = ("k", "objective", "rel_error", "residual", "gamma", "sampled", "updated", "elapsed_s")
AGGREGATE_COLUMNS = ("config", "k", "mean_rel_error", "mean_elapsed_s", "n_runs")
RUN_COLUMNS = ("config", "rep", "seed", "status", "iterations", "final_rel_error", "elapsed_s", "error")

EXIT_OK, EXIT_USAGE, EXIT_NOCONV, EXIT_NUMERIC = 0, 1, 2, 3

# flag dest -> dotted config key
_FLAG_KEYS = {
    "sampling": "sampling.rule",
    "tau": "sampling.tau",
    "expected_size": "sampling.expected_size",
    "partitions": "sampling.partition_count",
    "pmf": "sampling.pmf",
    "greedy": "greedy.mode",
    "sigma": "greedy.sigma",
    "rho": "greedy.rho",
    "step": "step.kind",
    "gamma0": "step.gamma0",
    "theta": "step.theta",
    "gamma": "step.constant",
    "surrogate": "surrogate.kind",
    "surrogate_tau": "surrogate.tau",
    "q_shift": "surrogate.q_shift",
    "alpha1": "inexact.alpha1",
    "alpha2": "inexact.alpha2",
    "max_iters": "run.max_iters",
    "tol": "run.tol",
    "workers": "run.workers",
    "seed": "seed",
    "full_every": "diag.full_every",
    "check_descent": "diag.check_descent",
    "target_re": "run.target_re",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _add_solver_flags(p):
    g = p.add_argument_group("solver (each flag overrides the matching --config key)")
    g.add_argument("--config", type=Path, help="JSON object of dotted config keys")
    g.add_argument("--sampling", choices=["full", "sequential", "nice", "uniform", "nu", "du"])
    g.add_argument("--tau", type=int, help="block count for nice sampling")
    g.add_argument("--expected-size", type=float, help="E|S| for uniform sampling")
    g.add_argument("--partitions", type=int, help="part count for nonoverlapping sampling")
    g.add_argument("--pmf", help="comma-separated cardinality pmf (sizes 1..N) for du sampling")
    g.add_argument("--greedy", choices=["threshold", "rho"])
    g.add_argument("--sigma", type=float, help="greedy threshold in [0, 1]")
    g.add_argument("--rho", type=float)
    g.add_argument("--step", choices=["diminishing", "constant"])
    g.add_argument("--gamma0", type=float)
    g.add_argument("--theta", type=float)
    g.add_argument("--gamma", type=float, help="constant step size")
    g.add_argument("--surrogate", choices=["proximal_linear", "newton", "exact"])
    g.add_argument("--surrogate-tau", type=float, help="proximal weight of the surrogate")
    g.add_argument("--q-shift", type=float)
    g.add_argument("--alpha1", type=float)
    g.add_argument("--alpha2", type=float)
    g.add_argument("--max-iters", type=int)
    g.add_argument("--tol", type=float, help="residual tolerance")
    g.add_argument("--target-re", type=float, help="also stop once re(x) drops to this value")
    g.add_argument("--seed", type=int)
    g.add_argument("--workers", type=int)
    g.add_argument("--full-every", type=int)
    g.add_argument("--check-descent", action="store_true", default=None)


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return data


def _config_dict(args) -> dict:
    cfg = _load_json(args.config) if getattr(args, "config", None) else {}
    for dest, key in _FLAG_KEYS.items():
        v = getattr(args, dest, None)
        if v is not None:
            cfg[key] = v
    if "run.workers" not in cfg and os.environ.get("HYFLEXA_WORKERS"):
        try:
            cfg["run.workers"] = int(os.environ["HYFLEXA_WORKERS"])
        except ValueError as exc:
            raise ConfigError("HYFLEXA_WORKERS must be an integer") from exc
    return cfg


def _solver_config(cfg: dict, problem) -> SolverConfig:
    cfg = dict(cfg)
    target_re = cfg.pop("run.target_re", None)
    if target_re is not None:
        if problem.optimal_value is None:
            raise ConfigError("--target-re needs an instance with a known optimum")
        cfg["run.objective_target"] = problem.optimal_value * (1.0 + float(target_re))
    return SolverConfig.from_mapping(cfg, problem.n, hessian=problem.block_hessian)


def _trace_rows(problem, trace):
    vstar = problem.optimal_value
    for t in trace:
        re = None if vstar is None else problem.relative_error(t.objective)
        yield (t.k, t.objective, re, t.residual, t.gamma, t.sampled, t.updated, t.elapsed)


def _write_trace(path, problem, trace):
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in _trace_rows(problem, trace):
            w.writerow([_fmt(v) for v in row])


def _exit_code(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, SolverError) else exc
    if isinstance(cause, (NumericError, AssertionError)):
        return EXIT_NUMERIC
    if isinstance(cause, ConvergenceError):
        return EXIT_NOCONV
    if isinstance(cause, (ConfigError, ValueError)):
        return EXIT_USAGE
    return EXIT_NUMERIC


# --------------------------------------------------------------------------


def cmd_generate(args) -> int:
    prob = generate_nesterov(args.m, args.n, args.s_a, args.s_sol, args.seed, c=args.c)
    out = save_instance(prob, args.out)
    print(f"wrote {out} (m={prob.m}, n={prob.n}, nnz={prob.A.nnz}, V*={prob.optimal_value:.17g})")
    return EXIT_OK


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    problem = load_instance(args.instance)
    config = _solver_config(_config_dict(args), problem)
    setup = time.perf_counter() - t0
    try:
        res = run(problem, config)
    except SolverError as exc:
        _write_trace(args.out, problem, exc.trace or [])
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    _write_trace(args.out, problem, res.trace)
    if problem.optimal_value is not None:
        print(f"final rel_error={problem.relative_error(res.final_objective):.6e}")
    print(f"objective={res.final_objective:.17g} iterations={res.iterations} status={res.status}")
    print(f"setup_s={setup:.3f}")
    return EXIT_OK if res.status in ("converged", "target") else EXIT_NOCONV


def _bench_instance(spec: dict, rep: int, base: Path):
    if "path" in spec:
        p = Path(spec["path"])
        return load_instance(p if p.is_absolute() else base / p)
    try:
        return generate_nesterov(int(spec["m"]), int(spec["n"]), float(spec["s_A"]), float(spec["s_sol"]),
                                 int(spec.get("seed", 0)) + rep, c=float(spec.get("c", 1.0)))
    except KeyError as exc:
        raise ConfigError(f"instance spec needs m, n, s_A, s_sol (missing {exc})") from exc


def cmd_bench(args) -> int:
    exp = _load_json(args.experiment)
    reps = int(exp.get("repetitions", 1))
    if reps < 1:
        raise ConfigError("repetitions must be >= 1")
    configs = exp.get("configs")
    if not isinstance(configs, dict) or not configs:
        raise ConfigError("experiment needs a nonempty 'configs' object keyed by label")
    if "instance" not in exp:
        raise ConfigError("experiment needs an 'instance' entry")
    out = Path(args.out if args.out is not None else exp.get("output", "bench.csv"))
    runs_out = out.with_name(out.stem + "_runs" + out.suffix)
    base = Path(args.experiment).resolve().parent
    env_workers = os.environ.get("HYFLEXA_WORKERS")

    sums = {label: {} for label in configs}  # label -> k -> [sum re, sum t, count]
    run_rows = []
    for rep in range(reps):
        problem = _bench_instance(exp["instance"], rep, base)
        for label, cfg in configs.items():
            cfg = dict(cfg)
            seed = int(cfg.get("seed", 0)) + rep
            cfg["seed"] = seed
            if env_workers and "run.workers" not in cfg:
                cfg["run.workers"] = int(env_workers)
            status, err, res = "ok", "", None
            try:
                res = run(problem, _solver_config(cfg, problem))
                status = res.status
            except (SolverError, HyflexaError) as exc:
                status, err = "failed", str(exc).replace("\n", " ")
            if res is None or problem.optimal_value is None:
                run_rows.append((label, rep, seed, status, "", "", "", err))
                continue
            acc = sums[label]
            for t in res.trace:
                s = acc.setdefault(t.k, [0.0, 0.0, 0])
                s[0] += problem.relative_error(t.objective)
                s[1] += t.elapsed
                s[2] += 1
            elapsed = res.trace[-1].elapsed if res.trace else 0.0
            run_rows.append((label, rep, seed, status, res.iterations,
                             problem.relative_error(res.final_objective), elapsed, err))

    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for label in configs:
            for k in sorted(sums[label]):
                s_re, s_t, cnt = sums[label][k]
                w.writerow([label, k, _fmt(s_re / cnt), _fmt(s_t / cnt), cnt])
    with open(runs_out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        for row in run_rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    failed = sum(r[3] == "failed" for r in run_rows)
    print(f"wrote {out} and {runs_out} ({len(run_rows)} runs, {failed} failed)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hyflexa", description="Hybrid random/greedy block method for LASSO instances.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic instance with a certified optimum")
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--s-sol", type=float, required=True, help="percent of nonzeros in x*")
    g.add_argument("--s-a", type=float, required=True, help="percent of nonzeros per column of A")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--c", type=float, default=1.0, help="l1 weight")
    g.add_argument("--out", type=Path, required=True, help="instance directory")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run the solver on an instance and write a trace CSV")
    s.add_argument("instance", type=Path, help="instance directory")
    s.add_argument("--out", type=Path, default=Path("trace.csv"))
    _add_solver_flags(s)
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="repeat configurations over seeds and aggregate the traces")
    b.add_argument("experiment", type=Path, help="experiment JSON")
    b.add_argument("--out", type=Path, help="aggregate CSV (runs go to <stem>_runs.csv)")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HyflexaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
