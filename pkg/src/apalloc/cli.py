"""Command-line front end: generate, run, compare, tune.

Exit codes: 0 success, 1 usage error, 2 input-data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .model import InitMode
from .policies import POLICY_NAMES
from .sim.engine import METRIC_FIELDS, RunMetrics, run, write_timeseries
from .sim.io import InputError, load_experiment, parse_seeds, write_topology, write_trace
from .sim.tuning import TUNE_FIELDS, capture_instances, sweep

EXIT_OK, EXIT_USAGE, EXIT_INPUT = 0, 1, 2

ALGORITHM_LABELS = {
    "real": "Centralized (real)",
    "predicted": "Centralized (predicted)",
    "distributed": "Distributed (predicted)",
    "terminal": "Terminal-side",
    "closest": "Closest-AP",
}
COMPARE_FIELDS = ("policy", "algorithm", "loss_percent", "loss_std", "handover_ms", "seeds")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _clusters(text: str):
    if text == "auto":
        return "auto"
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'auto' or a cluster count") from None
    if k < 1:
        raise argparse.ArgumentTypeError("cluster count must be >= 1")
    return k


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="apalloc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seeds=True):
        sp.add_argument("--config", default="bundled:pre5g",
                        help="TOML config path or bundled:<name> (default: %(default)s)")
        if seeds:
            sp.add_argument("--seeds", help="'A..B' or 'a,b,c'; defaults to the config's list")
        sp.add_argument("--out", help="output file (default: stdout)")

    def controller(sp):
        sp.add_argument("--iterations", type=int, help="search iterations per decision")
        sp.add_argument("--init", choices=[m.value for m in InitMode], help="search start")
        sp.add_argument("--clusters", type=_clusters, help="'auto' or a fixed K")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    g = sub.add_parser("generate", help="write a scenario as topology and trace CSVs")
    common(g, seeds=False)
    g.add_argument("--seed", type=int, help="scenario seed (default: first config seed)")

    r = sub.add_parser("run", help="one policy over several seeds")
    common(r)
    r.add_argument("--policy", required=True, help=f"one of {', '.join(POLICY_NAMES)}")
    r.add_argument("--timeseries", help="directory for per-tick CSVs")
    controller(r)

    c = sub.add_parser("compare", help="all five policies, table of losses and handover times")
    common(c)
    controller(c)

    t = sub.add_parser("tune", help="fitness against iteration budget per start mode")
    common(t)
    t.add_argument("--modes", default="empty,previous", help="comma list of init modes")
    t.add_argument("--grid", type=_int_list, default=[0, 5, 10, 20, 40],
                   help="comma list of iteration counts (default: 0,5,10,20,40)")
    t.add_argument("--every", type=int, default=10, help="sample a decision every N ticks")
    t.add_argument("--format", choices=("csv", "json"), default="csv")
    return p


def _workers(n_jobs: int) -> int:
    cap = os.environ.get("APALLOC_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            raise UsageError(f"APALLOC_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(limit, n_jobs))


def _fan_out(fn, jobs: list) -> list:
    """Map over jobs, in order, across processes when allowed."""
    workers = _workers(len(jobs))
    if workers == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _experiment(args):
    exp = load_experiment(args.config)
    ctl = exp.controller
    changes = {}
    if getattr(args, "iterations", None) is not None:
        if args.iterations < 0:
            raise UsageError("--iterations must be >= 0")
        changes["iterations"] = args.iterations
    if getattr(args, "init", None):
        changes["init_mode"] = InitMode(args.init)
    if getattr(args, "clusters", None) is not None:
        changes["clusters"] = args.clusters
    if changes:
        exp = replace(exp, controller=replace(ctl, **changes))
    seeds = exp.seeds
    if getattr(args, "seeds", None):
        try:
            seeds = parse_seeds(args.seeds)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return exp, seeds


def _run_job(job) -> RunMetrics:
    exp, policy, seed = job
    return run(exp.build(seed), policy, exp.controller, seed=seed)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _mean_std(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return 0.0, 0.0
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


def _emit(rows: list[dict], fields, fmt: str, out):
    if fmt == "json":
        json.dump(rows, out, indent=2)
        out.write("\n")
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in fields])


def _output(args):
    if not args.out:
        return _Stdout()
    return open(args.out, "w", newline="")


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()
        return False


def cmd_generate(args) -> int:
    exp, _ = _experiment(args)
    seed = exp.seeds[0] if args.seed is None else args.seed
    if args.seed is None:
        print(f"no --seed given, using {seed}", file=sys.stderr)
    sc = exp.build(seed)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "topology.csv", "w", newline="") as fh:
        write_topology(fh, sc)
    with open(out / "trace.csv", "w", newline="") as fh:
        write_trace(fh, sc)
    n_mouse = int((~sc.ap_elephant).sum())
    print(f"seed {seed}: {sc.n_aps} APs ({n_mouse} mouse, {sc.n_aps - n_mouse} elephant), "
          f"{sc.n_users} terminals, {len(sc.sessions)} flows, {len(sc.history)} history flows, "
          f"{sc.n_ticks} ticks -> {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    if args.policy not in POLICY_NAMES:
        raise UsageError(f"unknown policy {args.policy!r}; valid: {', '.join(POLICY_NAMES)}")
    exp, seeds = _experiment(args)
    results = _fan_out(_run_job, [(exp, args.policy, s) for s in seeds])
    rows = [m.row() for m in results]
    if args.format == "json":
        agg = {"policy": args.policy, "seed": "aggregate"}
        for k in METRIC_FIELDS[2:]:
            mean, std = _mean_std([r[k] for r in rows])
            agg[k] = {"mean": mean, "std": std}
    else:
        agg = {"policy": args.policy, "seed": "aggregate"}
        for k in METRIC_FIELDS[2:]:
            mean, std = _mean_std([r[k] for r in rows])
            agg[k] = f"{mean!r}±{std!r}"
    with _output(args) as out:
        _emit(rows + [agg], METRIC_FIELDS, args.format, out)
    if args.timeseries:
        d = Path(args.timeseries)
        d.mkdir(parents=True, exist_ok=True)
        for m in results:
            with open(d / f"{m.policy}_seed{m.seed}.csv", "w", newline="") as fh:
                write_timeseries(m, fh)
    return EXIT_OK


def cmd_compare(args) -> int:
    exp, seeds = _experiment(args)
    jobs = [(exp, p, s) for p in POLICY_NAMES for s in seeds]
    results = _fan_out(_run_job, jobs)
    rows = []
    for p in POLICY_NAMES:
        ms = [m for m in results if m.policy == p]
        mean, std = _mean_std([m.loss_percent for m in ms])
        rows.append({"policy": p, "algorithm": ALGORITHM_LABELS[p], "loss_percent": mean,
                     "loss_std": std, "handover_ms": ms[0].mean_handover_ms if ms else 0.0,
                     "seeds": len(ms)})
    with _output(args) as out:
        _emit(rows, COMPARE_FIELDS, args.format, out)
    return EXIT_OK


def _tune_job(job):
    exp, seed, modes, grid, every = job
    sc = exp.build(seed)
    inst = capture_instances(sc, exp.controller, seed, every=every)
    return sweep(inst, modes, grid, seed, exp.controller.parallel_width)


def cmd_tune(args) -> int:
    if not args.grid:
        raise UsageError("iteration grid is empty")
    if any(g < 0 for g in args.grid):
        raise UsageError("iteration counts must be >= 0")
    if args.every < 1:
        raise UsageError("--every must be >= 1")
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    valid = [m.value for m in InitMode]
    bad = [m for m in modes if m not in valid]
    if not modes or bad:
        raise UsageError(f"--modes takes a comma list of {', '.join(valid)}")
    exp, seeds = _experiment(args)
    per_seed = _fan_out(_tune_job, [(exp, s, modes, args.grid, args.every) for s in seeds])
    rows = [p.row() for pts in per_seed for p in pts]
    grid = sorted(set(args.grid))
    for mode in modes:
        for g in grid:
            sel = [r for r in rows if r["init_mode"] == mode and r["iterations"] == g]
            rows.append({"seed": "all", "init_mode": mode, "iterations": g,
                         "mean_fitness": float(np.mean([r["mean_fitness"] for r in sel])),
                         "instances": sum(r["instances"] for r in sel)})
    with _output(args) as out:
        _emit(rows, TUNE_FIELDS, args.format, out)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "compare": cmd_compare, "tune": cmd_tune}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"apalloc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"apalloc {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"apalloc {args.command}: cannot write output: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
