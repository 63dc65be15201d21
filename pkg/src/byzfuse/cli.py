"""Command-line entry point: ``byzfuse <command> [options]``.

Exit codes: 0 success, 2 invalid configuration, 3 capacity refusal,
4 acceptance check failed.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import bench, neural
from .core import CapacityError, ConfigError
from .genesis import Rng, build_dataset, global_recipe, load_dataset, save_dataset, split_dataset, with_scope
from .metrics import evaluate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAPACITY = 3
EXIT_ACCEPTANCE = 4


def _floats(text: str) -> list:
    return [float(t) for t in text.split(",") if t]


def _ints(text: str) -> list:
    return [int(t) for t in text.split(",") if t]


def _global_flags(defaults: bool) -> argparse.ArgumentParser:
    # shared so the flags work before or after the subcommand
    p = argparse.ArgumentParser(add_help=False)
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p.add_argument("--seed", type=int, default=d(0), help="master seed")
    p.add_argument("--out", default=d(None), help="output directory")
    p.add_argument("--plan", default=d(None), help="experiment plan (YAML)")
    p.add_argument("--samples", type=int, default=d(None),
                   help="Monte Carlo samples per cell, or samples per class for dataset commands")
    p.add_argument("--paper-architecture", action="store_true", default=d(False),
                   help="use the full 2048..64 hidden stack")
    p.add_argument("--threads", type=int, default=d(None), help="limit BLAS threads")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="byzfuse", description="Byzantine-robust decision fusion experiments",
                                     parents=[_global_flags(True)])
    sub = parser.add_subparsers(dest="command", required=True)
    common = _global_flags(False)

    p = sub.add_parser("generate", parents=[common], help="write a labelled dataset")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--m", type=int, default=4)

    p = sub.add_parser("train", parents=[common], help="train a fusion network")
    p.add_argument("--data", help="dataset directory (default: generate the global recipe)")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--train-fraction", type=float, default=0.8)

    p = sub.add_parser("evaluate", parents=[common], help="score a checkpoint or run a plan")
    p.add_argument("--checkpoint", help="network checkpoint to score on --data")
    p.add_argument("--data", help="dataset directory")

    p = sub.add_parser("reproduce-table", parents=[common], help="measure a published table")
    p.add_argument("which", choices=["table1", "table2"])
    p.add_argument("--rules", default="maj,hardis,softis,opt,dl")
    p.add_argument("--rows", default=None, help="comma-separated row keys (default: all)")
    p.add_argument("--epochs", type=int, default=150)

    p = sub.add_parser("sweep-alpha", parents=[common], help="neural accuracy versus alpha")
    p.add_argument("--ns", default="20")
    p.add_argument("--ms", default="4")
    p.add_argument("--rhos", default="0.1,0.95")
    p.add_argument("--alphas", default=None)
    p.add_argument("--check", action="store_true", help="fail unless every point reaches the published minimum")

    p = sub.add_parser("sweep-grid", parents=[common], help="neural accuracy over (n, m)")
    p.add_argument("--ns", default="10,20")
    p.add_argument("--ms", default="4,5")
    p.add_argument("--check", action="store_true")

    p = sub.add_parser("sweep-samples", parents=[common], help="neural performance versus samples per class")
    p.add_argument("--counts", default="50,100,250,500,1000,2000")
    p.add_argument("--check", action="store_true")

    p = sub.add_parser("timing", parents=[common], help="training and inference wall-clock time")
    p.add_argument("--hardware-note", default="")

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    p.add_argument("--no-batch-norm", action="store_true")
    p.add_argument("--tolerance", type=float, default=1e-4)
    return parser


def _plan(args) -> bench.ExperimentPlan:
    plan = bench.load_plan(args.plan) if args.plan else bench.ExperimentPlan()
    updates = {"seed": args.seed}
    if args.out is not None:
        updates["out"] = args.out
    if args.paper_architecture:
        updates["hidden_sizes"] = list(neural.PAPER_HIDDEN)
    return replace(plan, **updates)


def _out(args, default: str, create: bool = False) -> Path:
    # writers create their own directories, so a refused run leaves nothing behind
    path = Path(args.out or default)
    if create:
        path.mkdir(parents=True, exist_ok=True)
    return path


def _print_rows(rows) -> None:
    if not rows:
        return
    keys = list(rows[0].keys())
    print("  ".join(keys))
    for r in rows:
        print("  ".join(f"{r[k]:.4f}" if isinstance(r[k], float) else str(r[k]) for k in keys))


def _dataset(args, plan: bench.ExperimentPlan):
    if getattr(args, "data", None):
        return load_dataset(args.data)
    spc = args.samples or plan.samples_per_class
    if args.plan:
        configs = with_scope(plan.scenarios(), plan.dl_honesty_scope)
    else:
        configs = global_recipe(args.n, args.m, plan.epsilon)
    return build_dataset(configs, spc, args.seed)


def cmd_generate(args) -> int:
    plan = _plan(args)
    ds = _dataset(args, plan)
    meta, records = save_dataset(ds, _out(args, "dataset"))
    print(f"wrote {len(ds)} samples from {len(ds.configs)} classes to {records.parent}")
    return EXIT_OK


def cmd_train(args) -> int:
    plan = replace(_plan(args), epochs=args.epochs, train_fraction=args.train_fraction)
    ds = _dataset(args, plan)
    tr, te = split_dataset(ds, plan.train_fraction, Rng(args.seed).fork(bench._SPLIT_TAG))
    res = bench.train_and_score(tr, te, plan, args.seed)
    out = _out(args, "model", create=True)
    neural.save_checkpoint(res.params, out / "checkpoint.json")
    with open(out / "history.csv", "w") as fh:
        fh.write("epoch,loss\n")
        for i, loss in enumerate(res.history.losses):
            fh.write(f"{i + 1},{loss!r}\n")
    print(f"trained {len(res.history)} epochs on {len(tr)} samples in {res.train_seconds:.1f}s")
    print(f"test accuracy {res.metrics.accuracy:.4f}  pe {res.metrics.pe:.4f}  ber {res.metrics.ber:.4f}  "
          f"loss {res.test_loss:.5f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if args.checkpoint:
        if not args.data:
            raise ConfigError("--checkpoint needs --data")
        params = neural.load_checkpoint(args.checkpoint)
        x, y = load_dataset(args.data).arrays()
        est, _ = neural.predict_batch(params, x)
        print(json.dumps(evaluate(est, y.astype("int8")).to_dict(), indent=2))
        return EXIT_OK
    if not args.plan:
        raise ConfigError("evaluate needs --plan or --checkpoint")
    plan = _plan(args)
    if args.samples is not None:
        plan = replace(plan, mc_samples=args.samples)
    rows = bench.run_experiment(plan)
    if not plan.out:
        sys.stdout.write(bench.results_csv(rows))
    else:
        print(f"wrote {len(rows)} rows to {plan.out}")
    return EXIT_OK


def cmd_reproduce_table(args) -> int:
    rows = args.rows.split(",") if args.rows else None
    samples = args.samples if args.samples is not None else (12_500 if args.which == "table1" else 5_000)
    report = bench.reproduce_table(args.which, samples, args.seed, out=_out(args, args.which),
                                   rules=args.rules.split(","), row_keys=rows,
                                   paper_architecture=args.paper_architecture, epochs=args.epochs)
    for a in report.anchors:
        print(a.describe())
    for o in report.orderings:
        if not o.passed:
            print(f"{o.row}: ordering {o.worse} >= {o.better} violated "
                  f"({o.worse_error:.5f} < {o.better_error:.5f} - {o.slack:.5f})")
    print("table", args.which, "PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_ACCEPTANCE


def _claims() -> dict:
    return bench.load_reference_values()["claims"]


def cmd_sweep_alpha(args) -> int:
    alphas = _floats(args.alphas) if args.alphas else bench.DEFAULT_ALPHA_GRID
    out = _out(args, "sweep-alpha") / "alpha_sweep.csv"
    rows = bench.sweep_alpha(_ints(args.ns), _ints(args.ms), _floats(args.rhos), args.samples or 200, args.seed,
                             alphas=alphas, plan=_plan(args), out=out)
    _print_rows(rows)
    if args.check and min(r["accuracy"] for r in rows) < _claims()["alpha_sweep_min_accuracy"]:
        return EXIT_ACCEPTANCE
    return EXIT_OK


def cmd_sweep_grid(args) -> int:
    out = _out(args, "sweep-grid") / "grid.csv"
    rows = bench.sweep_window_and_size(_ints(args.ns), _ints(args.ms), args.samples or 200, args.seed,
                                       plan=_plan(args), out=out)
    _print_rows(rows)
    if args.check and min(r["accuracy"] for r in rows) < _claims()["grid_min_accuracy"]:
        return EXIT_ACCEPTANCE
    return EXIT_OK


def cmd_sweep_samples(args) -> int:
    out = _out(args, "sweep-samples") / "samples.csv"
    rows = bench.sweep_samples_per_class(_ints(args.counts), args.seed, plan=_plan(args), out=out)
    _print_rows(rows)
    if args.check and any(r["pe"] > 0.02 for r in rows if r["samples_per_class"] >= 200):
        return EXIT_ACCEPTANCE
    return EXIT_OK


def cmd_timing(args) -> int:
    plan = _plan(args)
    if args.samples is not None:
        plan = replace(plan, samples_per_class=args.samples)
    report = bench.timing_report(plan, args.seed, args.hardware_note)
    text = json.dumps(report.to_dict(), indent=2)
    print(text)
    if args.out:
        (_out(args, "timing", create=True) / "timing.json").write_text(text + "\n")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    spec = neural.NetworkSpec(input_size=12, hidden_sizes=(10, 8), output_size=3,
                              batch_norm=not args.no_batch_norm, seed=args.seed)
    report = neural.gradient_check(spec, tolerance=args.tolerance, seed=args.seed)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_ACCEPTANCE


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "reproduce-table": cmd_reproduce_table,
    "sweep-alpha": cmd_sweep_alpha,
    "sweep-grid": cmd_sweep_grid,
    "sweep-samples": cmd_sweep_samples,
    "timing": cmd_timing,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        from threadpoolctl import threadpool_limits
        limits = threadpool_limits(limits=args.threads)
    else:
        limits = contextlib.nullcontext()
    try:
        with limits:
            return COMMANDS[args.command](args)
    except CapacityError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
