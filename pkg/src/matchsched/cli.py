"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 input-file error, 3 simulation error.
The ``TESSERAE_SEED`` environment variable, when set, overrides ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .bench import bench_overhead
from .errors import SchedulingError
from .profiling import ProfileStore, synthetic_profile
from .simulator import (
    SimConfig,
    TraceSpec,
    dumps,
    generate_trace,
    load_trace,
    noise_sweep,
    run_simulation,
    save_results,
    save_trace,
)

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_SIM = 0, 1, 2, 3

PRESETS = {
    "tesserae-t": ("tiresias", True, "tesserae"),
    "tesserae-ftf": ("ftf", True, "tesserae"),
    "tesserae-fifo": ("fifo", True, "tesserae"),
    "tiresias": ("tiresias", False, "naive"),
    "ftf": ("ftf", False, "naive"),
    "fifo": ("fifo", False, "naive"),
}


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _seed(args) -> int:
    env = os.environ.get("TESSERAE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"TESSERAE_SEED must be an integer, got {env!r}") from None
    return args.seed


def _add_sim_flags(p):
    p.add_argument("--trace", required=True, help="trace file (tesserae-trace/1)")
    p.add_argument("--profile", help="profile file (tesserae-profile/1); default: synthetic")
    p.add_argument("--profile-seed", type=int, default=0, help="seed of the synthetic profile")
    p.add_argument("--gpus", type=int, default=32)
    p.add_argument("--gpus-per-node", type=int, default=4)
    p.add_argument("--round-seconds", type=float, default=360.0)
    p.add_argument("--penalty", type=float, default=30.0, help="seconds lost per migration")
    p.add_argument("--max-pack", type=int, default=2)
    p.add_argument("--noise", type=float, default=0.0, help="profile noise n_p in [0, 1]")
    p.add_argument("--optimize-strategy", type=_on_off, default=False, metavar="on|off")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="matchsched", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-trace", help="generate a synthetic job trace")
    p.add_argument("--style", choices=("shockwave", "gavel"), default="shockwave")
    p.add_argument("--num-jobs", type=int, default=120)
    p.add_argument("--arrival-rate", type=float, default=80.0, help="jobs per hour")
    p.add_argument("--llm-fraction", type=float, default=None)
    p.add_argument("--no-pack-fraction", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gen-profile", help="write a synthetic profile file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pair-range", type=float, nargs=2, default=(0.35, 0.8), metavar=("LO", "HI"))
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="run one configuration on a trace")
    _add_sim_flags(p)
    p.add_argument("--policy", choices=("fifo", "tiresias", "ftf"), default="tiresias")
    p.add_argument("--packing", type=_on_off, default=True, metavar="on|off")
    p.add_argument("--migration", choices=("tesserae", "flat", "naive"), default="tesserae")
    p.add_argument("--record-latency", action="store_true",
                   help="include per-round decision latency (makes output non-reproducible)")
    p.add_argument("--out", help="results file (tesserae-results/1)")

    p = sub.add_parser("compare", help="run several configurations on one trace, emit CSV")
    _add_sim_flags(p)
    p.add_argument("--config", action="append", default=[], dest="configs",
                   help="NAME or NAME=POLICY,PACKING,MIGRATION; presets: " + ", ".join(PRESETS))
    p.add_argument("--baseline", help="configuration the ratio rows divide by (default: first)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="CSV path (default: stdout)")

    p = sub.add_parser("noise-sweep", help="average JCT as profile noise grows")
    _add_sim_flags(p)
    p.add_argument("--policy", choices=("fifo", "tiresias", "ftf"), default="tiresias")
    p.add_argument("--levels", type=float, nargs="+", default=[0.0, 0.2, 0.5, 1.0])
    p.add_argument("--out", help="CSV path (default: stdout)")

    p = sub.add_parser("bench-overhead", help="time one round decision")
    p.add_argument("--gpus", type=int, default=256)
    p.add_argument("--gpus-per-node", type=int, default=4)
    p.add_argument("--jobs", type=int, nargs="+", default=[2048])
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="JSON path (default: table on stdout only)")
    return parser


def _load_inputs(args):
    try:
        trace = load_trace(args.trace)
        if args.profile:
            profiles = ProfileStore.load(args.profile)
        else:
            profiles = synthetic_profile(args.profile_seed)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read input: {exc}") from exc
    return trace, profiles


def _sim_config(args, seed, policy, packing, migration, **extra) -> SimConfig:
    try:
        return SimConfig(
            num_gpus=args.gpus, gpus_per_node=args.gpus_per_node,
            round_seconds=args.round_seconds, migration_penalty_seconds=args.penalty,
            max_pack=args.max_pack, rng_seed=seed, policy=policy, packing_enabled=packing,
            migration_kind=migration, profile_noise=args.noise,
            optimize_strategy=args.optimize_strategy, **extra)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _flags(args, seed) -> dict:
    flags = {k: v for k, v in vars(args).items() if k != "out"}
    flags["seed"] = seed
    return flags


def _write_text(path, text: str):
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w") as f:
            f.write(text)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from exc


def cmd_gen_trace(args) -> int:
    seed = _seed(args)
    try:
        spec = TraceSpec(args.style, args.num_jobs, args.arrival_rate, seed,
                         args.llm_fraction, args.no_pack_fraction)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    jobs = generate_trace(spec)
    try:
        save_trace(args.out, jobs, spec)
    except OSError as exc:
        raise InputError(f"cannot write {args.out}: {exc}") from exc
    print(f"wrote {len(jobs)} jobs to {args.out} (style={spec.style}, seed={seed})")
    return EXIT_OK


def cmd_gen_profile(args) -> int:
    store = synthetic_profile(_seed(args), pair_range=tuple(args.pair_range))
    try:
        store.dump(args.out)
    except OSError as exc:
        raise InputError(f"cannot write {args.out}: {exc}") from exc
    print(f"wrote profile to {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    seed = _seed(args)
    trace, profiles = _load_inputs(args)
    config = _sim_config(args, seed, args.policy, args.packing, args.migration,
                         record_latency=args.record_latency)
    report = run_simulation(trace, profiles, config, {"cli": _flags(args, seed)})
    print(f"avg_jct_s={report.avg_jct:.3f} makespan_s={report.makespan:.3f} "
          f"migrations={report.migration_total}")
    if args.out:
        try:
            save_results(args.out, report, include_latency=args.record_latency)
        except OSError as exc:
            raise InputError(f"cannot write {args.out}: {exc}") from exc
    return EXIT_OK


def parse_config(text: str):
    """``NAME`` (a preset) or ``NAME=POLICY,PACKING,MIGRATION``."""
    if "=" not in text:
        if text not in PRESETS:
            raise UsageError(f"unknown preset {text!r}; presets: {', '.join(PRESETS)}")
        return text, PRESETS[text]
    name, body = text.split("=", 1)
    parts = body.split(",")
    if len(parts) != 3 or parts[1] not in ("on", "off"):
        raise UsageError(f"bad configuration {text!r}; expected NAME=POLICY,on|off,MIGRATION")
    return name, (parts[0], parts[1] == "on", parts[2])


def _run_named(item):
    name, trace, profiles, config = item
    return name, run_simulation(trace, profiles, config)


def cmd_compare(args) -> int:
    if not args.configs:
        raise UsageError("compare needs at least one --config")
    seed = _seed(args)
    named = [parse_config(c) for c in args.configs]
    names = [n for n, _ in named]
    if len(set(names)) != len(names):
        raise UsageError("configuration names must be unique")
    baseline = args.baseline or names[0]
    if baseline not in names:
        raise UsageError(f"baseline {baseline!r} is not one of the configurations")
    trace, profiles = _load_inputs(args)
    items = [(n, trace, profiles, _sim_config(args, seed, *c)) for n, c in named]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            results = dict(pool.map(_run_named, items))
    else:
        results = dict(map(_run_named, items))

    fields = ["config", "avg_jct_s", "makespan_s", "migrations", "worst_ftf", "mean_decision_ms"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    rows = {}
    for name in sorted(results):
        r = results[name]
        rows[name] = [r.avg_jct, r.makespan, r.migration_total, r.worst_ftf, r.mean_decision_ms]
        writer.writerow([name] + [f"{x:.6g}" for x in rows[name]])
    base = rows[baseline]
    for name in sorted(results):
        if name == baseline:
            continue
        ratio = [a / b if b else float("nan") for a, b in zip(rows[name], base)]
        writer.writerow([f"{name}/{baseline}"] + [f"{x:.6g}" for x in ratio])
    _write_text(args.out, buf.getvalue())
    return EXIT_OK


def cmd_noise_sweep(args) -> int:
    seed = _seed(args)
    trace, profiles = _load_inputs(args)
    config = _sim_config(args, seed, args.policy, True, "tesserae")
    rows = noise_sweep(trace, profiles, config, args.levels)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, ["noise", "avg_jct_s", "makespan_s", "jct_ratio"],
                            lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: f"{v:.6g}" for k, v in row.items()})
    _write_text(args.out, buf.getvalue())
    return EXIT_OK


def cmd_bench_overhead(args) -> int:
    seed = _seed(args)
    rows = bench_overhead(args.gpus, args.gpus_per_node, args.jobs, seed, repeats=args.repeats)
    print(f"{'jobs':>6} {'total_s':>9} {'sched_s':>9} {'pack_s':>9} {'migr_s':>9}")
    for r in rows:
        print(f"{r['jobs']:>6} {r['total_s']:>9.4f} {r['scheduling_s']:>9.4f} "
              f"{r['packing_s']:>9.4f} {r['migration_s']:>9.4f}")
    if args.out:
        _write_text(args.out, dumps({"gpus": args.gpus, "gpus_per_node": args.gpus_per_node,
                                     "seed": seed, "rows": rows}))
    return EXIT_OK


COMMANDS = {
    "gen-trace": cmd_gen_trace,
    "gen-profile": cmd_gen_profile,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "noise-sweep": cmd_noise_sweep,
    "bench-overhead": cmd_bench_overhead,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SchedulingError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
