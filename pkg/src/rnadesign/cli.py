"""Command-line entry point: ``rnadesign <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

from . import policy as pol
from .folding import FOLDERS, get_oracle
from .structure import parse_dot_bracket, read_structures, write_structures

log = logging.getLogger("rnadesign")

STRATEGIES = ("learna", "meta", "meta-adapt", "random", "hillclimb")
_UNITS = {"": 1, "s": 1, "sec": 1, "m": 60, "min": 60, "h": 3600, "d": 86400}


def parse_duration(text: str) -> float:
    m = re.fullmatch(r"\s*([0-9]*\.?[0-9]+)\s*([a-z]*)\s*", str(text).lower())
    if not m or m.group(2) not in _UNITS:
        raise argparse.ArgumentTypeError(f"bad duration {text!r} (try 30, 30s, 10min, 1h)")
    return float(m.group(1)) * _UNITS[m.group(2)]


def _policy_config(path):
    if not path:
        return pol.PolicyConfig()
    with open(path) as fh:
        raw = json.load(fh)
    if "state_radius" in raw and "dense_layers" in raw and isinstance(raw["dense_layers"], list):
        return pol.PolicyConfig.from_dict(raw)
    from .tuner import to_policy_config

    return to_policy_config(raw)


def _targets(args):
    if getattr(args, "target", None):
        return [parse_dot_bracket(t) for t in args.target]
    if getattr(args, "targets", None):
        return read_structures(args.targets)
    raise SystemExit("give --target STRUCTURE or --targets FILE")


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _restart(args):
    return None if args.no_restart else args.restart_period


def _solver(args):
    from .bench.harness import SolverSpec

    params = pol.load(args.checkpoint) if args.checkpoint else None
    cfg = params.config if params is not None and not args.config else _policy_config(args.config)
    return SolverSpec(args.strategy, args.folder, cfg, params, lis_enabled=not args.no_lis,
                      restart_period=_restart(args))


def cmd_design(args):
    from .bench.harness import SOLVERS

    solver = _solver(args)
    oracle = get_oracle(args.folder)
    out = _out_dir(args) if args.out else None
    sink = open(out / "design.jsonl", "w") if out else None
    code = 1
    for i, t in enumerate(_targets(args)):
        res = SOLVERS[args.strategy](solver, t, oracle, args.timeout, args.seed + i)
        code = 0 if res.solved else code
        print(f"{t.text}\t{res.sequence}\t{'solved' if res.solved else 'unsolved'}\t"
              f"distance={res.distance}\ttime={res.solve_time if res.solved else res.elapsed:.3f}\t"
              f"episodes={res.episodes}\trestarts={res.restarts}")
        if sink:
            sink.write(json.dumps(res.record()) + "\n")
            for h in res.history:
                sink.write(json.dumps({"kind": "train", "target": t.text, **h}) + "\n")
    if sink:
        sink.close()
    return code


def cmd_meta_train(args):
    from .trainer import MetaTrainStats, TrainLoopConfig, run_meta_train

    cfg = _policy_config(args.config)
    loop = TrainLoopConfig(strategy="meta_learna", worker_count=args.workers, lis_enabled=not args.no_lis,
                           time_budget=args.timeout)
    out = _out_dir(args)
    stats = MetaTrainStats()
    with open(out / "meta_train.jsonl", "w") as sink:
        params = run_meta_train(_targets(args), loop, cfg, get_oracle(args.folder), args.timeout, seed=args.seed,
                                on_stats=lambda rec: sink.write(json.dumps(rec) + "\n"), stats_out=stats)
    ckpt = Path(args.checkpoint or out / "policy.ckpt")
    pol.save(params, ckpt)
    print(f"updates={stats.updates} episodes={stats.consumed} checkpoint={ckpt}")
    return 0


def cmd_tune(args):
    from .tuner import (KDESampler, SearchSpace, default_space, evaluate_config, run_hyperband, select_final,
                        to_policy_config)

    meta = args.strategy in ("meta", "meta-adapt")
    space = SearchSpace.from_json(args.config) if args.config else default_space(meta)
    rungs = [parse_duration(r) for r in args.rungs.split(",")]
    validation = _targets(args)
    train = read_structures(args.train_targets) if args.train_targets else None
    oracle = get_oracle(args.folder)
    strategy = {"learna": "learna", "meta": "meta_learna", "meta-adapt": "meta_learna_adapt"}[args.strategy]
    out = _out_dir(args)
    infos = {}
    counter = {"n": 0}

    def evaluate(config, budget):
        counter["n"] += 1
        loss, info = evaluate_config(config, validation, budget, args.objective, oracle, strategy=strategy,
                                     train_targets=train, eval_timeout=args.eval_timeout, seed=args.seed)
        return loss, info

    with open(out / "tune_history.jsonl", "w") as sink:
        def on_trial(t):
            infos.setdefault(t.config_id, {}).update({k: v for k, v in t.info.items() if k != "records"})
            sink.write(json.dumps(t.record()) + "\n")
            sink.flush()

        res = run_hyperband(space, rungs, evaluate, sampler=KDESampler(space, args.seed),
                            max_evaluations=args.evaluations, seed=args.seed, on_trial=on_trial)
    cid, config, loss, rung = select_final(res.ranked, infos)
    final = to_policy_config(config)
    (out / "best_config.json").write_text(json.dumps(final.to_dict(), indent=2))
    print(f"selected config {cid} (loss {loss:.4f} at rung {rung}) -> {out / 'best_config.json'}")
    return 0


def cmd_make_dataset(args):
    from .bench.dataset import DESK_SCALE, FULL_SCALE, make_dataset

    base = dict(FULL_SCALE if args.preset == "full" else DESK_SCALE)
    for key, val in (("count_train", args.train), ("count_val", args.val), ("count_test", args.test),
                     ("filter_budget", args.filter_budget)):
        if val is not None:
            base[key] = val
    if args.min_length or args.max_length:
        lo, hi = base["length_range"]
        base["length_range"] = (args.min_length or lo, args.max_length or hi)
    splits = make_dataset(oracle=get_oracle(args.folder), seed=args.seed, **base)
    out = _out_dir(args)
    for name, items in zip(("train", "validation", "test"), splits):
        write_structures(out / f"{name}.txt", items)
        print(f"{name}: {len(items)} -> {out / (name + '.txt')}")
    return 0


def cmd_benchmark(args):
    from .bench.harness import PRESETS, BenchmarkSpec, run_benchmark
    from .bench.report import report_tables, write_report

    targets = _targets(args)
    timeout, runs = args.timeout, args.runs
    if args.preset:
        p_timeout, p_runs, _ = PRESETS[args.preset]
        timeout = timeout or p_timeout
        runs = runs or p_runs
    spec = BenchmarkSpec(args.preset or Path(args.targets or "targets").stem, timeout or 60.0, runs or 1, targets)
    solver = _solver(args)
    report = run_benchmark(spec, solver, seed=args.seed, workers=args.workers,
                           on_record=lambda r: log.info("target %d run %d solved=%s", r.target_index, r.run, r.solved))
    paths = write_report(report, _out_dir(args), prefix=f"{spec.name}_{args.strategy}", figures=not args.no_figures)
    sys.stdout.write(report_tables(report))
    for k, v in paths.items():
        log.info("%s: %s", k, v)
    return 0


def cmd_report(args):
    from .bench.harness import EvalReport
    from .bench.report import report_tables, write_report

    report = EvalReport.from_jsonl(args.records)
    if args.out:
        write_report(report, _out_dir(args), prefix=Path(args.records).stem.replace("_records", ""),
                     figures=not args.no_figures)
    sys.stdout.write(report_tables(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rnadesign", description="RNA sequence design by reinforcement learning")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, targets=True):
        p.add_argument("--folder", choices=sorted(FOLDERS), default="nussinov")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", help="policy config or search-space JSON")
        p.add_argument("--out", help="output directory")
        if targets:
            p.add_argument("--targets", help="file with one dot-bracket structure per line")
            p.add_argument("--target", action="append", help="dot-bracket structure (repeatable)")

    def solver_flags(p):
        p.add_argument("--strategy", choices=STRATEGIES, default="learna")
        p.add_argument("--checkpoint", help="policy checkpoint for meta strategies")
        p.add_argument("--no-lis", action="store_true", help="disable the local improvement step")
        p.add_argument("--restart-period", type=parse_duration, default=None, help="reinitialise after this long")
        p.add_argument("--no-restart", action="store_true")

    p = sub.add_parser("design", help="design sequences for target structures")
    common(p)
    solver_flags(p)
    p.add_argument("--timeout", type=parse_duration, default=60.0)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("meta-train", help="train one policy on a set of targets")
    common(p)
    p.add_argument("--timeout", type=parse_duration, default=600.0, help="training time")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--checkpoint", help="where to write the trained policy")
    p.add_argument("--no-lis", action="store_true")
    p.set_defaults(func=cmd_meta_train)

    p = sub.add_parser("tune", help="joint architecture and hyperparameter search")
    common(p)
    p.add_argument("--strategy", choices=("learna", "meta", "meta-adapt"), default="learna")
    p.add_argument("--train-targets", help="training structures for meta strategies")
    p.add_argument("--rungs", default="20,60,180", help="comma-separated budget ladder (factor 3)")
    p.add_argument("--evaluations", type=int, default=50)
    p.add_argument("--objective", choices=("unsolved_count", "sum_mean_distance", "sum_min_distance"),
                   default="sum_min_distance")
    p.add_argument("--eval-timeout", type=parse_duration, default=60.0)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("make-dataset", help="generate train/validation/test target sets")
    common(p, targets=False)
    p.add_argument("--preset", choices=("desk", "full"), default="desk")
    p.add_argument("--train", type=int)
    p.add_argument("--val", type=int)
    p.add_argument("--test", type=int)
    p.add_argument("--min-length", type=int)
    p.add_argument("--max-length", type=int)
    p.add_argument("--filter-budget", type=parse_duration)
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("benchmark", help="evaluate a solver over seeded runs")
    common(p)
    solver_flags(p)
    p.add_argument("--preset", choices=("eterna100", "rfam-taneda", "rfam-learn-test", "desk", "desk-quick"))
    p.add_argument("--timeout", type=parse_duration)
    p.add_argument("--runs", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("report", help="render tables and figures from benchmark records")
    p.add_argument("records", help="records JSONL written by 'benchmark'")
    p.add_argument("--out", help="directory for tables and figures")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
