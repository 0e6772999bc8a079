"""Command line entry point: ``elfcore {train,eval,gen-task,oracle-check,sweep}``.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 oracle mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields

from .config import Mode, load_config
from .errors import ConfigError, DataError, ElfError
from .oracle import SUITES, oracle_check
from .task import SyntheticTaskSpec, generate_task

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ORACLE = 0, 1, 2, 3

log = logging.getLogger("elfcore")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with [network] [neuron] [learning] [dsst] [run] sections")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--sparsity", type=float)
    p.add_argument("--dsst-period", type=int)
    p.add_argument("--static-mask", action="store_true", help="never prune or regrow")
    p.add_argument("--no-gating", action="store_true", help="perform every weight update")
    p.add_argument("--parallel", action="store_true", help="per-group and per-layer worker threads")


def _task_flags(p: argparse.ArgumentParser) -> None:
    for f in fields(SyntheticTaskSpec):
        p.add_argument("--" + f.name.replace("_", "-"), type=type(f.default), default=None,
                       dest=f"task_{f.name}")


def _config_from(args):
    overrides = {
        "seed": args.seed, "epochs": args.epochs, "mode": args.mode, "sparsity": args.sparsity,
        "dsst_period": args.dsst_period,
    }
    if args.parallel:
        overrides["parallel"] = True
    if args.no_gating:
        overrides["gating"] = False
    cfg = load_config(args.config, **overrides)
    if args.static_mask:
        cfg = cfg.replace(dsst_period=None)
    return cfg


def _task_from(args, **defaults) -> SyntheticTaskSpec:
    values = dict(defaults)
    values.update({f.name: getattr(args, f"task_{f.name}") for f in fields(SyntheticTaskSpec)
                   if getattr(args, f"task_{f.name}") is not None})
    try:
        return SyntheticTaskSpec(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_seeds(text: str) -> list[int]:
    seeds: list[int] = []
    try:
        for part in text.split(","):
            if "-" in part.strip()[1:]:
                lo, hi = part.split("-")
                seeds += list(range(int(lo), int(hi) + 1))
            elif part.strip():
                seeds.append(int(part))
    except ValueError as exc:
        raise UsageError(f"bad seed list {text!r}") from exc
    if not seeds:
        raise UsageError("empty seed list")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="elfcore", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train on an event dataset")
    t.add_argument("dataset", help="task directory (train/test .elf-events) or one event file")
    t.add_argument("--out", required=True, help="output directory for metrics and checkpoint")
    _run_flags(t)

    e = sub.add_parser("eval", help="inference-only evaluation of a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("dataset")
    e.add_argument("--split", default="test", choices=["train", "test"])
    e.add_argument("--out", help="write the evaluation as JSON here")

    g = sub.add_parser("gen-task", help="write a synthetic task")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    _task_flags(g)

    o = sub.add_parser("oracle-check", help="differential tests of the fast kernels")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--instances", type=int, default=10_000)
    o.add_argument("--max-m", type=int, default=64)
    o.add_argument("--suites", default=",".join(SUITES))
    o.add_argument("--inject-fault", choices=SUITES, help=argparse.SUPPRESS)

    s = sub.add_parser("sweep", help="variants x seeds on generated tasks; CSV and figures")
    s.add_argument("--out", required=True)
    s.add_argument("--variants", default="dsst,static,dense,no-gating")
    s.add_argument("--seeds", default="0-4", help="comma list with ranges, e.g. 0-4 or 1,3,7")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--dataset", help="use this dataset for every seed instead of generating tasks")
    _run_flags(s)
    _task_flags(s)
    return p


def cmd_train(args) -> int:
    from .train import run_train

    cfg = _config_from(args)
    res = run_train(cfg, args.dataset, args.out)
    if res.summary:
        print(json.dumps({"accuracy": res.summary["accuracy"], "out": args.out}))
    else:
        print(json.dumps({"accuracy": None, "out": args.out}))
    return EXIT_OK


def cmd_eval(args) -> int:
    from .train import run_eval

    ev = run_eval(args.checkpoint, args.dataset, args.split)
    doc = ev.to_dict()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
    for name, acc in ev.accuracy.items():
        print(f"{name}\t{acc:.4f}")
    return EXIT_OK


def cmd_gen_task(args) -> int:
    info = generate_task(_task_from(args), args.seed, args.out)
    print(json.dumps({"out": args.out, "train": info["train"]["samples"],
                      "test": info.get("test", {}).get("samples", 0), "warnings": info["warnings"]}))
    return EXIT_OK


def cmd_oracle(args) -> int:
    suites = tuple(s for s in args.suites.split(",") if s)
    try:
        report = oracle_check(args.seed, args.instances, args.max_m, fault=args.inject_fault, suites=suites)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(report.render())
    return EXIT_OK if report.ok else EXIT_ORACLE


def cmd_sweep(args) -> int:
    from .report import write_report
    from .sweep import VARIANTS, run_sweep

    cfg = _config_from(args)
    variants = [v for v in args.variants.split(",") if v]
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise UsageError(f"unknown variants {unknown}; known: {', '.join(VARIANTS)}")
    task = _task_from(args, width=cfg.input_width, classes=cfg.output_size)
    rows = run_sweep(cfg, variants, _parse_seeds(args.seeds), out=args.out, task=task,
                     dataset=args.dataset, jobs=args.jobs)
    paths = write_report(rows, args.out)
    print("variant,seed,accuracy,wu_final_quarter")
    for r in rows:
        print(f"{r.variant},{r.seed},{r.accuracy:.4f},{r.wu_final_quarter}")
    for p in paths:
        log.info("wrote %s", p)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "gen-task": cmd_gen_task,
            "oracle-check": cmd_oracle, "sweep": cmd_sweep}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ElfError as exc:
        # codec and store errors surface while reading input files
        print(f"data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
