"""Seeded ablation sweeps: variants x seeds, each run isolated."""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .task import SyntheticTaskSpec, generate_task
from .train import load_dataset, run_train

VARIANTS: dict[str, dict] = {
    "dsst": {},
    "static": {"dsst_period": None},
    "dense": {"sparsity": 0.0},
    "no-gating": {"gating": False},
    "skip-all": {"ia_threshold": 1 << 30},
    "frozen": {"mode": "train-sl-only"},
}

CSV_FIELDS = ("variant", "seed", "accuracy", "train_accuracy", "wu_final_quarter", "wu_cycles",
              "dsst_events", "sop", "sparsity", "final_churn")


@dataclass
class RunRow:
    variant: str
    seed: int
    accuracy: float
    train_accuracy: float
    wu_final_quarter: int
    wu_cycles: int
    dsst_events: int
    sop: int
    sparsity: float
    final_churn: float
    curve: list  # per-epoch held-out accuracy
    churn_curve: list


def task_dir(root: Path, seed: int) -> Path:
    return root / "tasks" / f"seed{seed}"


def _one(args) -> RunRow:
    cfg, variant, seed, data = args
    run_cfg = cfg.replace(seed=seed, **VARIANTS[variant])
    res = run_train(run_cfg, data)
    epochs = [r for r in res.records if r.get("type") == "epoch"]
    s = res.summary
    return RunRow(
        variant=variant, seed=seed, accuracy=s["accuracy"], train_accuracy=epochs[-1]["train_accuracy"],
        wu_final_quarter=s["wu_performed_by_quarter"][-1], wu_cycles=s["wu_cycles"],
        dsst_events=s["dsst_events"], sop=s["sop"], sparsity=float(np.mean(s["sparsity"])) if s["sparsity"] else 0.0,
        final_churn=float(np.mean(epochs[-1]["churn"])) if epochs[-1]["churn"] else 0.0,
        curve=[r["accuracy"] for r in epochs], churn_curve=[float(np.mean(r["churn"] or [0])) for r in epochs],
    )


def run_sweep(cfg: RunConfig, variants, seeds, *, out: str | os.PathLike | None = None,
              task: SyntheticTaskSpec | None = None, dataset: str | os.PathLike | None = None,
              jobs: int = 1) -> list[RunRow]:
    """Train every (variant, seed).  Without ``dataset`` a task is generated per seed."""
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise ValueError(f"unknown variants {unknown}; known: {sorted(VARIANTS)}")
    root = Path(out) if out is not None else None
    data_by_seed = {}
    for seed in seeds:
        if dataset is not None:
            data_by_seed[seed] = str(dataset)
        else:
            if root is None:
                import tempfile
                root = Path(tempfile.mkdtemp(prefix="elf-sweep-"))
            d = task_dir(root, seed)
            generate_task(task or SyntheticTaskSpec(width=cfg.input_width, classes=cfg.output_size), seed, d)
            data_by_seed[seed] = str(d)
    jobs_list = []
    for seed in seeds:
        data = load_dataset(data_by_seed[seed], cfg.input_width)
        jobs_list += [(cfg, v, seed, data) for v in variants]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_one, jobs_list))
    else:
        rows = [_one(a) for a in jobs_list]
    if out is not None:
        write_csv(rows, Path(out) / "sweep.csv")
    return rows


def write_csv(rows: list[RunRow], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))


def summarize(rows: list[RunRow]) -> dict[str, dict]:
    out: dict[str, dict] = {}
    for v in dict.fromkeys(r.variant for r in rows):
        sel = [r for r in rows if r.variant == v]
        acc = np.array([r.accuracy for r in sel])
        out[v] = {
            "runs": len(sel),
            "accuracy_mean": float(acc.mean()),
            "accuracy_std": float(acc.std()),
            "wu_final_quarter_mean": float(np.mean([r.wu_final_quarter for r in sel])),
        }
    return out
