"""Training driver: epochs over an event dataset, metrics and checkpoints."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .config import Mode, RunConfig
from .errors import DataError, DimensionMismatch
from .events import FILE_SUFFIX, Sample, load_samples
from .checkpoint import load_checkpoint
from .network import Evaluation, Network, evaluate

log = logging.getLogger(__name__)

METRICS_FILE = "metrics.jsonl"
TIMING_FILE = "timing.jsonl"
CHECKPOINT_FILE = "checkpoint.elfc"


def load_dataset(path: str | os.PathLike, width: int) -> tuple[list[Sample], list[Sample]]:
    """A directory with ``train``/``test`` event files, or a single event file (no test split)."""
    path = Path(path)
    try:
        if path.is_dir():
            train = load_samples(path / f"train{FILE_SUFFIX}", width)
            test_path = path / f"test{FILE_SUFFIX}"
            test = load_samples(test_path, width) if test_path.exists() else []
        else:
            train, test = load_samples(path, width), []
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    if not train:
        raise DataError(f"dataset {path} holds no samples")
    return train, test


@dataclass
class TrainResult:
    network: Network
    records: list[dict] = field(default_factory=list)
    summary: dict | None = None

    @property
    def final_accuracy(self) -> float | None:
        return self.summary["accuracy"] if self.summary else None


def _layer_list(a) -> list:
    return [x.item() if hasattr(x, "item") else x for x in a]


def run_train(cfg: RunConfig, dataset, out: str | os.PathLike | None = None, *,
              network: Network | None = None, record_access: bool = False) -> TrainResult:
    """Run ``cfg.epochs`` epochs; writes metrics/checkpoint under ``out`` when given.

    ``dataset`` is a path or an already-decoded ``(train, test)`` pair.
    """
    if isinstance(dataset, (str, os.PathLike)):
        train, test = load_dataset(dataset, cfg.input_width)
    else:
        train, test = dataset
    for s in train + test:
        if s.label is not None and not 0 <= s.label < cfg.output_size:
            raise DataError(f"label {s.label} outside output size {cfg.output_size}")

    net = network or Network(cfg)
    if record_access:
        net.access_log = []
    cycles_per_epoch = sum(s.n_steps for s in train)
    net.set_schedule(cfg.schedule(max(1, cfg.epochs * cycles_per_epoch)))

    header = {"type": "header", "config": cfg.persist_dict(), "train_samples": len(train),
              "test_samples": len(test), "cycles_per_epoch": cycles_per_epoch}
    result = TrainResult(net, [header])
    out_dir = Path(out) if out is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_fh = open(out_dir / METRICS_FILE, "w", encoding="utf-8")
        timing_fh = open(out_dir / TIMING_FILE, "w", encoding="utf-8")
        _emit(metrics_fh, header)
    else:
        metrics_fh = timing_fh = None

    try:
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            rec = _run_epoch(net, cfg, train, test, epoch)
            result.records.append(rec)
            _emit(metrics_fh, rec)
            _emit(timing_fh, {"epoch": epoch, "wall_time_s": time.perf_counter() - t0})
            log.info("epoch %d accuracy %.3f train %.3f", epoch, rec["accuracy"], rec["train_accuracy"])
        if cfg.epochs > 0:
            result.summary = _summary(net, result.records)
            _emit(metrics_fh, result.summary)
    finally:
        for fh in (metrics_fh, timing_fh):
            if fh is not None:
                fh.close()
    if out_dir is not None:
        save_checkpoint(net, out_dir / CHECKPOINT_FILE)
    net.close()
    return result


def _run_epoch(net: Network, cfg: RunConfig, train, test, epoch: int) -> dict:
    c = net.counters
    g = net.gates
    before = {k: getattr(g, k).copy() for k in ("performed", "skipped_ia", "skipped_ss")}
    sop0, wsop0, ev0, churn0 = c.sop, c.wu_sop, c.dsst_events, len(c.churn)
    correct = 0
    labelled = 0
    for s in train:
        preds = net.run_sample(s, cfg.mode)
        if s.label is not None:
            labelled += 1
            correct += preds["main"] == s.label
    train_acc = correct / labelled if labelled else 0.0
    rec = {"type": "epoch", "epoch": epoch, "train_accuracy": train_acc}
    last = epoch == cfg.epochs - 1
    if test and ((epoch + 1) % max(1, cfg.eval_every) == 0 or last):
        ev = evaluate(net, test)
        rec["accuracy"] = ev.accuracy["main"]
        rec["readout_accuracy"] = ev.accuracy
    else:
        rec["accuracy"] = train_acc
    performed = g.performed - before["performed"]
    skipped_ia = g.skipped_ia - before["skipped_ia"]
    skipped_ss = g.skipped_ss - before["skipped_ss"]
    attempts = int(performed.sum() + skipped_ia.sum() + skipped_ss.sum())
    churn = np.array(c.churn[churn0:]) if len(c.churn) > churn0 else np.zeros((0, len(net.layers)))
    rec.update({
        "sop": c.sop - sop0,
        "wu_sop": c.wu_sop - wsop0,
        "wu_performed": _layer_list(performed),
        "wu_skipped_ia": _layer_list(skipped_ia),
        "wu_skipped_ss": _layer_list(skipped_ss),
        "wu_skip_fraction": float(1 - performed.sum() / attempts) if attempts else 0.0,
        "ss_ema_pos": _layer_list(g.ss_ema_pos),
        "ss_ema_neg": _layer_list(g.ss_ema_neg),
        "sparsity": [l.bank.stats().sparsity for l in net.layers],
        "dsst_events": c.dsst_events - ev0,
        "churn": _layer_list(churn.mean(axis=0)) if churn.size else [0.0] * len(net.layers),
        "cycles": net.cycle,
    })
    return rec


def _summary(net: Network, records: list[dict]) -> dict:
    wu = np.asarray(net.counters.wu_per_cycle, dtype=np.int64)
    quarters = [int(q.sum()) for q in np.array_split(wu, 4)] if wu.size else [0, 0, 0, 0]
    epochs = [r for r in records if r.get("type") == "epoch"]
    return {
        "type": "summary",
        "accuracy": epochs[-1]["accuracy"],
        "readout_accuracy": epochs[-1].get("readout_accuracy", {}),
        "wu_performed_by_quarter": quarters,
        "wu_cycles": int(wu.size),
        "dsst_events": net.counters.dsst_events,
        "sop": net.counters.sop,
        "sparsity": epochs[-1]["sparsity"],
    }


def _emit(fh, record: dict) -> None:
    if fh is not None:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_split(path: str | os.PathLike, split: str = "test") -> list[Sample]:
    """Samples of one split of a task directory (falling back to ``train``), or of a single file."""
    path = Path(path)
    try:
        if path.is_dir():
            f = path / f"{split}{FILE_SUFFIX}"
            if not f.exists():
                f = path / f"train{FILE_SUFFIX}"
            return load_samples(f)
        return load_samples(path)
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc


def check_dimensions(samples: list[Sample], width: int, classes: int) -> None:
    for i, s in enumerate(samples):
        top = max((int(a[-1]) for a in s.steps if a.size), default=-1)
        if top >= width:
            raise DimensionMismatch(f"sample {i}: spike address {top} >= network input width {width}")
        if s.label is not None and s.label >= classes:
            raise DimensionMismatch(f"sample {i}: label {s.label} >= network output size {classes}")


def run_eval(checkpoint: str | os.PathLike, dataset: str | os.PathLike, split: str = "test") -> Evaluation:
    """Inference-only evaluation of a saved network on a dataset."""
    net = load_checkpoint(checkpoint)
    try:
        samples = load_split(dataset, split)
        if not samples:
            raise DataError(f"dataset {dataset} holds no samples")
        check_dimensions(samples, net.cfg.input_width, net.cfg.output_size)
        return evaluate(net, samples)
    finally:
        net.close()
