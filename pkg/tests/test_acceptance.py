"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Criteria 4-6 share one sweep over the default task and configuration
(variants dsst, static, dense, no-gating; seeds 0-4).
"""

import time

import numpy as np
import pytest

import elfcore.network as network_mod
from conftest import ACCEPTANCE_LINES
from elfcore.checkpoint import to_bytes
from elfcore.config import RunConfig
from elfcore.events import load_samples
from elfcore.network import Network
from elfcore.neuron import LUT_SIZE, SurrogateLUT, surrogate_grad
from elfcore.oracle import check_codec, check_delay_buffer, check_rank_regrowth, check_select_k
from elfcore.sweep import run_sweep
from elfcore.task import SyntheticTaskSpec, generate_task
from elfcore.train import run_train

SEEDS = [0, 1, 2, 3, 4]
INSTANCES = 10_000


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def default_task(tmp_path_factory):
    out = tmp_path_factory.mktemp("default-task")
    generate_task(SyntheticTaskSpec(), 0, out)
    return out


@pytest.fixture(scope="module")
def ablation(tmp_path_factory):
    out = tmp_path_factory.mktemp("ablation")
    t0 = time.perf_counter()
    rows = run_sweep(RunConfig(), ["dsst", "static", "dense", "no-gating"], SEEDS, out=out)
    elapsed = time.perf_counter() - t0
    by = {}
    for r in rows:
        by.setdefault(r.variant, {})[r.seed] = r
    return by, elapsed / len(rows)


def test_criterion_01_factorized_ranking():
    t0 = time.perf_counter()
    res = check_rank_regrowth(np.random.default_rng(101), INSTANCES, max_m=64)
    dt = time.perf_counter() - t0
    verdict(1, res.ok and res.instances >= INSTANCES and dt < 30,
            f"rank_regrowth == dense oracle on {res.instances} instances, {res.mismatches} mismatches, {dt:.1f}s")


def test_criterion_02_nm_invariant(default_task):
    cfg = RunConfig(seed=0)
    violations = []
    sparsities = []
    real = network_mod.dsst_event

    def checked(bank, *a, **kw):
        out = real(bank, *a, **kw)
        idx = bank.indices
        ok = (idx.shape[-1] == bank.spec.n_keep and (np.diff(idx, axis=-1) > 0).all()
              and idx.min() >= 0 and idx.max() < bank.spec.m_total)
        if not ok:
            violations.append(len(sparsities))
        sparsities.append(out[1].sparsity)
        return out

    network_mod.dsst_event = checked
    try:
        res = run_train(cfg, default_task)
    finally:
        network_mod.dsst_event = real
    events = res.network.counters.dsst_events
    epoch_sparsity = {tuple(r["sparsity"]) for r in res.records if r.get("type") == "epoch"}
    ok = events >= 50 and not violations and len(set(sparsities)) == 1 and len(epoch_sparsity) == 1
    verdict(2, ok, f"{events} DSST events, {len(violations)} cells out of spec, "
                   f"sparsity values seen {sorted(set(sparsities))}")


def test_criterion_03_heap_selection():
    res = check_select_k(np.random.default_rng(103), INSTANCES, max_m=64)
    excess = res.extra["max_heap_excess"]
    verdict(3, res.ok and res.instances >= INSTANCES and excess <= 0,
            f"select_k_smallest == full sort on {res.instances} instances, {res.mismatches} mismatches, "
            f"peak heap size - k = {excess}")


def test_criterion_04_dsst_beats_static(ablation):
    by, per_run = ablation
    dsst = np.mean([by["dsst"][s].accuracy for s in SEEDS])
    static = np.mean([by["static"][s].accuracy for s in SEEDS])
    verdict(4, dsst > static and per_run <= 600,
            f"mean accuracy dsst {dsst:.4f} vs static {static:.4f} over {len(SEEDS)} seeds "
            f"(per-seed dsst {[round(by['dsst'][s].accuracy, 3) for s in SEEDS]}, "
            f"static {[round(by['static'][s].accuracy, 3) for s in SEEDS]}), {per_run:.0f}s per run")


def test_criterion_05_sparse_close_to_dense(ablation):
    by, _ = ablation
    dsst = np.mean([by["dsst"][s].accuracy for s in SEEDS])
    dense = np.mean([by["dense"][s].accuracy for s in SEEDS])
    sparsity = np.mean([by["dsst"][s].sparsity for s in SEEDS])
    verdict(5, dense - dsst <= 0.05 and sparsity >= 0.79,
            f"{sparsity:.1%}-sparse dsst {dsst:.4f} vs dense {dense:.4f} (gap {100 * (dense - dsst):+.1f} points)")


def test_criterion_06_gating_ablation(ablation):
    by, _ = ablation
    gated = np.mean([by["dsst"][s].wu_final_quarter for s in SEEDS])
    ungated = np.mean([by["no-gating"][s].wu_final_quarter for s in SEEDS])
    reduction = 1 - gated / ungated
    acc_g = np.mean([by["dsst"][s].accuracy for s in SEEDS])
    acc_u = np.mean([by["no-gating"][s].accuracy for s in SEEDS])
    verdict(6, reduction >= 0.30 and abs(acc_g - acc_u) <= 0.02,
            f"final-quarter WU {gated:.0f} gated vs {ungated:.0f} ungated ({reduction:.1%} fewer); "
            f"accuracy {acc_g:.4f} vs {acc_u:.4f} ({100 * (acc_g - acc_u):+.1f} points)")


def test_criterion_07_gating_soundness(default_task):
    cfg = RunConfig(seed=0, epochs=1, ia_threshold=1 << 30)
    init = Network(cfg)
    res = run_train(cfg, default_task)
    same = all(np.array_equal(a.bank.indices, b.bank.indices) and np.array_equal(a.bank.values, b.bank.values)
               for a, b in zip(init.layers, res.network.layers))
    init.close()
    verdict(7, same and res.network.gates.performed.sum() == 0,
            f"full-skip run: hidden weights bit-identical to init = {same}, "
            f"updates performed = {int(res.network.gates.performed.sum())}")


def test_criterion_08_codec_and_delay_buffer():
    codec = check_codec(np.random.default_rng(108), INSTANCES)
    delay = check_delay_buffer(np.random.default_rng(208), 16 * 64)
    verdict(8, codec.ok and delay.ok and codec.instances >= INSTANCES and delay.extra["patterns"] == 16,
            f"codec round-trip {codec.instances} streams ({codec.mismatches} mismatches); delay buffer "
            f"{delay.instances} runs over 16 tap patterns ({delay.mismatches} mismatches)")


def test_criterion_09_parallel_equivalence(default_task, tmp_path):
    cfg = RunConfig(seed=3, epochs=1)
    run_train(cfg, default_task, tmp_path / "serial")
    run_train(cfg.replace(parallel=True), default_task, tmp_path / "parallel")
    same = {f: (tmp_path / "serial" / f).read_bytes() == (tmp_path / "parallel" / f).read_bytes()
            for f in ("metrics.jsonl", "checkpoint.elfc")}
    rerun = run_train(cfg, default_task)
    same["rerun"] = to_bytes(rerun.network) == (tmp_path / "serial" / "checkpoint.elfc").read_bytes()
    verdict(9, all(same.values()), f"bit-identical outputs: {same}")


def test_criterion_10_wu_si_disjoint(default_task):
    train = load_samples(default_task / "train.elf-events", 512)[:8]
    res = run_train(RunConfig(seed=0, epochs=1), (train, []), record_access=True)
    by_ts = {}
    for ts, op, layer, reads, writes in res.network.access_log:
        by_ts.setdefault(ts, {})[(op, layer)] = (reads, writes)
    pairs = conflicts = 0
    for ops in by_ts.values():
        for (op, layer), (r_wu, w_wu) in ops.items():
            if op == "WU" and ("SI", layer + 1) in ops:
                r_si, w_si = ops[("SI", layer + 1)]
                pairs += 1
                conflicts += bool(w_wu & (r_si | w_si)) or bool(w_si & r_wu)
    verdict(10, pairs > 0 and conflicts == 0,
            f"{pairs} (WU layer L, SI layer L+1) pairs checked across {len(by_ts)} timesteps, {conflicts} overlaps")


def test_criterion_11_surrogate_lut():
    bad = 0
    checked = 0
    for thr in (64, 128, 256, 384, 512, 1024):
        lut = SurrogateLUT.build(thr)
        w = thr // 2
        for k in range(LUT_SIZE):
            x = (k - 8) * w / 8
            analytic = 256 * max(0.0, 1 - abs(x) / w)
            if x == int(x):
                got = int(surrogate_grad(lut, np.array([thr + int(x)]), thr)[0])
                bad += got != analytic
            bad += lut.entries[k] != analytic
            checked += 1
        outside = np.concatenate([np.arange(thr + w, thr + 4 * w), np.arange(thr - 4 * w, thr - w + 1)])
        bad += int(np.count_nonzero(surrogate_grad(lut, outside, thr)))
    verdict(11, bad == 0, f"{checked} node values checked against the analytic triangle, "
                          f"{bad} mismatches (including nonzero outputs outside support)")
