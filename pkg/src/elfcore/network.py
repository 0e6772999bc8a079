"""The network and its per-timestep control loop.

Per timestep: delay buffer -> SI of every hidden layer -> readout SI -> gated
OSSL weight update of every hidden layer -> PC snapshots -> DSST when due.
At a sample boundary the readouts learn (delta rule), predict, and every
layer takes its sample-end snapshot.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import Mode, RunConfig
from .dsst import DsstSchedule, GradientBuffer, accumulate, dsst_event
from .events import DelayBuffer, Sample, SpikeVector
from .fixedpoint import STATE_FMT, WEIGHT_FMT, mul_factor
from .neuron import (
    LayerParams,
    NeuronState,
    Snapshot,
    SurrogateLUT,
    integrate_step,
    pc_tick_due,
    snapshot_traces,
)
from .plasticity import GateState, gate_decision, ossl_update, similarity_score, sl_update, update_gate_state
from .sparse import NMGroupSpec, SparseWeightBank, init_random, integrate_rows

W_TO_STATE = STATE_FMT.frac - WEIGHT_FMT.frac


@dataclass
class HiddenLayer:
    name: str
    params: LayerParams
    spec: NMGroupSpec
    bank: SparseWeightBank
    lut: SurrogateLUT
    state: NeuronState = None
    grad: GradientBuffer = None

    def __post_init__(self):
        if self.state is None:
            self.state = NeuronState.zeros(self.params.size)
        if self.grad is None:
            self.grad = GradientBuffer.zeros(self.bank.n_pre, self.bank.n_post)


@dataclass
class Readout:
    """One output population fed by one or more source layers (0 = input)."""

    name: str
    sources: tuple[int, ...]
    weights: dict
    state: NeuronState


@dataclass
class Counters:
    sop: int = 0
    wu_sop: int = 0
    dsst_events: int = 0
    churn: list = field(default_factory=list)
    wu_per_cycle: list = field(default_factory=list)


class Network:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.learn = cfg.learn_config()
        seeds = np.random.SeedSequence(cfg.seed).generate_state(len(cfg.hidden_sizes) + 8)
        sizes = cfg.layer_sizes()
        self.layers: list[HiddenLayer] = []
        for i, h in enumerate(cfg.hidden_sizes):
            spec = cfg.group_spec(i)
            fan_in = sizes[i] * spec.n_keep / spec.m_total
            scale = min(0.99, cfg.weight_gain / np.sqrt(fan_in))
            bank = init_random(spec, sizes[i], int(seeds[i]), scale)
            params = cfg.layer_params(i)
            self.layers.append(HiddenLayer(f"h{i + 1}", params, spec, bank,
                                           SurrogateLUT.build(params.threshold_raw, cfg.surrogate)))
        self.out_params = cfg.output_params()
        self.readouts = self._make_readouts(np.random.default_rng(int(seeds[-1])))
        self.input_params = cfg.input_params()
        self.input_trace = np.zeros(cfg.input_width, dtype=np.int64)
        self.delay = DelayBuffer(cfg.input_width, enabled=cfg.delay_taps)
        self.gates = GateState.initial(len(self.layers))
        self.schedule = cfg.schedule(1)
        self.cycle = 0
        self.wu_cycles = 0
        self.counters = Counters()
        self.access_log: list | None = None
        self._pool = ThreadPoolExecutor(max(2, cfg.group_count)) if cfg.parallel else None
        self._layer_pool = ThreadPoolExecutor(max(1, len(self.layers))) if cfg.parallel else None

    # construction ---------------------------------------------------------
    def _make_readouts(self, rng: np.random.Generator) -> list[Readout]:
        cfg = self.cfg
        n_hidden = len(cfg.hidden_sizes)
        if n_hidden:
            main = tuple(i + 1 for i in range(n_hidden) if cfg.bypass[i] or i == n_hidden - 1)
        else:
            main = (0,)
        plan = [("main", main)] + [(f"depth{d}", (d,)) for d in range(n_hidden + 1)]
        sizes = cfg.layer_sizes()
        out = []
        for name, sources in plan:
            weights = {}
            for s in sources:
                if cfg.output_sparse:
                    spec = NMGroupSpec.for_layer(cfg.output_size, cfg.sparsity, 1)
                    weights[s] = init_random(spec, sizes[s], int(rng.integers(2**31)), cfg.readout_scale)
                else:
                    w = rng.uniform(-cfg.readout_scale, cfg.readout_scale, (sizes[s], cfg.output_size))
                    weights[s] = WEIGHT_FMT.to_raw(w)
            out.append(Readout(name, sources, weights, NeuronState.zeros(cfg.output_size)))
        return out

    def close(self) -> None:
        for pool in (self._pool, self._layer_pool):
            if pool is not None:
                pool.shutdown()

    def set_schedule(self, sched: DsstSchedule) -> None:
        self.schedule = sched

    @property
    def main(self) -> Readout:
        return self.readouts[0]

    # helpers ------------------------------------------------------------------
    def _log(self, op: str, layer: int, reads, writes) -> None:
        if self.access_log is not None:
            self.access_log.append((self._ts_label, op, layer, frozenset(reads), frozenset(writes)))

    def _name(self, idx: int) -> str:
        return "x" if idx == 0 else self.layers[idx - 1].name

    def _trace(self, idx: int) -> np.ndarray:
        return self.input_trace if idx == 0 else self.layers[idx - 1].state.trace_now

    def _spike_rows(self, idx: int, input_rows: np.ndarray) -> np.ndarray:
        return input_rows if idx == 0 else np.flatnonzero(self.layers[idx - 1].state.spiked)

    def _integrate(self, bank: SparseWeightBank, rows: np.ndarray) -> np.ndarray:
        if self._pool is None:
            return integrate_rows(bank, rows)
        parts = list(self._pool.map(lambda g: integrate_rows(bank, rows, [g]), range(bank.spec.group_count)))
        total = np.zeros(bank.n_post, dtype=np.int64)
        for p in parts:
            total += p
        return total

    def _readout_current(self, r: Readout, rows_by_src: dict) -> np.ndarray:
        cur = np.zeros(self.cfg.output_size, dtype=np.int64)
        for s in r.sources:
            rows = rows_by_src[s]
            if rows.size == 0:
                continue
            w = r.weights[s]
            cur += integrate_rows(w, rows) if isinstance(w, SparseWeightBank) else w[rows].sum(axis=0)
        return cur << W_TO_STATE

    # the timestep -------------------------------------------------------------
    def step(self, addresses: np.ndarray, step_in_sample: int, learn_hidden: bool) -> None:
        cfg = self.cfg
        self._ts_label = (self.cycle, step_in_sample)
        x = np.zeros(cfg.input_width, dtype=bool)
        x[addresses] = True
        if not self.delay.is_identity:
            x = self.delay.step(SpikeVector(x)).bits
        rows_in = np.flatnonzero(x)
        ia = int(rows_in.size)
        self.input_trace = STATE_FMT.sat(mul_factor(self.input_trace, self.input_params.trace_decay_raw)
                                         + x * STATE_FMT.one)

        rows_by_src = {0: rows_in}
        pre_rows = rows_in
        for i, layer in enumerate(self.layers, start=1):
            src, dst = self._name(i - 1), layer.name
            self._log("SI", i, reads={f"{src}.spikes", f"{dst}.weights", f"{dst}.state"},
                      writes={f"{dst}.state", f"{dst}.spikes", f"{dst}.trace"})
            cur = self._integrate(layer.bank, pre_rows) << W_TO_STATE
            layer.state = integrate_step(layer.state, layer.params, cur)
            self.counters.sop += int(pre_rows.size) * layer.spec.group_count * layer.spec.n_keep
            pre_rows = np.flatnonzero(layer.state.spiked)
            rows_by_src[i] = pre_rows

        for r in self.readouts:
            cur = self._readout_current(r, rows_by_src)
            r.state = integrate_step(r.state, self.out_params, cur)
        self.counters.sop += sum(int(rows_by_src[s].size) for s in self.main.sources) * cfg.output_size

        if learn_hidden and self.layers:
            if self._layer_pool is None:
                performed = [self._weight_update(i, ia) for i in range(1, len(self.layers) + 1)]
            else:
                performed = list(self._layer_pool.map(lambda i: self._weight_update(i, ia),
                                                      range(1, len(self.layers) + 1)))
            self.counters.wu_per_cycle.append(sum(performed))
        else:
            performed = []

        for layer in self.layers:
            if pc_tick_due(step_in_sample, layer.params.pc_delta):
                layer.state = snapshot_traces(layer.state, Snapshot.PC_TICK)

        if learn_hidden:
            self.cycle += 1
            # DSST counts completed weight-update cycles; fully gated timesteps do not advance it
            if any(performed):
                self.wu_cycles += 1
                if self.schedule.due(self.wu_cycles):
                    self._dsst()

    def _weight_update(self, i: int, ia: int) -> int:
        layer = self.layers[i - 1]
        src, dst = self._name(i - 1), layer.name
        self._log("WU", i, reads={f"{src}.trace", f"{dst}.state", f"{dst}.trace", f"{dst}.weights",
                                  f"gates.{dst}"},
                  writes={f"{dst}.weights", f"{dst}.grad", f"gates.{dst}"})
        st = layer.state
        ss_pos = similarity_score(st.trace_now, st.trace_pc)
        ss_neg = similarity_score(st.trace_now, st.trace_cc)
        dec = gate_decision(ia, ss_pos, ss_neg, self.gates, self.learn, i - 1)
        update_gate_state(self.gates, i - 1, ss_pos, ss_neg, self.learn, dec)
        pre = self._trace(i - 1)
        if self._pool is None or not dec.any:
            _, g_post = ossl_update(layer.bank, pre, st, dec, layer.lut, self.learn,
                                    ss_pos=ss_pos, threshold_raw=layer.params.threshold_raw)
        else:
            parts = list(self._pool.map(
                lambda g: ossl_update(layer.bank, pre, st, dec, layer.lut, self.learn, ss_pos=ss_pos,
                                      threshold_raw=layer.params.threshold_raw, groups=[g])[1],
                range(layer.spec.group_count)))
            g_post = parts[0]
        if dec.any:
            self.counters.wu_sop += int(np.count_nonzero(pre)) * layer.spec.group_count * layer.spec.n_keep
        if self.schedule.enabled and dec.any:
            accumulate(layer.grad, g_post, pre)
        return int(dec.any)

    def _dsst(self) -> None:
        churn = []
        for layer in self.layers:
            _, stats = dsst_event(layer.bank, layer.grad, layer.spec, self.schedule, self.cycle,
                                  executor=self._pool)
            churn.append(stats.churn)
        self.counters.dsst_events += 1
        self.counters.churn.append(churn)

    def end_sample(self, label: int | None, learn_readout: bool) -> dict[str, int]:
        preds = {r.name: predict(r.state) for r in self.readouts}
        if learn_readout and label is not None:
            bound = self.out_params.trace_bound_raw
            for r in self.readouts:
                for s in r.sources:
                    sl_update(r.weights[s], self._trace(s), r.state.trace_now, label, self.learn, bound)
        for layer in self.layers:
            layer.state = snapshot_traces(layer.state, Snapshot.SAMPLE_END)
        for r in self.readouts:
            r.state = snapshot_traces(r.state, Snapshot.SAMPLE_END)
        self.input_trace = np.zeros_like(self.input_trace)
        self.delay.reset()
        return preds

    def run_sample(self, sample: Sample, mode: Mode) -> dict[str, int]:
        learn_hidden = mode is Mode.TRAIN_OSSL
        for t, addrs in enumerate(sample.steps):
            self.step(addrs, t, learn_hidden)
        return self.end_sample(sample.label, mode is not Mode.INFERENCE)

    # dynamic state save/restore, so evaluation leaves training untouched
    def dynamic_state(self):
        return ([l.state.copy() for l in self.layers], [r.state.copy() for r in self.readouts],
                self.input_trace.copy())

    def restore_state(self, snap) -> None:
        for l, s in zip(self.layers, snap[0]):
            l.state = s
        for r, s in zip(self.readouts, snap[1]):
            r.state = s
        self.input_trace = snap[2]
        self.delay.reset()

    def reset_state(self) -> None:
        for l in self.layers:
            l.state = NeuronState.zeros(l.params.size)
        for r in self.readouts:
            r.state = NeuronState.zeros(self.cfg.output_size)
        self.input_trace = np.zeros_like(self.input_trace)
        self.delay.reset()


def predict(state: NeuronState) -> int:
    """Argmax of the output trace; ties go to the higher membrane potential, then the lower index."""
    n = state.size
    order = np.lexsort((-np.arange(n), state.v_pre_reset, state.trace_now))
    return int(order[-1])


@dataclass
class Evaluation:
    accuracy: dict
    confusion: dict

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "confusion": {k: v.tolist() for k, v in self.confusion.items()}}


def evaluate(net: Network, samples: list[Sample]) -> Evaluation:
    """Inference-only pass; every readout configuration is scored."""
    snap = net.dynamic_state()
    net.reset_state()
    n = net.cfg.output_size
    conf = {r.name: np.zeros((n, n), dtype=np.int64) for r in net.readouts}
    for s in samples:
        if s.label is None:
            continue
        preds = net.run_sample(s, Mode.INFERENCE)
        for k, p in preds.items():
            conf[k][s.label, p] += 1
    net.restore_state(snap)
    acc = {k: float(np.trace(c) / c.sum()) if c.sum() else 0.0 for k, c in conf.items()}
    return Evaluation(acc, conf)
