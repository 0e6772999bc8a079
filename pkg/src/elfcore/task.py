"""Synthetic spatiotemporal classification tasks written as ``.elf-events`` files.

Each class owns a template of ``(address, phase)`` generators.  A sample fires
every generator once at its phase plus a uniform jitter, drops generators with
``drop_rate`` and adds Bernoulli background noise on every address.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .events import FILE_SUFFIX, sample_events, write_events

WARN_SAME_CLASS = "consecutive-samples-share-class"


@dataclass(frozen=True)
class SyntheticTaskSpec:
    classes: int = 8
    timesteps: int = 64
    width: int = 512
    generators: int = 96
    jitter: int = 3
    drop_rate: float = 0.2
    noise_rate: float = 0.006
    samples_per_class: int = 12
    test_samples_per_class: int = 32

    def __post_init__(self):
        if self.classes < 1 or self.timesteps < 1 or self.width < 1:
            raise ValueError("classes, timesteps and width must be positive")
        if not 0 <= self.noise_rate < 1 or not 0 <= self.drop_rate < 1:
            raise ValueError("rates must lie in [0, 1)")


def make_templates(spec: SyntheticTaskSpec, rng: np.random.Generator) -> list[np.ndarray]:
    """Per-class ``(generators, 2)`` arrays of ``(address, phase)``, pairwise distinct."""
    templates: list[np.ndarray] = []
    seen: set[bytes] = set()
    while len(templates) < spec.classes:
        addr = rng.integers(0, spec.width, spec.generators)
        phase = rng.integers(0, spec.timesteps, spec.generators)
        t = np.stack([addr, phase], axis=1)
        t = t[np.lexsort((t[:, 0], t[:, 1]))]
        key = t.tobytes()
        if key not in seen:
            seen.add(key)
            templates.append(t)
    return templates


def render_sample(template: np.ndarray, spec: SyntheticTaskSpec, rng: np.random.Generator) -> list[np.ndarray]:
    """Per-timestep sorted unique addresses for one sample of a class."""
    steps: list[set] = [set() for _ in range(spec.timesteps)]
    keep = rng.random(len(template)) >= spec.drop_rate if spec.drop_rate > 0 else np.ones(len(template), bool)
    jit = rng.integers(-spec.jitter, spec.jitter + 1, len(template)) if spec.jitter > 0 else np.zeros(len(template), int)
    t = np.clip(template[:, 1] + jit, 0, spec.timesteps - 1)
    for a, ts in zip(template[keep, 0].tolist(), t[keep].tolist()):
        steps[ts].add(a)
    if spec.noise_rate > 0:
        noise = rng.random((spec.timesteps, spec.width)) < spec.noise_rate
        for ts, a in zip(*np.nonzero(noise)):
            steps[int(ts)].add(int(a))
    return [np.array(sorted(s), dtype=np.int64) for s in steps]


def interleave(labels: list[int], rng: np.random.Generator) -> list[int]:
    """Random order in which no two neighbours share a class whenever that is possible."""
    remaining = np.bincount(labels, minlength=max(labels) + 1 if labels else 0).astype(np.int64)
    order: list[int] = []
    prev = -1
    while remaining.sum():
        total = int(remaining.sum())
        allowed = np.flatnonzero((remaining > 0) & (np.arange(len(remaining)) != prev))
        if allowed.size == 0:
            allowed = np.array([prev])
        forced = [c for c in allowed if remaining[c] > total - remaining[c]]
        if forced:
            c = int(forced[0])
        else:
            w = remaining[allowed] / remaining[allowed].sum()
            c = int(rng.choice(allowed, p=w))
        order.append(c)
        remaining[c] -= 1
        prev = c
    return order


def generate_split(templates, spec: SyntheticTaskSpec, per_class: int, rng: np.random.Generator):
    labels = [c for c in range(spec.classes) for _ in range(per_class)]
    order = interleave(labels, rng)
    samples = [(c, render_sample(templates[c], spec, rng)) for c in order]
    return samples


def _write_split(out: Path, name: str, samples, spec: SyntheticTaskSpec) -> dict:
    events = []
    for c, steps in samples:
        events.extend(sample_events(steps, label=c))
    write_events(out / f"{name}{FILE_SUFFIX}", events)
    labels = [c for c, _ in samples]
    same = sum(a == b for a, b in zip(labels, labels[1:]))
    with open(out / f"{name}.labels", "w", encoding="utf-8") as fh:
        fh.write(f"# classes={spec.classes} timesteps={spec.timesteps} samples={len(samples)}\n")
        if same:
            fh.write(f"# warning: {WARN_SAME_CLASS} ({same} adjacent pairs)\n")
        fh.write("index,class\n")
        for i, c in enumerate(labels):
            fh.write(f"{i},{c}\n")
    return {"samples": len(samples), "adjacent_same_class": same}


def generate_task(spec: SyntheticTaskSpec, seed: int, out: str | os.PathLike) -> dict:
    """Write ``train``/``test`` event files, label sidecars and ``task.json`` under ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    templates = make_templates(spec, rng)
    info = {"spec": asdict(spec), "seed": seed}
    info["train"] = _write_split(out, "train", generate_split(templates, spec, spec.samples_per_class, rng), spec)
    if spec.test_samples_per_class > 0:
        info["test"] = _write_split(out, "test", generate_split(templates, spec, spec.test_samples_per_class, rng), spec)
    info["warnings"] = [WARN_SAME_CLASS] if spec.classes == 1 else []
    with open(out / "task.json", "w", encoding="utf-8") as fh:
        json.dump(info, fh, indent=2, sort_keys=True)
    return info


def read_labels(path: str | os.PathLike) -> tuple[list[int], list[str]]:
    """Parse a label sidecar; returns ``(classes in sample order, warning lines)``."""
    labels, warnings = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line == "index,class":
                continue
            if line.startswith("#"):
                if line.startswith("# warning:"):
                    warnings.append(line[len("# warning:"):].strip())
                continue
            _, c = line.split(",")
            labels.append(int(c))
    return labels, warnings
