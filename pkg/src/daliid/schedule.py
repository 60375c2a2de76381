"""Easy-to-hard sample weighting: per-level weights ramp to 1 on a half-cosine.

w(l, t) = 1 - (1 - w0(l)) * (1 + cos(pi * t / T)) / 2, with t clamped to T.
Level 0 (clean) is pinned at weight 1 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_INITIAL_WEIGHTS = (1.0, 0.8, 0.65, 0.5, 0.35, 0.2)


@dataclass(frozen=True)
class WeightSchedule:
    total_steps: int
    initial_weights: tuple[float, ...] = DEFAULT_INITIAL_WEIGHTS

    def __post_init__(self):
        if self.total_steps <= 0:
            raise ValueError("total_steps must be positive")
        w0 = self.initial_weights
        if len(w0) != 6 or w0[0] != 1.0:
            raise ValueError("initial_weights must give 6 levels with w0(0)=1")
        if any(not (0.0 <= w <= 1.0) for w in w0):
            raise ValueError("initial weights must lie in [0, 1]")
        if any(a < b for a, b in zip(w0, w0[1:])):
            raise ValueError("initial weights must be non-increasing in level")


@dataclass(frozen=True)
class BatchWeights:
    weights: np.ndarray
    normalizer: float


def weight(level: int, step: int, sched: WeightSchedule) -> float:
    if step < 0:
        raise ValueError("step must be >= 0")
    w0 = sched.initial_weights[level]
    t = min(step, sched.total_steps)
    ramp = (1.0 + np.cos(np.pi * t / sched.total_steps)) / 2.0
    return 1.0 - (1.0 - w0) * ramp


def batch_weights(levels, step: int, sched: WeightSchedule) -> BatchWeights:
    levels = list(levels)
    if not levels:
        raise ValueError("empty batch")
    ws = np.array([weight(l, step, sched) for l in levels], dtype=np.float64)
    normalizer = 0.0
    for w in ws:  # fixed sequential order: bit-reproducible sum
        normalizer += w
    return BatchWeights(weights=ws, normalizer=normalizer)


def schedule_table(sched: WeightSchedule, num_points: int = 101):
    """(step, level, weight) rows for plotting/CSV export."""
    steps = np.linspace(0, sched.total_steps, num_points).round().astype(int)
    rows = []
    for s in steps:
        for level in range(6):
            rows.append((int(s), level, weight(level, int(s), sched)))
    return rows
