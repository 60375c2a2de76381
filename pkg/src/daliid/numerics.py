"""Deterministic seeded RNG streams and stable vector primitives.

All arithmetic is float64. Dot products and reductions run in a fixed
sequential order so results are bit-identical across runs and thread counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ZeroVectorError(ValueError):
    """Raised when a zero vector is passed where a direction is required."""


@dataclass(frozen=True)
class SeedStream:
    """Splittable random stream addressed by (master_seed, derivation path).

    Children are derived with :meth:`child`; the same path always yields the
    same stream, and distinct paths yield independent streams. Backed by
    ``numpy.random.SeedSequence`` spawn keys feeding a PCG64 generator; the
    generator choice is part of the on-disk reproducibility contract.
    """

    master_seed: int
    path: tuple[int, ...] = field(default=())

    def child(self, index: int) -> "SeedStream":
        return SeedStream(self.master_seed, self.path + (int(index),))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(seq))


def derive_stream(stream: SeedStream, index: int) -> SeedStream:
    return stream.child(index)


def l2_normalize(v: np.ndarray) -> tuple[np.ndarray, float]:
    """Return (unit direction, pre-normalization magnitude) of ``v``.

    Raises ZeroVectorError for a zero (or numerically zero) input.
    """
    v = np.asarray(v, dtype=np.float64)
    mag = float(np.sqrt(np.dot(v, v)))
    if mag == 0.0 or not np.isfinite(mag):
        raise ZeroVectorError("cannot normalize a zero or non-finite vector")
    return v / mag, mag


def cosine(u: np.ndarray, w: np.ndarray) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1]."""
    c = float(np.dot(np.asarray(u, dtype=np.float64),
                     np.asarray(w, dtype=np.float64)))
    return min(1.0, max(-1.0, c))


def log_sum_exp(xs) -> float:
    """log(sum(exp(x_i))) with max-shift; exact for a single element."""
    arr = np.sort(np.asarray(xs, dtype=np.float64))
    if arr.size == 0:
        raise ValueError("log_sum_exp of empty sequence")
    m = arr[-1]
    if arr.size == 1:
        return float(m)
    return float(m + np.log(np.sum(np.exp(arr - m))))
