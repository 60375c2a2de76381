"""Synthetic identity dataset: blob-and-sinusoid prototypes with jitter.

Each identity is a seeded renderer (oriented Gaussian blobs plus a
low-frequency sinusoidal field); samples apply a small random affine,
brightness shift, and pixel noise. Batches follow the PK strategy with an
optional distorted half.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import pnm
from .distortion import DistortionParams, distort
from .numerics import SeedStream


@dataclass(frozen=True)
class PrototypeDescriptor:
    blobs: np.ndarray        # (n, 6): cx, cy, sx, sy, angle, signed amplitude
    sin_freq: float
    sin_phase: float
    sin_orient: float
    sin_amp: float

    @classmethod
    def random(cls, rng: SeedStream) -> "PrototypeDescriptor":
        gen = rng.generator()
        n = int(gen.integers(4, 9))
        blobs = np.column_stack([
            gen.uniform(0.15, 0.85, n),            # cx, cy in unit square
            gen.uniform(0.15, 0.85, n),
            gen.uniform(0.06, 0.22, n),            # sx, sy
            gen.uniform(0.06, 0.22, n),
            gen.uniform(0.0, np.pi, n),            # orientation
            gen.uniform(0.4, 1.0, n) * gen.choice([-1.0, 1.0], n),
        ])
        return cls(blobs=blobs,
                   sin_freq=float(gen.uniform(1.0, 3.0)),
                   sin_phase=float(gen.uniform(0, 2 * np.pi)),
                   sin_orient=float(gen.uniform(0, np.pi)),
                   sin_amp=float(gen.uniform(0.1, 0.25)))


def render_prototype(desc: PrototypeDescriptor, size: int) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size] / (size - 1.0)
    img = np.full((size, size), 0.5)
    co, so = np.cos(desc.sin_orient), np.sin(desc.sin_orient)
    phase = 2 * np.pi * desc.sin_freq * (co * xs + so * ys) + desc.sin_phase
    img += desc.sin_amp * np.sin(phase)
    for cx, cy, sx, sy, ang, amp in desc.blobs:
        ca, sa = np.cos(ang), np.sin(ang)
        u = ca * (xs - cx) + sa * (ys - cy)
        v = -sa * (xs - cx) + ca * (ys - cy)
        img += amp * np.exp(-0.5 * ((u / sx) ** 2 + (v / sy) ** 2))
    return np.clip(img, 0.0, 1.0)


def _affine_sample(img: np.ndarray, angle: float, tx: float, ty: float,
                   scale: float) -> np.ndarray:
    """Inverse-map affine resample about the image center, edge-clamped."""
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    ca, sa = np.cos(-angle), np.sin(-angle)
    x0 = (xs - cx - tx) / scale
    y0 = (ys - cy - ty) / scale
    sx = np.clip(ca * x0 - sa * y0 + cx, 0, w - 1.0)
    sy = np.clip(sa * x0 + ca * y0 + cy, 0, h - 1.0)
    xl = np.floor(sx).astype(np.intp)
    yl = np.floor(sy).astype(np.intp)
    xh = np.minimum(xl + 1, w - 1)
    yh = np.minimum(yl + 1, h - 1)
    fx, fy = sx - xl, sy - yl
    return (img[yl, xl] * (1 - fx) * (1 - fy) + img[yl, xh] * fx * (1 - fy)
            + img[yh, xl] * (1 - fx) * fy + img[yh, xh] * fx * fy)


def render_sample(desc: PrototypeDescriptor, size: int, rng: SeedStream,
                  jitter: bool = True) -> np.ndarray:
    img = render_prototype(desc, size)
    if not jitter:
        return img
    gen = rng.generator()
    angle = gen.uniform(-np.deg2rad(10), np.deg2rad(10))
    tx, ty = gen.uniform(-0.07, 0.07, 2) * size
    scale = gen.uniform(0.93, 1.07)
    img = _affine_sample(img, angle, tx, ty, scale)
    img = img + gen.uniform(-0.1, 0.1)
    img = img + gen.normal(0.0, 0.02, img.shape)
    return np.clip(img, 0.0, 1.0)


@dataclass
class Sample:
    label: int
    image: np.ndarray
    split: str  # train | gallery | query


@dataclass
class IdentityDataset:
    size: int
    num_ids: int
    samples: list[Sample] = field(default_factory=list)

    def of_split(self, split: str) -> list[Sample]:
        return [s for s in self.samples if s.split == split]

    def train_by_label(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for i, s in enumerate(self.samples):
            if s.split == "train":
                out.setdefault(s.label, []).append(i)
        return out


def generate_dataset(num_ids: int, train_per_id: int, eval_per_id: int,
                     size: int, rng: SeedStream, jitter: bool = True,
                     distractor_ids: int = 0) -> IdentityDataset:
    """Render the synthetic dataset.

    Per identity: train_per_id training images, then eval_per_id evaluation
    images of which the first enters the gallery (clean) and the rest the
    query split. Distractor identities contribute query images only, making
    open-set metrics meaningful.
    """
    if num_ids < 2:
        raise ValueError("need at least 2 identities")
    ds = IdentityDataset(size=size, num_ids=num_ids + distractor_ids)
    for label in range(num_ids + distractor_ids):
        id_rng = rng.child(label)
        desc = PrototypeDescriptor.random(id_rng.child(0))
        is_distractor = label >= num_ids
        n_train = 0 if is_distractor else train_per_id
        for j in range(n_train):
            img = render_sample(desc, size, id_rng.child(1 + j), jitter)
            ds.samples.append(Sample(label, img, "train"))
        for j in range(eval_per_id):
            img = render_sample(desc, size,
                                id_rng.child(1 + train_per_id + j), jitter)
            if j == 0 and not is_distractor:
                ds.samples.append(Sample(label, img, "gallery"))
            else:
                ds.samples.append(Sample(label, img, "query"))
    return ds


@dataclass(frozen=True)
class BatchSpec:
    P: int
    K: int

    def __post_init__(self):
        if self.P < 2 or self.K < 1:
            raise ValueError("BatchSpec requires P >= 2 and K >= 1")


def sample_batch(ds: IdentityDataset, spec: BatchSpec,
                 params: DistortionParams, rng: SeedStream,
                 distorted: bool = True):
    """One PK batch: per identity K clean images, plus K distorted if enabled.

    Returns a list of (image, label, level). Levels of the distorted half are
    uniform over 1..5. Identities with fewer than the needed samples are
    drawn with replacement.
    """
    by_label = ds.train_by_label()
    labels = sorted(by_label)
    if len(labels) < spec.P:
        raise ValueError("fewer identities than BatchSpec.P")
    gen = rng.child(0).generator()
    chosen = gen.choice(len(labels), size=spec.P, replace=False)
    batch = []
    n_per_id = spec.K * (2 if distorted else 1)
    sample_counter = 0
    for ci in chosen:
        label = labels[int(ci)]
        pool = by_label[label]
        replace = len(pool) < n_per_id
        picks = gen.choice(len(pool), size=n_per_id, replace=replace)
        for k in range(spec.K):
            img = ds.samples[pool[int(picks[k])]].image
            batch.append((img.copy(), label, 0))
            sample_counter += 1
        if distorted:
            for k in range(spec.K, 2 * spec.K):
                img = ds.samples[pool[int(picks[k])]].image
                level = int(gen.integers(1, 6))
                out = distort(img, level, params, rng.child(1 + sample_counter))
                batch.append((out, label, level))
                sample_counter += 1
    return batch


def save_dataset(ds: IdentityDataset, out_dir: str) -> str:
    """Write images as PGM under id_<label>/ plus a JSON manifest."""
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    counters: dict[int, int] = {}
    for s in ds.samples:
        n = counters.get(s.label, 0)
        counters[s.label] = n + 1
        rel = os.path.join(f"id_{s.label:04d}", f"img_{n:04d}.pgm")
        full = os.path.join(out_dir, rel)
        os.makedirs(os.path.dirname(full), exist_ok=True)
        pnm.save_pnm(full, s.image)
        entries.append({"label": s.label, "path": rel, "split": s.split})
    manifest = {"size": ds.size, "num_ids": ds.num_ids, "samples": entries}
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest_path


def load_dataset(in_dir: str) -> IdentityDataset:
    with open(os.path.join(in_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    ds = IdentityDataset(size=manifest["size"], num_ids=manifest["num_ids"])
    for e in manifest["samples"]:
        img = pnm.load_pnm(os.path.join(in_dir, e["path"]))
        ds.samples.append(Sample(e["label"], img, e["split"]))
    return ds
