"""Feature extraction and end-to-end evaluation protocols.

Bridges trained checkpoints to the metric layer: builds gallery/query
embedding sets (queries optionally distorted at a fixed level), computes
single-backbone or fused distance matrices, and runs each protocol.
"""

from __future__ import annotations

import numpy as np

from .data import IdentityDataset
from .distortion import DistortionParams, distort
from .evalfusion import (FusionConfig, cmc, distance_matrix,
                         fused_distance_matrix, mean_average_precision,
                         tar_at_far, tpir_at_fpir_sims, verification)
from .io_formats import StoreRecord
from .model import ModelParams, forward_batch
from .numerics import SeedStream

DEFAULT_FAR_TARGETS = (0.1, 0.01)
DEFAULT_FPIR_TARGETS = (0.1, 0.01)


def extract_embeddings(params: ModelParams, images) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([np.asarray(img).reshape(-1) for img in images])
    U, mags, _ = forward_batch(params, X)
    return U, mags


def eval_images(ds: IdentityDataset, query_level: int,
                dparams: DistortionParams, seed: int):
    """(gallery images+labels, query images+labels); queries distorted."""
    gallery = ds.of_split("gallery")
    queries = ds.of_split("query")
    rng = SeedStream(seed, (777,))
    g_imgs = [s.image for s in gallery]
    g_labels = [s.label for s in gallery]
    q_imgs = [distort(s.image, query_level, dparams, rng.child(i))
              for i, s in enumerate(queries)]
    q_labels = [s.label for s in queries]
    return g_imgs, g_labels, q_imgs, q_labels


def store_records(dirs, mags, labels, backbone: str,
                  start_id: int = 0) -> list[StoreRecord]:
    return [StoreRecord(start_id + i, int(labels[i]), backbone,
                        dirs[i], float(mags[i]))
            for i in range(len(labels))]


def _pair_scores(dist, q_labels, g_labels):
    q_labels = np.asarray(q_labels)
    g_labels = np.asarray(g_labels)
    sim = 1.0 - dist
    same = q_labels[:, None] == g_labels[None, :]
    return sim[same], sim[~same]


def evaluate(ckpt_a, ds: IdentityDataset, protocol: str,
             query_level: int = 0, ckpt_b=None, fuse: bool = False,
             fusion: FusionConfig = FusionConfig(),
             dparams: DistortionParams | None = None,
             far_targets=DEFAULT_FAR_TARGETS,
             fpir_targets=DEFAULT_FPIR_TARGETS) -> dict[str, float]:
    """Run one protocol; returns a flat name -> value metric dict.

    With fuse=True, ckpt_a is the clean backbone and ckpt_b the
    distortion-adaptive one; otherwise only ckpt_a is used.
    """
    if fuse and ckpt_b is None:
        raise ValueError("--fuse requires a second checkpoint")
    dparams = dparams or ckpt_a.config.distortion
    g_imgs, g_labels, q_imgs, q_labels = eval_images(
        ds, query_level, dparams, ckpt_a.config.seed)
    p_a = ckpt_a.eval_params()
    gq_dirs_a, gq_mags_a = extract_embeddings(p_a, g_imgs + q_imgs)
    ng = len(g_imgs)
    g_dir_a, g_mag_a = gq_dirs_a[:ng], gq_mags_a[:ng]
    q_dir_a, q_mag_a = gq_dirs_a[ng:], gq_mags_a[ng:]
    if fuse:
        p_b = ckpt_b.eval_params()
        gq_dirs_b, gq_mags_b = extract_embeddings(p_b, g_imgs + q_imgs)
        g_dir_b, g_mag_b = gq_dirs_b[:ng], gq_mags_b[:ng]
        q_dir_b, q_mag_b = gq_dirs_b[ng:], gq_mags_b[ng:]
        dist = fused_distance_matrix(q_dir_a, q_mag_a, g_dir_a, g_mag_a,
                                     q_dir_b, q_mag_b, g_dir_b, g_mag_b,
                                     fusion)
    else:
        dist = distance_matrix(q_dir_a, g_dir_a)

    if protocol == "cmc":
        ranks = cmc(dist, q_labels, g_labels, ranks=(1, 5))
        return {f"rank{k}": v for k, v in ranks.items()}
    if protocol == "map":
        return {"map": mean_average_precision(dist, q_labels, g_labels)}
    if protocol == "verify":
        genuine, impostor = _pair_scores(dist, q_labels, g_labels)
        folds = 10 if len(genuine) + len(impostor) >= 100 else 1
        return {"verification_accuracy": verification(genuine, impostor,
                                                      folds=folds)}
    if protocol == "tarfar":
        genuine, impostor = _pair_scores(dist, q_labels, g_labels)
        table = tar_at_far(genuine, impostor, far_targets)
        return {f"tar_at_far_{t:g}": table[t]["tar"] for t in far_targets}
    if protocol == "tpirfpir":
        table = tpir_at_fpir_sims(1.0 - dist, q_labels, g_labels,
                                  fpir_targets)
        return {f"tpir_at_fpir_{t:g}": table[t] for t in fpir_targets}
    raise ValueError(f"unknown protocol {protocol!r}")
