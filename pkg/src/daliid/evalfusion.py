"""Retrieval and verification metrics plus magnitude-weighted fusion.

Distances are cosine distances (1 - cos) between unit directions. Fusion
combines per-backbone distances with weights W = max(query magnitude,
gallery magnitude) for each backbone, normalized so the result is a convex
combination. All thresholded metrics use empirical step functions, no
interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Embedding:
    direction: np.ndarray
    magnitude: float


@dataclass(frozen=True)
class FusionConfig:
    enabled: bool = True
    standardize: str = "off"   # "off" | "per-backbone-mean"


def pair_distance(a: Embedding, b: Embedding) -> float:
    c = float(np.dot(a.direction, b.direction))
    return 1.0 - min(1.0, max(-1.0, c))


def fused_distance(q_cl: Embedding, g_cl: Embedding, q_da: Embedding,
                   g_da: Embedding, cfg: FusionConfig = FusionConfig(),
                   cl_mean: float = 1.0, da_mean: float = 1.0) -> float:
    """Magnitude-weighted convex combination of the two backbone distances."""
    d_cl = pair_distance(q_cl, g_cl)
    d_da = pair_distance(q_da, g_da)
    m_cl = max(q_cl.magnitude, g_cl.magnitude)
    m_da = max(q_da.magnitude, g_da.magnitude)
    if cfg.standardize == "per-backbone-mean":
        m_cl /= cl_mean
        m_da /= da_mean
    total = m_cl + m_da
    if total == 0:
        raise ValueError("degenerate features: both fusion weights are zero")
    return (m_cl * d_cl + m_da * d_da) / total


def fused_distance_matrix(q_cl_dir, q_cl_mag, g_cl_dir, g_cl_mag,
                          q_da_dir, q_da_mag, g_da_dir, g_da_mag,
                          cfg: FusionConfig = FusionConfig()) -> np.ndarray:
    """Vectorized fused distances for Q queries x G gallery entries."""
    d_cl = 1.0 - np.clip(q_cl_dir @ g_cl_dir.T, -1.0, 1.0)
    d_da = 1.0 - np.clip(q_da_dir @ g_da_dir.T, -1.0, 1.0)
    m_cl = np.maximum(q_cl_mag[:, None], g_cl_mag[None, :])
    m_da = np.maximum(q_da_mag[:, None], g_da_mag[None, :])
    if cfg.standardize == "per-backbone-mean":
        m_cl = m_cl / np.mean(g_cl_mag)
        m_da = m_da / np.mean(g_da_mag)
    total = m_cl + m_da
    if np.any(total == 0):
        raise ValueError("degenerate features: zero fusion weights")
    return (m_cl * d_cl + m_da * d_da) / total


def distance_matrix(q_dir: np.ndarray, g_dir: np.ndarray) -> np.ndarray:
    return 1.0 - np.clip(q_dir @ g_dir.T, -1.0, 1.0)


def cmc(dist: np.ndarray, query_labels, gallery_labels,
        ranks=(1, 5)) -> dict[int, float]:
    """Rank-k accuracies; queries without a gallery mate are excluded."""
    query_labels = np.asarray(query_labels)
    gallery_labels = np.asarray(gallery_labels)
    hits = {k: 0 for k in ranks}
    counted = 0
    for qi in range(dist.shape[0]):
        if not np.any(gallery_labels == query_labels[qi]):
            continue
        counted += 1
        order = np.argsort(dist[qi], kind="stable")  # ties by gallery index
        ranked = gallery_labels[order]
        for k in ranks:
            if np.any(ranked[:k] == query_labels[qi]):
                hits[k] += 1
    if counted == 0:
        raise ValueError("no query has a gallery mate")
    return {k: hits[k] / counted for k in ranks}


def mean_average_precision(dist: np.ndarray, query_labels,
                           gallery_labels) -> float:
    query_labels = np.asarray(query_labels)
    gallery_labels = np.asarray(gallery_labels)
    aps = []
    for qi in range(dist.shape[0]):
        order = np.argsort(dist[qi], kind="stable")
        rel = (gallery_labels[order] == query_labels[qi])
        if not rel.any():
            continue
        cum = np.cumsum(rel)
        ranks = np.nonzero(rel)[0] + 1
        aps.append(float(np.mean(cum[ranks - 1] / ranks)))
    if not aps:
        raise ValueError("no query has a gallery mate")
    return float(np.mean(aps))


def _best_threshold_accuracy(genuine, impostor):
    """Exhaustive sweep over midpoints of sorted similarity scores."""
    scores = np.concatenate([genuine, impostor])
    labels = np.concatenate([np.ones(len(genuine)), np.zeros(len(impostor))])
    order = np.argsort(scores)
    scores, labels = scores[order], labels[order]
    candidates = [scores[0] - 1.0]
    candidates += list((scores[:-1] + scores[1:]) / 2.0)
    candidates.append(scores[-1] + 1.0)
    best_acc, best_thr = -1.0, candidates[0]
    n = len(scores)
    for thr in candidates:
        acc = (np.sum(labels[scores > thr] == 1)
               + np.sum(labels[scores <= thr] == 0)) / n
        if acc > best_acc:
            best_acc, best_thr = acc, thr
    return best_acc, best_thr


def verification(genuine_scores, impostor_scores, folds: int = 1) -> float:
    """1:1 verification accuracy; similarity scores (higher = same).

    folds=1: best single threshold. folds=k: k-fold cross-validation,
    threshold fit on the training folds, mean held-out accuracy reported.
    """
    genuine = np.asarray(genuine_scores, dtype=np.float64)
    impostor = np.asarray(impostor_scores, dtype=np.float64)
    if len(genuine) + len(impostor) < 2:
        raise ValueError("need at least 2 pairs")
    if folds == 1:
        acc, _ = _best_threshold_accuracy(genuine, impostor)
        return float(acc)
    pairs = np.concatenate([genuine, impostor])
    labels = np.concatenate([np.ones(len(genuine)), np.zeros(len(impostor))])
    if len(pairs) < folds:
        raise ValueError("fewer pairs than folds")
    idx = np.arange(len(pairs))
    fold_of = idx % folds
    accs = []
    for f in range(folds):
        train = fold_of != f
        test = ~train
        _, thr = _best_threshold_accuracy(pairs[train & (labels == 1)],
                                          pairs[train & (labels == 0)])
        pred = pairs[test] > thr
        accs.append(float(np.mean(pred == (labels[test] == 1))))
    return float(np.mean(accs))


def tar_at_far(genuine_scores, impostor_scores, far_targets) -> dict:
    """TAR at each FAR target using the most permissive admissible threshold.

    Thresholds are "accept if score > t". A target below 1/|impostors| is
    reported at the strictest threshold and flagged.
    """
    genuine = np.asarray(genuine_scores, dtype=np.float64)
    impostor = np.asarray(impostor_scores, dtype=np.float64)
    if len(impostor) == 0:
        raise ValueError("empty impostor set")
    out = {}
    thresholds = np.unique(np.concatenate([genuine, impostor]))
    candidates = np.concatenate([[thresholds[0] - 1.0], thresholds])
    for target in far_targets:
        best_tar, flagged = None, False
        for thr in candidates:   # ascending: later = stricter
            far = float(np.mean(impostor > thr))
            if far <= target:
                best_tar = float(np.mean(genuine > thr))
                break
        if best_tar is None:
            best_tar = float(np.mean(genuine > candidates[-1]))
            flagged = True
        if 0 < target < 1.0 / len(impostor):
            # the impostor set cannot resolve FARs this small; the measured
            # point is FAR = 0, not the requested operating point
            flagged = True
        out[target] = {"tar": best_tar, "flagged": flagged}
    return out


def tpir_at_fpir(probe_dirs: np.ndarray, probe_labels, gallery_dirs: np.ndarray,
                 gallery_labels, fpir_targets) -> dict:
    """Open-set identification: TPIR at each FPIR target.

    probe_labels entries absent from the gallery are distractors
    (out-of-gallery). Similarity is cosine; accept if best gallery score
    exceeds the threshold.
    """
    sims = np.clip(probe_dirs @ np.asarray(gallery_dirs).T, -1.0, 1.0)
    return tpir_at_fpir_sims(sims, probe_labels, gallery_labels, fpir_targets)


def tpir_at_fpir_sims(sims: np.ndarray, probe_labels, gallery_labels,
                      fpir_targets) -> dict:
    """tpir_at_fpir on a precomputed probe x gallery similarity matrix."""
    probe_labels = np.asarray(probe_labels)
    gallery_labels = np.asarray(gallery_labels)
    in_gallery = np.array([np.any(gallery_labels == pl) for pl in probe_labels])
    if not np.any(~in_gallery):
        raise ValueError("no out-of-gallery probes; FPIR undefined")
    if not np.any(in_gallery):
        raise ValueError("no in-gallery probes; TPIR undefined")
    best = sims.max(axis=1)
    best_idx = sims.argmax(axis=1)
    correct = gallery_labels[best_idx] == probe_labels
    oog_best = best[~in_gallery]
    ig_best = best[in_gallery]
    ig_correct = correct[in_gallery]
    thresholds = np.unique(best)
    candidates = np.concatenate([[thresholds[0] - 1.0], thresholds])
    out = {}
    for target in fpir_targets:
        tpir = None
        for thr in candidates:
            fpir = float(np.mean(oog_best > thr))
            if fpir <= target:
                tpir = float(np.mean(ig_correct & (ig_best > thr)))
                break
        if tpir is None:
            thr = candidates[-1]
            tpir = float(np.mean(ig_correct & (ig_best > thr)))
        out[target] = tpir
    return out
