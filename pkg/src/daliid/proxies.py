"""Farthest-point proxy selection and negative-proxy mining.

Each class keeps exactly 5 proxies chosen greedily: the first at random,
each subsequent one the sample furthest (cosine distance) from all proxies
chosen so far, tracked by an element-wise running minimum. Negatives for a
sample are the closest proxies of other classes.
"""

from __future__ import annotations

import warnings

import numpy as np

from .numerics import SeedStream

PROXIES_PER_CLASS = 5
TOP_NEGATIVES = 50


def cosine_distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """1 - cos for unit-vector rows of a against rows of b."""
    return 1.0 - np.clip(a @ b.T, -1.0, 1.0)


def select_proxies(class_features: np.ndarray, k: int = PROXIES_PER_CLASS,
                   rng: SeedStream | None = None,
                   first: int | None = None) -> list[int]:
    """Greedy farthest-point selection of k sample indices.

    The first pick is drawn from rng unless ``first`` is given. Ties in the
    argmax break toward the lowest index. A class smaller than k repeats its
    indices cyclically to fill all k slots.
    """
    feats = np.asarray(class_features, dtype=np.float64)
    n = feats.shape[0]
    if n == 0:
        raise ValueError("cannot select proxies from an empty class")
    if first is None:
        first = int(rng.generator().integers(0, n))
    chosen = [first]
    dists = cosine_distance_matrix(feats, feats)
    v = dists[:, first].copy()
    while len(chosen) < min(k, n):
        nxt = int(np.argmax(v))  # np.argmax already breaks ties low
        chosen.append(nxt)
        v = np.minimum(v, dists[:, nxt])
    while len(chosen) < k:
        chosen.append(chosen[len(chosen) % n])
    return chosen


class ProxyBank:
    """Per-class proxy vectors with a flat (class, slot) index."""

    def __init__(self, proxies: dict[int, np.ndarray]):
        self._proxies = {c: np.asarray(m, dtype=np.float64)
                         for c, m in proxies.items()}
        for c, m in self._proxies.items():
            if m.shape[0] != PROXIES_PER_CLASS:
                raise ValueError(
                    f"class {c} has {m.shape[0]} proxies, expected "
                    f"{PROXIES_PER_CLASS}")

    @property
    def classes(self) -> list[int]:
        return sorted(self._proxies)

    def class_proxies(self, label: int) -> np.ndarray:
        return self._proxies[label]

    def foreign_proxies(self, label: int):
        """All (class, slot, vector) entries outside ``label``, sorted by id."""
        out = []
        for c in self.classes:
            if c == label:
                continue
            m = self._proxies[c]
            for slot in range(m.shape[0]):
                out.append((c, slot, m[slot]))
        return out


def mine_negatives(f: np.ndarray, bank: ProxyBank, own_class: int,
                   k: int = TOP_NEGATIVES) -> np.ndarray:
    """Top-k closest foreign proxies by cosine distance, ties by (class, slot).

    Returns a (k', D) array, k' = min(k, available); empty with a warning if
    the bank holds only the sample's own class.
    """
    entries = bank.foreign_proxies(own_class)
    if not entries:
        warnings.warn("proxy bank contains only the sample's own class; "
                      "no negatives available")
        return np.zeros((0, np.asarray(f).shape[0]))
    f = np.asarray(f, dtype=np.float64)
    keyed = [(1.0 - min(1.0, max(-1.0, float(vec @ f))), c, slot, vec)
             for c, slot, vec in entries]
    keyed.sort(key=lambda t: (t[0], t[1], t[2]))
    return np.array([vec for _, _, _, vec in keyed[:k]])


def rebuild_bank(embed_fn, images, labels, rng: SeedStream) -> ProxyBank:
    """Build the proxy bank from encoder embeddings of clean training images.

    embed_fn maps an image to a unit direction. Per-class selection derives
    its seed from the class label so rebuilds are reproducible and classes
    are independent.
    """
    labels = np.asarray(labels)
    feats = np.array([embed_fn(img) for img in images])
    proxies = {}
    for c in sorted(set(int(l) for l in labels)):
        idx = np.nonzero(labels == c)[0]
        class_feats = feats[idx]
        sel = select_proxies(class_feats, PROXIES_PER_CLASS, rng.child(c))
        proxies[c] = class_feats[sel]
    return ProxyBank(proxies)
