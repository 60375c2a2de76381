"""Margin-softmax objectives with analytic gradients.

Four operations: per-sample margin cross-entropy against class centers or
proxy sets, its weighted batch aggregate, the multi-proxy batch loss, and
the lambda-combined total. Adaptive (magnitude-conditioned) margins follow
the angular/additive split with a scale factor s; fixed mode uses a
temperature tau with margins applied inside the exponent.

Convention: the positive logit subtracts the additive margin (the literal
"+m2" placement in some write-ups is treated as a typesetting artifact).
Fixed mode: z+ = (cos(w + m1) - m2) / tau. Adaptive mode: z+ =
s*cos(w + m1) - m2 with s playing the role of 1/tau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import log_sum_exp

SIN_FLOOR = 1e-6


@dataclass(frozen=True)
class MarginConfig:
    tau: float = 1.0
    m1: float = 0.0
    m2: float = 0.0
    mode: str = "fixed"  # "fixed" | "adaptive"
    m: float = 0.4       # adaptive base margin
    s: float = 64.0      # adaptive logit scale
    lam: float = 0.0     # proxy-loss weight in the combined objective

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.mode not in ("fixed", "adaptive"):
            raise ValueError(f"unknown margin mode {self.mode!r}")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")

    @classmethod
    def face(cls, lam: float = 0.0) -> "MarginConfig":
        """Face mode: tau=1, adaptive margins (m=0.4, s=64)."""
        return cls(tau=1.0, mode="adaptive", m=0.4, s=64.0, lam=lam)

    @classmethod
    def reid(cls, lam: float = 0.4) -> "MarginConfig":
        """ReID mode: tau=0.05, zero margins, lambda defaults to 0.4."""
        return cls(tau=0.05, m1=0.0, m2=0.0, mode="fixed", lam=lam)


@dataclass(frozen=True)
class NormStats:
    """Batch statistics of pre-normalization feature magnitudes."""

    mean: float
    std: float
    clip: float = 1.0

    @classmethod
    def from_magnitudes(cls, mags, eps: float = 1e-3, clip: float = 1.0):
        mags = np.asarray(mags, dtype=np.float64)
        return cls(mean=float(mags.mean()),
                   std=max(float(mags.std()), eps),
                   clip=clip)


def adaface_margins(magnitude: float, stats: NormStats,
                    cfg: MarginConfig) -> tuple[float, float]:
    """(angular margin, additive margin) as a function of feature magnitude."""
    norm_hat = (magnitude - stats.mean) / stats.std
    norm_hat = min(stats.clip, max(-stats.clip, norm_hat))
    return -cfg.m * norm_hat, cfg.m * norm_hat + cfg.m


class ClassCenters:
    """Learnable per-class unit-vector centers, one row per class."""

    def __init__(self, matrix: np.ndarray):
        self.matrix = np.asarray(matrix, dtype=np.float64)

    @classmethod
    def random(cls, num_classes: int, dim: int, rng) -> "ClassCenters":
        gen = rng.generator()
        m = gen.standard_normal((num_classes, dim))
        m /= np.linalg.norm(m, axis=1, keepdims=True)
        return cls(m)

    def renormalize(self) -> None:
        norms = np.linalg.norm(self.matrix, axis=1, keepdims=True)
        self.matrix /= norms

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]


@dataclass
class LossResult:
    value: float
    grad_features: np.ndarray            # (D,) or (N, D)
    grad_centers: np.ndarray | None = None  # (C, D) dense, or None

    def __add__(self, other: "LossResult") -> "LossResult":
        gc = _add_optional(self.grad_centers, other.grad_centers)
        return LossResult(self.value + other.value,
                          self.grad_features + other.grad_features, gc)

    def scaled(self, factor: float) -> "LossResult":
        gc = None if self.grad_centers is None else factor * self.grad_centers
        return LossResult(factor * self.value, factor * self.grad_features, gc)


def _add_optional(a, b):
    if a is None:
        return None if b is None else b.copy()
    if b is None:
        return a.copy()
    return a + b


def _margin_pair(cfg: MarginConfig, margins) -> tuple[float, float]:
    if margins is not None:
        return margins
    return cfg.m1, cfg.m2


def ce_loss(f: np.ndarray, pos_index: int, proxies: np.ndarray,
            cfg: MarginConfig, margins: tuple[float, float] | None = None,
            ) -> LossResult:
    """Margin softmax cross-entropy of feature f against a proxy/center set.

    proxies is (P, D); row pos_index is the positive. In adaptive mode the
    per-sample margins must be supplied via ``margins``. grad_centers is the
    dense (P, D) gradient over the full proxy set (softmax-weighted).
    """
    f = np.asarray(f, dtype=np.float64)
    proxies = np.asarray(proxies, dtype=np.float64)
    num = proxies.shape[0]
    if not (0 <= pos_index < num):
        raise ValueError("positive index outside proxy set")
    m1, m2 = _margin_pair(cfg, margins)
    scale = cfg.s if cfg.mode == "adaptive" else 1.0 / cfg.tau

    cos_all = np.clip(proxies @ f, -1.0, 1.0)
    c = cos_all[pos_index]
    sin_w = max(np.sqrt(max(0.0, 1.0 - c * c)), SIN_FLOOR)
    psi = c * np.cos(m1) - sin_w * np.sin(m1)      # cos(w + m1)
    dpsi_dc = np.cos(m1) + np.sin(m1) * (c / sin_w)

    logits = scale * cos_all
    if cfg.mode == "adaptive":
        logits[pos_index] = scale * psi - m2
    else:
        logits[pos_index] = scale * (psi - m2)

    lse = log_sum_exp(logits)
    value = -logits[pos_index] + lse
    p = np.exp(logits - lse)                        # softmax
    dz = p.copy()
    dz[pos_index] -= 1.0

    # chain through the logit of each proxy: dz_j/dcos_j
    dlogit_dcos = np.full(num, scale)
    dlogit_dcos[pos_index] = scale * dpsi_dc

    coeff = dz * dlogit_dcos
    grad_f = coeff @ proxies
    grad_centers = coeff[:, None] * f[None, :]
    return LossResult(float(value), grad_f, grad_centers)


def distortion_loss(features: np.ndarray, labels, weights,
                    centers: ClassCenters, cfg: MarginConfig,
                    norm_stats: NormStats | None = None,
                    magnitudes=None) -> LossResult:
    """Weighted mean of per-sample ce_loss against the class centers.

    weights is a BatchWeights; normalization is by its W = sum of weights.
    In adaptive mode, per-sample margins come from (magnitudes, norm_stats).
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if weights.normalizer == 0:
        raise ValueError("weight normalizer W is zero")
    value = 0.0
    grad_f = np.zeros_like(features)
    grad_c = np.zeros_like(centers.matrix)
    inv_w = 1.0 / weights.normalizer
    for i in range(n):
        margins = None
        if cfg.mode == "adaptive":
            margins = adaface_margins(float(magnitudes[i]), norm_stats, cfg)
        res = ce_loss(features[i], int(labels[i]), centers.matrix, cfg,
                      margins=margins)
        wi = weights.weights[i] * inv_w
        value += wi * res.value
        grad_f[i] = wi * res.grad_features
        grad_c += wi * res.grad_centers
    return LossResult(value, grad_f, grad_c)


def proxy_loss(features: np.ndarray, labels, weights, bank,
               negatives, cfg: MarginConfig,
               norm_stats: NormStats | None = None,
               magnitudes=None) -> LossResult:
    """Multi-proxy loss: each sample is pulled to all proxies of its class.

    For sample i with class proxy set P_i and mined negatives N_i, the
    candidate set is P_i followed by N_i; the ce term is averaged over each
    q in P_i acting as positive. Proxies are constants: gradients flow only
    to the features.
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if weights.normalizer == 0:
        raise ValueError("weight normalizer W is zero")
    value = 0.0
    grad_f = np.zeros_like(features)
    inv_w = 1.0 / weights.normalizer
    for i in range(n):
        own = bank.class_proxies(int(labels[i]))
        if own.shape[0] == 0:
            raise ValueError(f"empty proxy set for class {labels[i]}")
        neg = negatives[i]
        candidates = np.vstack([own, neg]) if len(neg) else own
        margins = None
        if cfg.mode == "adaptive":
            margins = adaface_margins(float(magnitudes[i]), norm_stats, cfg)
        acc_val = 0.0
        acc_grad = np.zeros(features.shape[1])
        for q in range(own.shape[0]):
            res = ce_loss(features[i], q, candidates, cfg, margins=margins)
            acc_val += res.value
            acc_grad += res.grad_features
        wi = weights.weights[i] * inv_w / own.shape[0]
        value += wi * acc_val
        grad_f[i] = wi * acc_grad
    return LossResult(value, grad_f, None)


def combined_loss(center_part: LossResult, proxy_part: LossResult,
                  lam: float) -> LossResult:
    """Total objective: center term plus lambda times the proxy term."""
    return center_part + proxy_part.scaled(lam)
