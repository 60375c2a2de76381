"""Small embedding encoder with analytic backprop, optimizers, and training.

Architecture: flatten -> affine(256) -> leaky-relu(0.01) -> affine(256) ->
leaky-relu -> affine(D) -> l2-normalize. Gradients pass through the
normalization Jacobian (I - u u^T) / ||x||. Two training loops: clean
(level-0 images, unit weights) and distortion-adaptive (mixed batches with
scheduled weights, optional proxy loss in reid mode). A mean-teacher copy
of the encoder is updated by exponential moving average.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import BatchSpec, IdentityDataset, sample_batch
from .distortion import DistortionParams
from .losses import (ClassCenters, LossResult, MarginConfig, NormStats,
                     combined_loss, distortion_loss, proxy_loss)
from .numerics import SeedStream
from .proxies import ProxyBank, mine_negatives, rebuild_bank
from .schedule import BatchWeights, WeightSchedule, batch_weights

LEAKY_SLOPE = 0.01


class ModelParams:
    """Affine layer stack; weights[i] is (fan_in, fan_out)."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        self.weights = weights
        self.biases = biases

    @classmethod
    def init(cls, layer_dims: list[int], rng: SeedStream) -> "ModelParams":
        """Uniform fan-in scaled init, zero biases."""
        gen = rng.generator()
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims, layer_dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(gen.uniform(-bound, bound, (fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    def arrays(self) -> list[np.ndarray]:
        return list(self.weights) + list(self.biases)

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights],
                           [b.copy() for b in self.biases])

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def embed_dim(self) -> int:
        return self.weights[-1].shape[1]


def forward_batch(params: ModelParams, X: np.ndarray):
    """Return (directions (N,D), magnitudes (N,), cache)."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != params.input_dim:
        raise ValueError(
            f"input dim {X.shape[1]} != first layer {params.input_dim}")
    acts = [X]
    h = X
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ W + b
        if i < last:
            h = np.where(z > 0, z, LEAKY_SLOPE * z)
        else:
            h = z
        acts.append(h)
    raw = acts[-1]
    mags = np.sqrt(np.einsum("nd,nd->n", raw, raw))
    if np.any(mags == 0):
        raise ValueError("zero-magnitude raw embedding")
    U = raw / mags[:, None]
    return U, mags, acts


def forward(params: ModelParams, img: np.ndarray):
    """Single-image convenience wrapper: (direction, magnitude)."""
    U, mags, _ = forward_batch(params, np.asarray(img).reshape(1, -1))
    return U[0], float(mags[0])


def backward_batch(params: ModelParams, acts, grad_U: np.ndarray,
                   mags: np.ndarray):
    """Reverse-mode gradients for all layers given d(loss)/d(direction)."""
    raw = acts[-1]
    U = raw / mags[:, None]
    # normalization Jacobian: g_raw = (g_u - u (u . g_u)) / ||x||
    proj = np.einsum("nd,nd->n", U, grad_U)
    g = (grad_U - U * proj[:, None]) / mags[:, None]
    grad_W = [None] * len(params.weights)
    grad_b = [None] * len(params.biases)
    last = len(params.weights) - 1
    for i in range(last, -1, -1):
        h_in = acts[i]
        if i < last:
            # acts[i+1] is post-activation; slope from its sign
            g = g * np.where(acts[i + 1] > 0, 1.0, LEAKY_SLOPE)
        grad_W[i] = h_in.T @ g
        grad_b[i] = g.sum(axis=0)
        if i > 0:
            g = g @ params.weights[i].T
    return grad_W + grad_b


@dataclass
class OptimizerState:
    kind: str                       # "sgd" | "adam"
    lr: float
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-4
    step_count: int = 0
    buffers: list[np.ndarray] = field(default_factory=list)
    second: list[np.ndarray] = field(default_factory=list)

    def _ensure(self, arrays):
        if not self.buffers:
            self.buffers = [np.zeros_like(a) for a in arrays]
            if self.kind == "adam":
                self.second = [np.zeros_like(a) for a in arrays]


def step(opt: OptimizerState, arrays: list[np.ndarray],
         grads: list[np.ndarray], lr: float) -> None:
    """In-place SGD-momentum or Adam update with decoupled weight decay."""
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient; aborting step")
    opt._ensure(arrays)
    opt.step_count += 1
    t = opt.step_count
    for i, (a, g) in enumerate(zip(arrays, grads)):
        if opt.weight_decay:
            a -= lr * opt.weight_decay * a
        if opt.kind == "sgd":
            opt.buffers[i] = opt.momentum * opt.buffers[i] + g
            a -= lr * opt.buffers[i]
        elif opt.kind == "adam":
            opt.buffers[i] = opt.beta1 * opt.buffers[i] + (1 - opt.beta1) * g
            opt.second[i] = opt.beta2 * opt.second[i] + (1 - opt.beta2) * g * g
            m_hat = opt.buffers[i] / (1 - opt.beta1 ** t)
            v_hat = opt.second[i] / (1 - opt.beta2 ** t)
            a -= lr * m_hat / (np.sqrt(v_hat) + opt.eps)
        else:
            raise ValueError(f"unknown optimizer kind {opt.kind!r}")


def ema_update(teacher: ModelParams, student: ModelParams,
               beta: float) -> None:
    """Teacher <- beta * teacher + (1 - beta) * student, element-wise."""
    if not (0.0 <= beta <= 1.0):
        raise ValueError("beta must be in [0, 1]")
    for t_arr, s_arr in zip(teacher.arrays(), student.arrays()):
        t_arr *= beta
        t_arr += (1.0 - beta) * s_arr


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "face"              # "face" | "reid"
    epochs: int = 10
    P: int = 8
    K: int = 2
    embed_dim: int = 64
    hidden: tuple[int, ...] = (256, 256)
    image_size: int = 32
    seed: int = 0
    lr: float = 0.001
    ema_beta: float = 0.999
    ema_enabled: bool | None = None   # None: on in reid mode only
    initial_weights: tuple[float, ...] = (1.0, 0.8, 0.65, 0.5, 0.35, 0.2)
    margin: MarginConfig | None = None
    distortion: DistortionParams = DistortionParams()
    batches_per_epoch: int | None = None   # None: cover the train split
    schedule_steps: int | None = None      # None: total planned updates

    def resolved_margin(self) -> MarginConfig:
        if self.margin is not None:
            return self.margin
        return MarginConfig.face() if self.mode == "face" else MarginConfig.reid()

    def resolved_ema(self) -> bool:
        if self.ema_enabled is not None:
            return self.ema_enabled
        return self.mode == "reid"


@dataclass
class Checkpoint:
    student: ModelParams
    teacher: ModelParams
    centers: ClassCenters
    step: int
    epoch: int
    config: TrainConfig
    epoch_log: list[dict] = field(default_factory=list)
    opt: "OptimizerState | None" = None

    def eval_params(self) -> ModelParams:
        return self.teacher if self.config.resolved_ema() else self.student


def _learning_rate(cfg: TrainConfig, base_lr: float, s: int,
                   total: int) -> float:
    if cfg.mode == "face":
        # polynomial (linear) decay to 1% of base
        frac = min(s, total) / max(total, 1)
        return base_lr * max(1.0 - frac, 0.01)
    # reid: divide by 10 at 40% and 80% of total steps
    lr = base_lr
    if s >= 0.4 * total:
        lr /= 10.0
    if s >= 0.8 * total:
        lr /= 10.0
    return lr


def _uniform_weights(n: int) -> BatchWeights:
    return BatchWeights(weights=np.ones(n), normalizer=float(n))


def _train(cfg: TrainConfig, dataset: IdentityDataset, distorted: bool,
           resume: Checkpoint | None = None,
           opt_state: OptimizerState | None = None) -> Checkpoint:
    margin = cfg.resolved_margin()
    input_dim = cfg.image_size * cfg.image_size
    dims = [input_dim, *cfg.hidden, cfg.embed_dim]
    root = SeedStream(cfg.seed)
    if resume is None:
        student = ModelParams.init(dims, root.child(0))
        teacher = student.copy()
        num_classes = len(dataset.train_by_label())
        centers = ClassCenters.random(num_classes, cfg.embed_dim, root.child(1))
        start_epoch = 0
    else:
        student, teacher = resume.student, resume.teacher
        centers = resume.centers
        start_epoch = resume.epoch

    train_count = len(dataset.of_split("train"))
    per_batch = cfg.P * cfg.K * (2 if distorted else 1)
    batches = cfg.batches_per_epoch or max(1, train_count // per_batch)
    total_steps = cfg.epochs * batches
    sched = WeightSchedule(cfg.schedule_steps or max(total_steps, 1),
                           cfg.initial_weights)
    base_lr = 3.5e-4 if cfg.mode == "reid" else cfg.lr
    opt = opt_state or OptimizerState(
        kind="adam" if cfg.mode == "reid" else "sgd", lr=base_lr)
    spec = BatchSpec(cfg.P, cfg.K)
    use_proxy = cfg.mode == "reid" and margin.lam > 0
    ema_beta = cfg.ema_beta if cfg.resolved_ema() else 0.0

    ckpt = Checkpoint(student, teacher, centers, start_epoch * batches,
                      start_epoch, cfg)
    global_step = start_epoch * batches
    for epoch in range(start_epoch, cfg.epochs):
        bank = None
        if use_proxy:
            bank = _rebuild_bank_from(teacher, dataset, root.child(10_000 + epoch))
        losses_acc = []
        level_w_acc = np.zeros(6)
        level_n = np.zeros(6)
        lr = base_lr
        for b in range(batches):
            batch_rng = root.child(2).child(epoch).child(b)
            batch = sample_batch(dataset, spec, cfg.distortion, batch_rng,
                                 distorted=distorted)
            X = np.array([img.reshape(-1) for img, _, _ in batch])
            labels = [lab for _, lab, _ in batch]
            levels = [lev for _, _, lev in batch]
            U, mags, acts = forward_batch(student, X)
            if distorted:
                weights = batch_weights(levels, global_step, sched)
            else:
                weights = _uniform_weights(len(batch))
            stats = (NormStats.from_magnitudes(mags)
                     if margin.mode == "adaptive" else None)
            center_part = distortion_loss(U, labels, weights, centers, margin,
                                          norm_stats=stats, magnitudes=mags)
            if use_proxy:
                negs = [mine_negatives(U[i], bank, labels[i])
                        for i in range(len(batch))]
                prox_part = proxy_loss(U, labels, weights, bank, negs, margin,
                                       norm_stats=stats, magnitudes=mags)
                total = combined_loss(center_part, prox_part, margin.lam)
            else:
                total = center_part
            if not np.isfinite(total.value):
                return ckpt  # diverged: last good checkpoint
            grads = backward_batch(student, acts, total.grad_features, mags)
            lr = _learning_rate(cfg, base_lr, global_step, total_steps)
            arrays = student.arrays() + [centers.matrix]
            step(opt, arrays, grads + [total.grad_centers], lr)
            centers.renormalize()
            ema_update(teacher, student, ema_beta)
            global_step += 1
            losses_acc.append(total.value)
            for lev, w in zip(levels, weights.weights):
                level_w_acc[lev] += w
                level_n[lev] += 1
        mean_w = np.divide(level_w_acc, level_n, out=np.zeros(6),
                           where=level_n > 0)
        ckpt.epoch_log.append({
            "epoch": epoch, "step": global_step,
            "mean_loss": float(np.mean(losses_acc)) if losses_acc else 0.0,
            **{f"mean_w{l}": float(mean_w[l]) for l in range(6)},
            "lr": lr,
        })
        ckpt.step, ckpt.epoch = global_step, epoch + 1
    ckpt.opt = opt
    return ckpt


def _rebuild_bank_from(encoder: ModelParams, dataset: IdentityDataset,
                       rng: SeedStream) -> ProxyBank:
    train = dataset.of_split("train")
    images = [s.image.reshape(-1) for s in train]
    labels = [s.label for s in train]
    X = np.array(images)
    U, _, _ = forward_batch(encoder, X)
    feats = {i: U[i] for i in range(len(train))}
    return rebuild_bank(lambda i: feats[i], list(range(len(train))),
                        labels, rng)


def train_clean(cfg: TrainConfig, dataset: IdentityDataset,
                resume: Checkpoint | None = None,
                opt_state: OptimizerState | None = None) -> Checkpoint:
    """Train the clean backbone: level-0 images only, all weights 1."""
    return _train(cfg, dataset, distorted=False, resume=resume,
                  opt_state=opt_state)


def train_distortion_adaptive(cfg: TrainConfig, dataset: IdentityDataset,
                              resume: Checkpoint | None = None,
                              opt_state: OptimizerState | None = None,
                              ) -> Checkpoint:
    """Train the distortion-adaptive backbone on mixed PK batches."""
    return _train(cfg, dataset, distorted=True, resume=resume,
                  opt_state=opt_state)
