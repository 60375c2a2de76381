"""Binary persistence: checkpoints ("DCK1") and feature stores ("DFS1").

Checkpoint layout: magic, u32 version, u32 record count, then per record
(u16 name length, UTF-8 name, u8 rank, rank x u32 dims, row-major little-
endian float64 data). Feature store layout: magic, u32 version, u32 count,
u32 dim, then per record (u32 sample id, u32 label, u8 backbone tag,
float32 magnitude, dim x float32 direction). Both round-trip bit-exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

CHECKPOINT_MAGIC = b"DCK1"
STORE_MAGIC = b"DFS1"
FORMAT_VERSION = 1

BACKBONE_TAGS = {"cl": 0, "da": 1}
TAG_NAMES = {v: k for k, v in BACKBONE_TAGS.items()}


class FormatError(ValueError):
    pass


def write_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def read_tensors(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r}")
        version, count = struct.unpack("<II", fh.read(8))
        if version > FORMAT_VERSION:
            raise FormatError(
                f"checkpoint format version {version} is newer than "
                f"supported version {FORMAT_VERSION}")
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{rank}I", fh.read(4 * rank))
            n = int(np.prod(shape))
            data = np.frombuffer(fh.read(8 * n), dtype="<f8")
            out[name] = data.reshape(shape).copy()
        return out


@dataclass(frozen=True)
class StoreRecord:
    sample_id: int
    label: int
    backbone: str          # "cl" | "da"
    direction: np.ndarray  # unit, float32 on disk
    magnitude: float


def write_store(path, records: list[StoreRecord], dim: int) -> None:
    with open(path, "wb") as fh:
        fh.write(STORE_MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, len(records), dim))
        for r in records:
            direction = np.ascontiguousarray(r.direction, dtype="<f4")
            if direction.shape != (dim,):
                raise FormatError(
                    f"direction dim {direction.shape} != store dim {dim}")
            fh.write(struct.pack("<IIB", r.sample_id, r.label,
                                 BACKBONE_TAGS[r.backbone]))
            fh.write(struct.pack("<f", r.magnitude))
            fh.write(direction.tobytes())


def read_store(path) -> list[StoreRecord]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != STORE_MAGIC:
            raise FormatError(f"bad feature-store magic {magic!r}")
        version, count, dim = struct.unpack("<III", fh.read(12))
        if version > FORMAT_VERSION:
            raise FormatError(
                f"feature-store version {version} is newer than supported "
                f"version {FORMAT_VERSION}")
        records = []
        for _ in range(count):
            sample_id, label, tag = struct.unpack("<IIB", fh.read(9))
            (mag,) = struct.unpack("<f", fh.read(4))
            direction = np.frombuffer(fh.read(4 * dim), dtype="<f4").copy()
            records.append(StoreRecord(sample_id, label, TAG_NAMES[tag],
                                       direction, mag))
        return records


def save_checkpoint(path, ckpt, config_hash: str) -> None:
    """Serialize a model.Checkpoint plus metadata sidecar fields."""
    tensors = {}
    for prefix, params in (("student", ckpt.student), ("teacher", ckpt.teacher)):
        for i, w in enumerate(params.weights):
            tensors[f"{prefix}.w{i}"] = w
        for i, b in enumerate(params.biases):
            tensors[f"{prefix}.b{i}"] = b
    tensors["centers"] = ckpt.centers.matrix
    tensors["meta.step_epoch"] = np.array([float(ckpt.step), float(ckpt.epoch)])
    if ckpt.opt is not None:
        for i, buf in enumerate(ckpt.opt.buffers):
            tensors[f"opt.m{i}"] = buf
        for i, buf in enumerate(ckpt.opt.second):
            tensors[f"opt.v{i}"] = buf
        tensors["opt.meta"] = np.array([
            float(ckpt.opt.step_count),
            0.0 if ckpt.opt.kind == "sgd" else 1.0,
        ])
    write_tensors(path, tensors)
    with open(str(path) + ".json", "w") as fh:
        json.dump({"config_hash": config_hash, "step": ckpt.step,
                   "epoch": ckpt.epoch}, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path, config):
    """Rebuild a model.Checkpoint from disk; config supplies the run spec."""
    from .losses import ClassCenters
    from .model import Checkpoint, ModelParams

    tensors = read_tensors(path)
    def rebuild(prefix):
        weights, biases, i = [], [], 0
        while f"{prefix}.w{i}" in tensors:
            weights.append(tensors[f"{prefix}.w{i}"])
            biases.append(tensors[f"{prefix}.b{i}"])
            i += 1
        return ModelParams(weights, biases)

    step_epoch = tensors["meta.step_epoch"]
    opt = None
    if "opt.meta" in tensors:
        from .model import OptimizerState

        meta = tensors["opt.meta"]
        kind = "sgd" if meta[1] == 0.0 else "adam"
        buffers, second, i = [], [], 0
        while f"opt.m{i}" in tensors:
            buffers.append(tensors[f"opt.m{i}"])
            if f"opt.v{i}" in tensors:
                second.append(tensors[f"opt.v{i}"])
            i += 1
        opt = OptimizerState(kind=kind, lr=0.0, step_count=int(meta[0]),
                             buffers=buffers, second=second)
    return Checkpoint(student=rebuild("student"), teacher=rebuild("teacher"),
                      centers=ClassCenters(tensors["centers"]),
                      step=int(step_epoch[0]), epoch=int(step_epoch[1]),
                      config=config, opt=opt)
