"""Declarative run configuration: JSON in, validated objects out.

Unknown keys are rejected so typos fail fast. Defaults are materialized
back into the run's output directory, making runs self-describing. The
config hash identifies the producing configuration in checkpoint metadata.
"""

from __future__ import annotations

import copy
import hashlib
import json

from .distortion import DistortionParams
from .evalfusion import FusionConfig
from .losses import MarginConfig
from .model import TrainConfig


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "seed": 0,
    "dataset": {
        "num_ids": 64,
        "train_per_id": 20,
        "eval_per_id": 8,
        "size": 32,
        "jitter": True,
        "distractor_ids": 0,
    },
    "train": {
        "mode": "face",
        "epochs": 10,
        "P": 8,
        "K": 2,
        "embed_dim": 64,
        "hidden": [256, 256],
        "lr": 0.001,
        "ema_beta": 0.999,
        "ema_enabled": None,
        "initial_weights": [1.0, 0.8, 0.65, 0.5, 0.35, 0.2],
        "lambda": None,
        "batches_per_epoch": None,
        "schedule_steps": None,
    },
    "distortion": {
        "warp_rms_per_level": 1.0,
        "blur_sigma_per_level": 1.4,
        "corr_frac": 0.25,
        "ref_size": 32.0,
    },
    "fusion": {
        "enabled": True,
        "standardize": "off",
    },
}


def _merge(defaults: dict, given: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path + key!r} must be a table")
            out[key] = _merge(defaults[key], value, path + key + ".")
        else:
            out[key] = value
    return out


class RunConfig:
    def __init__(self, raw: dict):
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        self.data = _merge(DEFAULTS, raw)
        self._validate()

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        return cls(raw)

    def _validate(self):
        d = self.data
        if d["train"]["mode"] not in ("face", "reid"):
            raise ConfigError("train.mode must be 'face' or 'reid'")
        if d["dataset"]["num_ids"] < 2:
            raise ConfigError("dataset.num_ids must be >= 2")
        for key in ("epochs", "P", "K", "embed_dim"):
            if d["train"][key] <= 0:
                raise ConfigError(f"train.{key} must be positive")
        if not (0.0 <= d["train"]["ema_beta"] <= 1.0):
            raise ConfigError("train.ema_beta must be in [0, 1]")
        if d["fusion"]["standardize"] not in ("off", "per-backbone-mean"):
            raise ConfigError("fusion.standardize must be 'off' or "
                              "'per-backbone-mean'")

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def config_hash(self) -> str:
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def dataset_kwargs(self) -> dict:
        d = self.data["dataset"]
        return {"num_ids": d["num_ids"], "train_per_id": d["train_per_id"],
                "eval_per_id": d["eval_per_id"], "size": d["size"],
                "jitter": d["jitter"], "distractor_ids": d["distractor_ids"]}

    def distortion_params(self) -> DistortionParams:
        return DistortionParams(**self.data["distortion"])

    def fusion_config(self) -> FusionConfig:
        return FusionConfig(**self.data["fusion"])

    def train_config(self) -> TrainConfig:
        t = self.data["train"]
        lam = t["lambda"]
        if t["mode"] == "face":
            margin = MarginConfig.face(lam=0.0 if lam is None else lam)
        else:
            margin = MarginConfig.reid(lam=0.4 if lam is None else lam)
        return TrainConfig(
            mode=t["mode"], epochs=t["epochs"], P=t["P"], K=t["K"],
            embed_dim=t["embed_dim"], hidden=tuple(t["hidden"]),
            image_size=self.data["dataset"]["size"], seed=self.seed,
            lr=t["lr"], ema_beta=t["ema_beta"], ema_enabled=t["ema_enabled"],
            initial_weights=tuple(t["initial_weights"]), margin=margin,
            distortion=self.distortion_params(),
            batches_per_epoch=t["batches_per_epoch"],
            schedule_steps=t["schedule_steps"])

    def materialize(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.data, fh, indent=1, sort_keys=True)
            fh.write("\n")
