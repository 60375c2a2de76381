"""Command-line surface: gen-data, distort, train, eval, schedule-plot.

Exit codes: 0 success, 2 configuration/usage error, 3 I/O error. Every
command is deterministic given its config and seed. --threads (or the
DALI_THREADS env var) is accepted as a parallelism hint and must not
change results; the current implementation runs single-threaded.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import pnm
from .config import ConfigError, RunConfig
from .data import generate_dataset, load_dataset, save_dataset
from .distortion import distort
from .io_formats import FormatError, load_checkpoint, save_checkpoint
from .model import train_clean, train_distortion_adaptive
from .numerics import SeedStream
from .pipeline import evaluate
from .report import (metrics_figure, schedule_figure, training_figure,
                     write_csv)
from .schedule import WeightSchedule, schedule_table

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load_config(path) -> RunConfig:
    if path is None:
        raise CliError("--config is required", EXIT_CONFIG)
    if not os.path.exists(path):
        raise CliError(f"config file not found: {path}", EXIT_CONFIG)
    try:
        return RunConfig.from_file(path)
    except ConfigError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from exc


def cmd_gen_data(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    ds = generate_dataset(rng=SeedStream(seed), **cfg.dataset_kwargs())
    out = args.out or "dataset"
    try:
        manifest = save_dataset(ds, out)
        cfg.materialize(os.path.join(out, "run_config.json"))
    except OSError as exc:
        raise CliError(f"cannot write dataset: {exc}", EXIT_IO) from exc
    print(f"wrote {len(ds.samples)} samples; manifest at {manifest}")
    return EXIT_OK


def cmd_distort(args) -> int:
    if not (0 <= args.level <= 5):
        raise CliError(f"level must be in 0..5, got {args.level}", EXIT_CONFIG)
    cfg = RunConfig({}) if args.config is None else _load_config(args.config)
    params = cfg.distortion_params()
    if not os.path.isdir(args.in_dir):
        raise CliError(f"input directory not found: {args.in_dir}", EXIT_IO)
    rng = SeedStream(args.seed if args.seed is not None else cfg.seed)
    names = sorted(
        os.path.join(dirpath, f)
        for dirpath, _, files in os.walk(args.in_dir)
        for f in files if f.endswith((".pgm", ".ppm")))
    try:
        for i, src in enumerate(names):
            img = pnm.load_pnm(src)
            out_img = distort(img, args.level, params, rng.child(i))
            rel = os.path.relpath(src, args.in_dir)
            dst = os.path.join(args.out, rel)
            os.makedirs(os.path.dirname(dst), exist_ok=True)
            pnm.save_pnm(dst, out_img)
    except (OSError, pnm.PnmParseError) as exc:
        raise CliError(f"distort failed on {src}: {exc}", EXIT_IO) from exc
    print(f"distorted {len(names)} images at level {args.level}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    if args.mode not in ("clean", "adaptive"):
        raise CliError("--mode must be clean or adaptive", EXIT_CONFIG)
    try:
        ds = load_dataset(args.dataset)
    except (OSError, pnm.PnmParseError) as exc:
        raise CliError(f"cannot load dataset: {exc}", EXIT_IO) from exc
    tcfg = cfg.train_config()
    if args.seed is not None:
        tcfg = dataclasses.replace(tcfg, seed=args.seed)
    resume = opt_state = None
    if args.resume:
        try:
            resume = load_checkpoint(args.resume, tcfg)
            opt_state = resume.opt
        except (OSError, FormatError) as exc:
            raise CliError(f"cannot load checkpoint: {exc}", EXIT_IO) from exc
    train_fn = train_clean if args.mode == "clean" else train_distortion_adaptive
    ckpt = train_fn(tcfg, ds, resume=resume, opt_state=opt_state)
    out = args.out or f"checkpoint_{args.mode}.dck"
    try:
        save_checkpoint(out, ckpt, cfg.config_hash())
        log_path = os.path.splitext(out)[0] + "_log.csv"
        header = list(ckpt.epoch_log[0].keys()) if ckpt.epoch_log else []
        write_csv(log_path, header,
                  [[row[k] for k in header] for row in ckpt.epoch_log])
        if ckpt.epoch_log:
            training_figure(log_path, ckpt.epoch_log)
    except OSError as exc:
        raise CliError(f"cannot write checkpoint: {exc}", EXIT_IO) from exc
    print(f"trained {args.mode} backbone for {ckpt.epoch} epochs "
          f"({ckpt.step} steps); checkpoint at {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    if args.fuse and not args.checkpoint_b:
        raise CliError("--fuse requires --checkpoint-b", EXIT_CONFIG)
    tcfg = cfg.train_config()
    try:
        ds = load_dataset(args.dataset)
        ckpt_a = load_checkpoint(args.checkpoint, tcfg)
        ckpt_b = (load_checkpoint(args.checkpoint_b, tcfg)
                  if args.checkpoint_b else None)
    except (OSError, FormatError, pnm.PnmParseError) as exc:
        raise CliError(f"cannot load inputs: {exc}", EXIT_IO) from exc
    metrics = evaluate(ckpt_a, ds, args.protocol,
                       query_level=args.query_level, ckpt_b=ckpt_b,
                       fuse=args.fuse, fusion=cfg.fusion_config(),
                       dparams=cfg.distortion_params())
    out = args.out or f"metrics_{args.protocol}.csv"
    names = sorted(metrics)
    try:
        write_csv(out, ["metric", "value"],
                  [[n, f"{metrics[n]:.6f}"] for n in names])
        metrics_figure(out, names, [metrics[n] for n in names])
    except OSError as exc:
        raise CliError(f"cannot write report: {exc}", EXIT_IO) from exc
    for n in names:
        print(f"{n}: {metrics[n]:.4f}")
    return EXIT_OK


def cmd_schedule_plot(args) -> int:
    cfg = _load_config(args.config)
    tcfg = cfg.train_config()
    total = tcfg.batches_per_epoch or 100
    sched = WeightSchedule(tcfg.epochs * total, tcfg.initial_weights)
    rows = schedule_table(sched)
    out = args.out or "schedule.csv"
    try:
        write_csv(out, ["step", "level", "weight"], rows)
        schedule_figure(out, rows)
    except OSError as exc:
        raise CliError(f"cannot write schedule: {exc}", EXIT_IO) from exc
    print(f"wrote schedule curves to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="daliid",
        description="Distortion-adaptive embedding training and evaluation")
    parser.add_argument("--threads", type=int,
                        default=int(os.environ.get("DALI_THREADS", "1")),
                        help="parallelism hint; never changes results")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic dataset")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("distort", help="distort a directory of images")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(fn=cmd_distort)

    p = sub.add_parser("train", help="train a backbone")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", required=True, choices=["clean", "adaptive"])
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--resume")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--checkpoint-b")
    p.add_argument("--dataset", required=True)
    p.add_argument("--protocol", required=True,
                   choices=["cmc", "map", "verify", "tarfar", "tpirfpir"])
    p.add_argument("--fuse", action="store_true")
    p.add_argument("--query-level", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("schedule-plot", help="emit weight-curve CSV + figure")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_schedule_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
