"""Command-line front door: train, eval, sweep, baseline, gradcheck."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

__all__ = ["main", "build_parser"]

GRADCHECK_THRESHOLD = 1e-5


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mimojscc",
        description="Link-level MIMO image transmission experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a codec and write checkpoint + history")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--seed", type=int, default=None, help="override [train] seed")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint at one operating point")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--snr", type=float, required=True)
    p_eval.add_argument("--sigma-e2", type=float, default=0.0)
    p_eval.add_argument("--m", type=int, default=None)
    p_eval.add_argument("--draws", type=int, default=None)
    p_eval.add_argument("--seed", type=int, default=1)

    p_sweep = sub.add_parser("sweep", help="evaluate a checkpoint over the configured grid")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--ckpt", required=True)
    p_sweep.add_argument("--out", default=None)

    p_base = sub.add_parser("baseline", help="capacity-bound CSV for both CSI modes")
    p_base.add_argument("--config", required=True)
    p_base.add_argument("--out", default=None)

    p_grad = sub.add_parser("gradcheck", help="finite-difference check of the full pipeline")
    p_grad.add_argument("--profile", default="tiny", choices=["tiny"])
    p_grad.add_argument("--threshold", type=float, default=GRADCHECK_THRESHOLD)
    return parser


def _cmd_train(args) -> int:
    from .config import load_config
    from .data import split_indices
    from .linalg import RngStream
    from .optim import save_checkpoint
    from .pipeline import train

    cfg = load_config(args.config)
    model_cfg = cfg.model_config()
    settings = cfg.train_settings()
    seed = args.seed if args.seed is not None else cfg["train"]["seed"]

    dataset = cfg.load_dataset()
    train_idx, val_idx = split_indices(len(dataset))
    train_images = [dataset[i] for i in train_idx] or dataset
    val_images = [dataset[i] for i in val_idx]

    params, history = train(model_cfg, settings, train_images, val_images, RngStream(seed, 0))

    out_dir = cfg["output"]["dir"]
    os.makedirs(out_dir, exist_ok=True)
    ckpt = os.path.join(out_dir, "model.ckpt")
    save_checkpoint(params, ckpt)
    hist_path = os.path.join(out_dir, "history.csv")
    with open(hist_path, "w") as fh:
        fh.write("step,loss,val_psnr\n")
        for row in history:
            fh.write(f"{row['step']},{row['loss']!r},{row['val_psnr']!r}\n")
    best = max((row["val_psnr"] for row in history), default=float("nan"))
    print(f"checkpoint={ckpt}")
    print(f"history={hist_path}")
    print(f"best_val_psnr={best!r}")
    return 0


def _cmd_eval(args) -> int:
    from .config import load_config
    from .linalg import RngStream
    from .optim import load_checkpoint
    from .pipeline import evaluate_model
    from .sweep import _eval_images

    cfg = load_config(args.config)
    model_cfg = cfg.model_config()
    if not os.path.isfile(args.ckpt):
        print(f"error: checkpoint not found: {args.ckpt}", file=sys.stderr)
        return 2
    params = load_checkpoint(args.ckpt)
    images = _eval_images(cfg)
    draws = args.draws if args.draws is not None else cfg["eval"]["n_channel_draws"]
    mean, std = evaluate_model(
        params,
        model_cfg,
        images,
        args.snr,
        draws,
        RngStream(args.seed, 0),
        sigma_e2=args.sigma_e2,
        m_use=args.m,
        peak_mode=cfg["eval"]["psnr_peak"],
    )
    print(f"psnr_mean={mean!r}")
    print(f"psnr_std={std!r}")
    return 0


def _cmd_sweep(args) -> int:
    from .config import load_config
    from .sweep import run_sweep

    cfg = load_config(args.config)
    out = args.out or os.path.join(cfg["output"]["dir"], "sweep.csv")
    records = run_sweep(cfg, args.ckpt, out_csv=out)
    print(f"rows={len(records)}")
    print(f"csv={out}")
    return 0


def _cmd_baseline(args) -> int:
    from .config import load_config
    from .sweep import run_baseline

    cfg = load_config(args.config)
    out = args.out or os.path.join(cfg["output"]["dir"], "baseline.csv")
    records = run_baseline(cfg, out_csv=out)
    print(f"rows={len(records)}")
    print(f"csv={out}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .pipeline import gradcheck_suite

    results = gradcheck_suite()
    ok = True
    for mode, err in sorted(results.items()):
        status = "pass" if err < args.threshold else "FAIL"
        ok = ok and err < args.threshold
        print(f"{mode}: max_rel_err={err:.3e} [{status}]")
    return 0 if ok else 1


def main(argv=None) -> int:
    from .model import ConfigError
    from .data import DatasetError

    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "train": _cmd_train,
        "eval": _cmd_eval,
        "sweep": _cmd_sweep,
        "baseline": _cmd_baseline,
        "gradcheck": _cmd_gradcheck,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, DatasetError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
