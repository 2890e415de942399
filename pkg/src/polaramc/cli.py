"""Command-line entry point: ``polaramc <command> [options]``.

Every command writes its data to files under ``--out`` and prints one
summary line.  Failures print a one-line diagnostic to stderr and exit 1;
usage errors exit 2.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import bench
from .cnn import (CHANNEL_MODES, FEATURE_KINDS, evaluate, frame_image, load_dataset, make_dataset,
                  save_dataset, train_amc, write_confusion_csv, write_eval_csv)
from .features import GridImage, write_image_csv, write_image_pgm
from .modem import ChannelParams, ModulationType, apply_channel, generate_frame, read_iq, write_iq
from .nn import load_network, save_network


def _snr(text: str) -> float:
    return math.inf if text.lower() in ("inf", "none", "noiseless") else float(text)


def _load_config(args) -> bench.ExperimentConfig:
    cfg = bench.ExperimentConfig.from_json(args.config) if args.config else bench.ExperimentConfig()
    if getattr(args, "desk", False):
        cfg = cfg.desk_scale()
    overrides = {}
    for name in ("snr_db", "trials", "channel", "feature", "t", "classifiers", "n", "deltas",
                 "train_frames_per_class", "test_frames_per_class"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _out(args, default: str) -> Path:
    return Path(args.out or default)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> str:
    mod = ModulationType.parse(args.mod)
    seed = args.seed or 0
    frame = generate_frame(mod, args.n, seed)
    if args.channel == "awgn":
        ch = ChannelParams(snr_db=args.snr)
    else:
        from .cnn import channel_for
        ch = channel_for(args.channel, args.snr, seed + 1, args.delta)
    rx = apply_channel(frame, ch, seed + 2)
    out = _out(args, f"{mod.value}.iqb")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_iq(out, rx)
    return f"wrote {len(rx)} {mod.value} samples to {out}"


def cmd_dataset(args) -> str:
    cfg = _load_config(args)
    snr = cfg.snr_db[0] if args.snr_db is None else args.snr_db[0]
    ds = make_dataset(cfg.pool, args.frames_per_class, snr, cfg.channel, cfg.feature, cfg.seed, cfg.n,
                      cfg.grid_config(), cfg.deltas[0] if cfg.deltas else 0.0)
    out = _out(args, "dataset.npz")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(out, ds)
    return f"wrote {len(ds)} {ds.feature} images to {out}"


def cmd_train(args) -> str:
    cfg = _load_config(args)
    out = _out(args, f"{args.model}_model")
    if args.model == "ce":
        snr = cfg.snr_db[0] if args.snr_db is None else args.snr_db[0]
        ce = bench.train_fading_estimator(bench.canonical_pool(cfg.pool), args.frames_per_class, snr,
                                          cfg.seed, cfg.n)
        save_network(out, ce.network, {"kind": "ce", "snr_db": snr, "seed": cfg.seed})
        return f"trained estimator ({ce.param_count()} parameters) -> {out}"
    if not args.dataset:
        raise ValueError("train --model cnn needs --dataset <path.npz>")
    ds = load_dataset(args.dataset)
    ccfg = dataclasses.replace(cfg.cnn_config(), feature=ds.feature, p_r=ds.x.shape[2], p_theta=ds.x.shape[3])
    tcfg = dataclasses.replace(cfg.train_config(), rng_seed=cfg.seed)
    net, hist, overhead = train_amc(ccfg, ds, tcfg, seed=cfg.seed)
    save_network(out, net, {"kind": "cnn", "feature": ds.feature, "t": ccfg.t, "epochs": hist.epochs_run,
                            "best_val_loss": hist.best_loss, "overhead": overhead.product})
    return f"trained CNN ({overhead.model_size} parameters, {overhead.epochs} epochs) -> {out}"


def cmd_evaluate(args) -> str:
    cfg = _load_config(args)
    if not args.model or not args.dataset:
        raise ValueError("evaluate needs --model <checkpoint> and --dataset <path.npz>")
    if not Path(args.model).with_suffix(".json").exists():
        raise FileNotFoundError(f"missing checkpoint: {args.model}")
    net, meta = load_network(args.model)
    ds = load_dataset(args.dataset)
    res = evaluate(net, ds)
    out = _out(args, "evaluation")
    out.mkdir(parents=True, exist_ok=True)
    write_eval_csv(out / "eval.csv", [{"snr_db": ds.meta.get("snr_db", ""), "feature_kind": ds.feature,
                                       "t": meta.get("t", ""), "seed": cfg.seed, "accuracy": f"{res.accuracy:.6f}",
                                       "n": res.n}])
    write_confusion_csv(out / "confusion.csv", res.confusion, ds.pool)
    return f"accuracy {res.accuracy:.4f} on {res.n} images -> {out}"


def cmd_sweep(args) -> str:
    cfg = _load_config(args)
    out = _out(args, cfg.out_dir)
    rows = bench.run_sweep(cfg, out)
    return f"{len(rows)} sweep cells -> {out / 'sweep.csv'}"


def cmd_retrain(args) -> str:
    cfg = _load_config(args)
    out = _out(args, cfg.out_dir)
    res = bench.run_retrain_experiment(cfg, out)
    return f"{len(res.rows)} retraining rows over {len(res.channels)} channels -> {out / 'retrain.csv'}"


def cmd_complexity(args) -> str:
    cfg = _load_config(args)
    out = _out(args, cfg.out_dir)
    reports, times = bench.report_complexity(cfg, out, measure=not args.no_timing,
                                             include_hlrt=not args.skip_hlrt_timing)
    return f"{len(reports)} classifiers -> {out / 'complexity.csv'}"


def cmd_export_image(args) -> str:
    frame = read_iq(args.input)
    pixels = frame_image(frame, args.feature)
    out = _out(args, Path(args.input).with_suffix(".pgm").name)
    out.parent.mkdir(parents=True, exist_ok=True)
    img = GridImage(pixels, None, args.feature)
    if out.suffix.lower() == ".csv":
        write_image_csv(out, img)
    else:
        write_image_pgm(out, img)
    return f"wrote {pixels.shape[0]}x{pixels.shape[1]} {args.feature} image to {out}"


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int, help="base random seed")
    p.add_argument("--out", help="output file or directory")


def _experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--snr", dest="snr_db", type=_snr, nargs="+", help="SNR point(s) in dB")
    p.add_argument("--channel", choices=CHANNEL_MODES)
    p.add_argument("--feature", choices=FEATURE_KINDS)
    p.add_argument("--t", type=int, help="CNN size index")
    p.add_argument("--n", type=int, help="symbols per frame")
    p.add_argument("--deltas", type=float, nargs="+", help="channel variation degrees")
    p.add_argument("--desk", action="store_true", help="desk-scale counts (200 trials, 2000 train frames)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polaramc", description="Modulation classification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write one received frame as an IQ file")
    _common(p)
    p.add_argument("--mod", required=True, help="qpsk, 8psk, 16qam or 64qam")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--snr", type=_snr, default=math.inf)
    p.add_argument("--channel", choices=CHANNEL_MODES, default="awgn")
    p.add_argument("--delta", type=float, default=0.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("dataset", help="build a labeled image dataset (.npz)")
    _common(p)
    _experiment_flags(p)
    p.add_argument("--frames-per-class", type=int, default=100)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="train a CNN on a dataset or a channel estimator")
    _common(p)
    _experiment_flags(p)
    p.add_argument("--model", choices=("cnn", "ce"), default="cnn")
    p.add_argument("--dataset", help="dataset .npz for CNN training")
    p.add_argument("--frames-per-class", type=int, default=100, help="estimator training frames per class")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="accuracy and confusion matrix of a checkpoint on a dataset")
    _common(p)
    p.add_argument("--model", required=True, help="checkpoint path (stem, .json or .bin)")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="Monte Carlo accuracy sweep over SNR")
    _common(p)
    _experiment_flags(p)
    p.add_argument("--trials", type=int, help="test frames per class per SNR point")
    p.add_argument("--classifiers", nargs="+", choices=bench.SWEEP_CLASSIFIERS)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("retrain", help="channel drift and online retraining experiment")
    _common(p)
    _experiment_flags(p)
    p.set_defaults(func=cmd_retrain)

    p = sub.add_parser("complexity", help="operator counts and measured inference times")
    _common(p)
    p.add_argument("--n", type=int, help="symbols per frame")
    p.add_argument("--no-timing", action="store_true", help="skip the wall-clock measurements")
    p.add_argument("--skip-hlrt-timing", action="store_true", help="do not time the HLRT classifier")
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("export-image", help="render an IQ file as a grid image (PGM or CSV)")
    _common(p)
    p.add_argument("--input", required=True, help="IQ interchange file")
    p.add_argument("--feature", choices=FEATURE_KINDS, default="accumulated_polar")
    p.set_defaults(func=cmd_export_image)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        print(args.func(args))
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"polaramc {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
