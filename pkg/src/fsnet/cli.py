"""Command-line entry points.

Subcommands:
    train            offline multi-domain training from a manifest of videos
    select-features  fit the MI channel selector on a frame, emit a mask
    track            run the online tracker over a sequence directory
    eval             precision/success curves for results vs ground truth
    benchmark-roi    timing + sub-pixel continuity sweep of both extractors
    gradcheck        finite-difference audit of the full chain

One optional JSON config file feeds all of them; it may hold "network",
"trainer", and "tracker" sections whose keys override the corresponding
dataclass defaults.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from .evaluation import (auc, find_gt_file, load_image, load_rect_file,
                         load_sequence, precision_at, precision_curve,
                         success_curve, write_rect_file)
from .gradcheck import full_chain_gradcheck
from .network import FeatureNetwork, NetworkConfig, NetworkParams
from .roi import roi_align_forward, roi_pool_forward
from .selection import ChannelSelector
from .tracking import TrackerConfig, track_sequence
from .training import MultiDomainTrainer, VideoDomain
from .weights_io import load_weights, save_weights


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    cfg = json.loads(Path(path).read_text())
    if not isinstance(cfg, dict):
        raise ValueError("config file must hold a JSON object")
    return cfg


def _network_config(cfg: dict) -> NetworkConfig:
    return NetworkConfig.from_dict(cfg.get("network", {})) \
        if cfg.get("network") else NetworkConfig()


def _tracker_config(cfg: dict) -> TrackerConfig:
    return dataclasses.replace(TrackerConfig(), **cfg.get("tracker", {}))


def _load_params(path, net_config: NetworkConfig) -> NetworkParams:
    tensors = load_weights(path)
    params = NetworkParams(tensors)
    branches = params.n_branches
    if branches < 1:
        raise ValueError(f"{path} holds no head branch tensors")
    expect = FeatureNetwork(net_config).init_params(
        np.random.default_rng(0), branches=branches)
    for name, arr in expect.tensors.items():
        if name not in tensors:
            raise ValueError(f"{path} is missing tensor {name}")
        if tensors[name].shape != arr.shape:
            raise ValueError(
                f"{path}: tensor {name} has shape {tensors[name].shape}, "
                f"config implies {arr.shape}")
    return params


def _fmt(v) -> str:
    if v is None:
        return ""
    f = float(v)
    if np.isnan(f):
        return ""
    return repr(f)


# ---------------------------------------------------------------------------
# subcommands

def cmd_train(args) -> int:
    cfg = _load_config_file(args.config)
    manifest = json.loads(Path(args.manifest).read_text())
    dirs = manifest["videos"] if isinstance(manifest, dict) else manifest
    if not dirs:
        print("train: empty manifest", file=sys.stderr)
        return 1
    videos = []
    for d in dirs:
        seq = load_sequence(d)
        videos.append(VideoDomain(frames=list(seq.frames()), rects=seq.rects))
    trainer_kw = dict(cfg.get("trainer", {}))
    if args.iters is not None:
        trainer_kw["iterations"] = args.iters
    if args.lr is not None:
        trainer_kw["lr"] = args.lr
    trainer = MultiDomainTrainer(network_config=_network_config(cfg),
                                 random_state=args.seed, **trainer_kw)
    trainer.fit(videos)
    save_weights(args.out, trainer.params_.tensors)
    print(json.dumps({
        "domains": trainer.n_domains_,
        "iterations": len(trainer.loss_history_),
        "first_loss": trainer.loss_history_[0],
        "final_loss": trainer.loss_history_[-1],
        "weights": str(args.out),
    }))
    return 0


def cmd_select_features(args) -> int:
    cfg = _load_config_file(args.config)
    net_cfg = _network_config(cfg)
    params = _load_params(args.weights, net_cfg)
    image = load_image(args.image)
    net = FeatureNetwork(net_cfg)
    fm, _ = net.forward_conv(params, image)
    selector = ChannelSelector(keep_count=args.keep, bins=args.bins)
    selector.fit(fm[0])
    mask = {
        "n_channels": int(selector.n_channels_),
        "keep": [int(c) for c in selector.keep_],
        "provenance": list(selector.provenance_),
    }
    Path(args.out).write_text(json.dumps(mask, indent=1) + "\n")
    if args.pruned_weights:
        pruned, _ = selector.prune(params, net_cfg)
        save_weights(args.pruned_weights, pruned.tensors)
    print(json.dumps({
        "kept": len(mask["keep"]),
        "zero_maps": mask["provenance"].count("zero_map"),
        "mask": str(args.out),
    }))
    return 0


def cmd_track(args) -> int:
    cfg = _load_config_file(args.config)
    net_cfg = _network_config(cfg)
    params = _load_params(args.weights, net_cfg)
    keep = None
    if args.mask:
        mask = json.loads(Path(args.mask).read_text())
        keep = np.asarray(mask["keep"], dtype=np.intp)
    seq = load_sequence(args.sequence)
    frames = list(seq.frames())
    rects, log = track_sequence(params, frames, seq.rects[0],
                                net_config=net_cfg, keep=keep,
                                config=_tracker_config(cfg), seed=args.seed)
    write_rect_file(args.out, rects)
    log_path = args.log or (Path(args.out).parent / "finetune_log.csv")
    lines = ["frame,best_score,loss,iterations"]
    for row in log:
        lines.append(f"{row.frame},{_fmt(row.best_score)},{_fmt(row.loss)},"
                     f"{row.iterations}")
    Path(log_path).write_text("\n".join(lines) + "\n")
    updates = sum(1 for row in log if row.frame > 0 and row.iterations > 0)
    print(json.dumps({
        "frames": len(rects),
        "updates": updates,
        "update_iterations": sum(r.iterations for r in log if r.frame > 0),
        "results": str(args.out),
        "log": str(log_path),
    }))
    return 0


def cmd_eval(args) -> int:
    pred = load_rect_file(args.results)
    gt_path = Path(args.gt)
    if gt_path.is_dir():
        gt_path = find_gt_file(gt_path)
    gt = load_rect_file(gt_path)
    if len(pred) != len(gt):
        print(f"eval: {len(pred)} result rows vs {len(gt)} ground-truth rows",
              file=sys.stderr)
        return 1
    prec = precision_curve(pred, gt)
    succ = success_curve(pred, gt)
    if args.out:
        lines = ["curve,threshold,value"]
        for t, v in zip(np.arange(0, 51), prec):
            lines.append(f"precision,{t},{v!r}")
        for t, v in zip(np.arange(21) / 20.0, succ):
            lines.append(f"success,{t!r},{v!r}")
        Path(args.out).write_text("\n".join(lines) + "\n")
    print(json.dumps({
        "frames": len(pred),
        "auc": auc(succ),
        "precision_at_20": precision_at(prec, 20),
    }))
    return 0


def cmd_benchmark_roi(args) -> int:
    rng = np.random.default_rng(args.seed)
    fm = rng.normal(size=(args.channels, args.size, args.size))
    span = args.size * 0.6
    rois = np.column_stack([
        rng.uniform(0, args.size - span, size=(args.rois, 2)),
        np.full((args.rois, 2), span),
    ])

    def clock(fn):
        t0 = time.perf_counter()
        for _ in range(args.reps):
            fn()
        return (time.perf_counter() - t0) / args.reps

    align_s = clock(lambda: roi_align_forward(fm, rois))
    pool_s = clock(lambda: roi_pool_forward(fm, rois))

    sweep_fm = rng.normal(size=(1, 16, 16))
    base = np.array([4.0, 4.0, 7.0, 7.0])
    offsets = np.arange(0.0, 1.0, 0.05)
    rows = ["offset,align_delta,pool_delta"]
    prev_a = prev_p = None
    align_changes = pool_changes = 0
    for off in offsets:
        r = base + np.array([off, 0.0, 0.0, 0.0])
        a = roi_align_forward(sweep_fm, [r])[0]
        p = roi_pool_forward(sweep_fm, [r])[0]
        if prev_a is not None:
            da = float(np.abs(a - prev_a).max())
            dp = float(np.abs(p - prev_p).max())
            align_changes += da > 0
            pool_changes += dp > 0
            rows.append(f"{off!r},{da!r},{dp!r}")
        prev_a, prev_p = a, p
    if args.out:
        Path(args.out).write_text("\n".join(rows) + "\n")
    print(json.dumps({
        "align_seconds_per_call": align_s,
        "pool_seconds_per_call": pool_s,
        "sweep_steps": len(offsets) - 1,
        "align_changes": align_changes,
        "pool_changes": pool_changes,
    }))
    return 0


def cmd_gradcheck(args) -> int:
    rep = full_chain_gradcheck(seed=args.seed)
    print(json.dumps({
        "max_rel_err": rep.max_rel_err,
        "worst_param": rep.worst_param,
        "n_params": rep.n_params,
        "seconds": rep.seconds,
        "passed": rep.passed,
    }))
    return 0 if rep.passed else 1


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fsnet",
                                description="tracking-by-detection toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="offline multi-domain training")
    t.add_argument("--manifest", required=True,
                   help="JSON list (or {'videos': [...]}) of sequence dirs")
    t.add_argument("--out", required=True, help="output weights file")
    t.add_argument("--config", help="JSON config file")
    t.add_argument("--iters", type=int, help="override iteration count")
    t.add_argument("--lr", type=float, help="override learning rate")
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("select-features", help="MI channel selection")
    s.add_argument("--weights", required=True)
    s.add_argument("--image", required=True, help="frame to select on")
    s.add_argument("--out", required=True, help="output mask JSON")
    s.add_argument("--keep", type=int, default=256)
    s.add_argument("--bins", type=int, default=20)
    s.add_argument("--config", help="JSON config file")
    s.add_argument("--pruned-weights", help="also write pruned weights here")
    s.set_defaults(func=cmd_select_features)

    k = sub.add_parser("track", help="run the online tracker")
    k.add_argument("--weights", required=True)
    k.add_argument("--sequence", required=True, help="sequence directory")
    k.add_argument("--out", required=True, help="output results file")
    k.add_argument("--mask", help="channel mask JSON from select-features")
    k.add_argument("--log", help="fine-tune log CSV path")
    k.add_argument("--config", help="JSON config file")
    k.add_argument("--seed", type=int, default=0)
    k.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="precision/success metrics")
    e.add_argument("--results", required=True)
    e.add_argument("--gt", required=True,
                   help="ground-truth file or sequence directory")
    e.add_argument("--out", help="curves CSV path")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("benchmark-roi", help="extractor timing + continuity")
    b.add_argument("--size", type=int, default=16)
    b.add_argument("--channels", type=int, default=256)
    b.add_argument("--rois", type=int, default=64)
    b.add_argument("--reps", type=int, default=20)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", help="sweep CSV path")
    b.set_defaults(func=cmd_benchmark_roi)

    g = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError, KeyError) as e:
        print(f"fsnet {args.command}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
