"""RoI sampling around a target and candidate generation for tracking.

Positives are translation-jittered copies of the target (per-axis
Gaussian, sigma = 0.1 * size) that must overlap it with IoU >= t1 = 0.7.
Negatives are uniform over the frame with scale jitter 1.05**N(0,1) and
must have IoU <= t2 = 0.5. Both are drawn by rejection and clipped to
the image. Tracking candidates use a wider Gaussian (sigma = 0.25 * mean
side) plus scale jitter 1.05**N(0, 0.5).
"""

from __future__ import annotations

import numpy as np

from .rect import Rect, iou

POS_IOU = 0.7
NEG_IOU = 0.5

_MAX_ATTEMPTS = 10_000


def sample_pos_rois(rng: np.random.Generator, target: Rect, n: int,
                    frame_w: int, frame_h: int,
                    min_iou: float = POS_IOU) -> list[Rect]:
    """n rects near the target with IoU >= min_iou, clipped to the frame."""
    out: list[Rect] = []
    attempts = 0
    while len(out) < n:
        if attempts >= _MAX_ATTEMPTS:
            raise RuntimeError(
                f"could not draw {n} positives with IoU >= {min_iou} around "
                f"{target} in a {frame_w}x{frame_h} frame "
                f"({len(out)} found in {attempts} attempts)")
        attempts += 1
        dx = rng.normal(0.0, 0.1 * target.w)
        dy = rng.normal(0.0, 0.1 * target.h)
        cand = Rect(target.x + dx, target.y + dy, target.w, target.h)
        cand = cand.clipped(frame_w, frame_h)
        if iou(cand, target) >= min_iou:
            out.append(cand)
    return out


def sample_neg_rois(rng: np.random.Generator, target: Rect, n: int,
                    frame_w: int, frame_h: int,
                    max_iou: float = NEG_IOU) -> list[Rect]:
    """n rects over the frame with IoU <= max_iou against the target."""
    out: list[Rect] = []
    attempts = 0
    while len(out) < n:
        if attempts >= _MAX_ATTEMPTS:
            raise RuntimeError(
                f"could not draw {n} negatives with IoU <= {max_iou} in a "
                f"{frame_w}x{frame_h} frame around {target}")
        attempts += 1
        scale = 1.05 ** rng.normal(0.0, 1.0)
        w = min(target.w * scale, frame_w)
        h = min(target.h * scale, frame_h)
        x = rng.uniform(0.0, max(frame_w - w, 1e-9))
        y = rng.uniform(0.0, max(frame_h - h, 1e-9))
        cand = Rect(x, y, w, h).clipped(frame_w, frame_h)
        if iou(cand, target) <= max_iou:
            out.append(cand)
    return out


def sample_rois(rng: np.random.Generator, target: Rect, n_pos: int, n_neg: int,
                frame_w: int, frame_h: int):
    """Positive and negative sample rects for one frame."""
    pos = sample_pos_rois(rng, target, n_pos, frame_w, frame_h)
    neg = sample_neg_rois(rng, target, n_neg, frame_w, frame_h)
    return pos, neg


def generate_candidates(rng: np.random.Generator, prev: Rect, n: int,
                        frame_w: int, frame_h: int,
                        trans_sigma: float = 0.25,
                        scale_sigma: float = 0.5) -> list[Rect]:
    """n candidate rects around the previous target location.

    Centers move by a per-axis Gaussian with sigma = trans_sigma * mean
    side length; width and height share one scale factor
    1.05**N(0, scale_sigma). Everything is clipped to the frame.
    """
    if n < 1:
        raise ValueError(f"need at least one candidate, got {n}")
    mean_side = 0.5 * (prev.w + prev.h)
    cx, cy = prev.center
    out: list[Rect] = []
    for _ in range(n):
        ncx = cx + rng.normal(0.0, trans_sigma * mean_side)
        ncy = cy + rng.normal(0.0, trans_sigma * mean_side)
        s = 1.05 ** rng.normal(0.0, scale_sigma)
        w, h = prev.w * s, prev.h * s
        cand = Rect(ncx - w / 2.0, ncy - h / 2.0, w, h)
        out.append(cand.clipped(frame_w, frame_h))
    return out
