"""Sequence loading and one-pass evaluation metrics.

A sequence directory holds numbered frames (PNG or JPEG, sorted
lexicographically, possibly under an img/ subdirectory) and a
ground-truth file with one x,y,w,h line per frame. Coordinates on disk
are 1-based; everything in memory is 0-based, and writers convert back
so written results compare like-for-like with ground truth.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .rect import Rect, center_distance, iou

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")
GT_NAMES = ("groundtruth_rect.txt", "groundtruth.txt", "gt.txt")


def parse_rect_line(line: str) -> Rect:
    """One 'x,y,w,h' line (comma, tab, or whitespace separated), 1-based."""
    parts = [p for p in re.split(r"[,\t ]+", line.strip()) if p]
    if len(parts) != 4:
        raise ValueError(f"expected 4 fields, got {len(parts)}: {line!r}")
    x, y, w, h = (float(p) for p in parts)
    return Rect(x - 1.0, y - 1.0, w, h)


def load_rect_file(path) -> list[Rect]:
    rects = []
    for i, line in enumerate(Path(path).read_text().splitlines()):
        if not line.strip():
            continue
        try:
            rects.append(parse_rect_line(line))
        except ValueError as e:
            raise ValueError(f"{path}:{i + 1}: {e}") from e
    if not rects:
        raise ValueError(f"no rects in {path}")
    return rects


def write_rect_file(path, rects: list[Rect]) -> None:
    """Inverse of load_rect_file (same 1-based disk convention)."""
    lines = [f"{r.x + 1.0!r},{r.y + 1.0!r},{r.w!r},{r.h!r}" for r in rects]
    Path(path).write_text("\n".join(lines) + "\n")


def load_image(path) -> np.ndarray:
    """Decode to float64 RGB (3, H, W) in 0..255; grayscale is promoted."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr.transpose(2, 0, 1)


def find_frame_files(seq_dir) -> list[Path]:
    seq_dir = Path(seq_dir)
    for sub in (seq_dir / "img", seq_dir):
        files = sorted(p for p in sub.iterdir()
                       if p.suffix.lower() in IMAGE_EXTENSIONS) \
            if sub.is_dir() else []
        if files:
            return files
    raise FileNotFoundError(f"no frames under {seq_dir}")


def find_gt_file(seq_dir) -> Path:
    seq_dir = Path(seq_dir)
    for name in GT_NAMES:
        p = seq_dir / name
        if p.is_file():
            return p
    raise FileNotFoundError(
        f"no ground-truth file in {seq_dir} (tried {', '.join(GT_NAMES)})")


class Sequence:
    """Lazy frame access plus eagerly parsed ground truth."""

    def __init__(self, frame_files: list[Path], rects: list[Rect]):
        if len(frame_files) != len(rects):
            raise ValueError(
                f"{len(frame_files)} frames but {len(rects)} ground-truth rects")
        self.frame_files = frame_files
        self.rects = rects

    def __len__(self) -> int:
        return len(self.frame_files)

    def frame(self, i: int) -> np.ndarray:
        return load_image(self.frame_files[i])

    def frames(self):
        for p in self.frame_files:
            yield load_image(p)


def load_sequence(seq_dir) -> Sequence:
    files = find_frame_files(seq_dir)
    rects = load_rect_file(find_gt_file(seq_dir))
    return Sequence(files, rects)


# ---------------------------------------------------------------------------
# metrics

def precision_curve(pred: list[Rect], gt: list[Rect]) -> np.ndarray:
    """Fraction of frames with center error <= t for t = 0..50 px."""
    if len(pred) != len(gt):
        raise ValueError(f"{len(pred)} predictions vs {len(gt)} ground truths")
    if not pred:
        raise ValueError("empty sequence")
    errs = np.array([center_distance(p, g) for p, g in zip(pred, gt)])
    thresholds = np.arange(0, 51, dtype=np.float64)
    return (errs[None, :] <= thresholds[:, None]).mean(axis=1)


def success_curve(pred: list[Rect], gt: list[Rect]) -> np.ndarray:
    """Fraction of frames with IoU >= t for t = 0, 0.05, ..., 1."""
    if len(pred) != len(gt):
        raise ValueError(f"{len(pred)} predictions vs {len(gt)} ground truths")
    if not pred:
        raise ValueError("empty sequence")
    ious = np.array([iou(p, g) for p, g in zip(pred, gt)])
    thresholds = np.arange(21, dtype=np.float64) / 20.0
    return (ious[None, :] >= thresholds[:, None]).mean(axis=1)


def auc(success: np.ndarray) -> float:
    """Mean of the success samples (the usual area-under-curve summary)."""
    return float(np.mean(success))


def precision_at(precision: np.ndarray, threshold: int = 20) -> float:
    return float(precision[threshold])
