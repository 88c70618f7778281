"""Input validation helpers shared across the toolkit."""

from __future__ import annotations

import numpy as np


def as_float_array(x, dtype=np.float64) -> np.ndarray:
    arr = np.asarray(x, dtype=dtype)
    if not np.all(np.isfinite(arr)):
        raise ValueError("array contains non-finite values")
    return arr


def check_nchw(x, name="tensor") -> np.ndarray:
    """Validate a dense N x C x H x W activation tensor."""
    arr = np.asarray(x)
    if arr.ndim != 4:
        raise ValueError(f"{name} must be 4-d (N, C, H, W), got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"{name} has an empty dimension: {arr.shape}")
    return arr


def check_image(img) -> np.ndarray:
    """Coerce an image to float64 C x H x W with 3 channels.

    Accepts H x W (grayscale, promoted), H x W x 3, or 3 x H x W.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = np.stack([arr, arr, arr])
    elif arr.ndim == 3 and arr.shape[2] == 3 and arr.shape[0] != 3:
        arr = arr.transpose(2, 0, 1)
    elif arr.ndim == 3 and arr.shape[0] == 3:
        pass
    else:
        raise ValueError(f"cannot interpret image of shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    return arr


def check_rect(rect, name="rect"):
    x, y, w, h = (float(v) for v in rect)
    if not all(np.isfinite([x, y, w, h])):
        raise ValueError(f"{name} has non-finite entries: {rect}")
    if w <= 0 or h <= 0:
        raise ValueError(f"{name} must have positive width/height, got {rect}")
    return x, y, w, h


def check_random_state(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)
