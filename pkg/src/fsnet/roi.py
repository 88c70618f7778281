"""RoI feature extraction on conv feature maps.

Two extractors over a C x H x W map, both producing C x bins x bins
outputs per RoI:

* roi_align: continuous. Each output bin is the max over a small grid of
  bilinearly interpolated sample points, so the features move smoothly
  with sub-pixel RoI shifts and gradients flow back to the map.
* roi_pool: quantized baseline. RoI and bin boundaries are rounded to
  integer cells and each bin is the max over its cell, so small shifts
  often change nothing.

RoIs are (x, y, w, h) rects in feature-map coordinates; use
map_roi_to_feature to get there from image coordinates.
"""

from __future__ import annotations

import numpy as np

from .rect import Rect


def map_roi_to_feature(rect: Rect, stride: float) -> Rect:
    """Scale an image-coordinate rect by the cumulative conv stride.

    Fractional results are kept; the sub-pixel part is exactly what
    roi_align consumes.
    """
    if stride <= 0:
        raise ValueError(f"stride must be positive, got {stride}")
    return Rect(rect.x / stride, rect.y / stride, rect.w / stride, rect.h / stride)


def bilinear_sample(featmap: np.ndarray, ys, xs) -> np.ndarray:
    """Interpolate featmap (C,H,W) at continuous points.

    ys/xs are broadcastable arrays of coordinates, clamped to the valid
    range. The value at (y, x) mixes the four integer neighbours with
    weights (1-dy)(1-dx), (1-dy)dx, dy(1-dx), dy dx where dy, dx are the
    fractional parts. Returns (C,) + point shape.
    """
    c, h, w = featmap.shape
    ys = np.clip(np.asarray(ys, dtype=np.float64), 0.0, h - 1.0)
    xs = np.clip(np.asarray(xs, dtype=np.float64), 0.0, w - 1.0)
    shape = ys.shape
    ys, xs = ys.ravel(), xs.ravel()
    yl, xl, ly, lx = _corner_decompose(ys, xs, h, w)
    yh = np.minimum(yl + 1, h - 1)
    xh = np.minimum(xl + 1, w - 1)
    vals = ((1 - ly) * (1 - lx) * featmap[:, yl, xl]
            + (1 - ly) * lx * featmap[:, yl, xh]
            + ly * (1 - lx) * featmap[:, yh, xl]
            + ly * lx * featmap[:, yh, xh])
    return vals.reshape((c,) + shape)


def _corner_decompose(ys, xs, h, w):
    """Split clamped coords into top-left integer corner + fractional part."""
    yl = np.clip(np.floor(ys).astype(np.intp), 0, max(h - 2, 0))
    xl = np.clip(np.floor(xs).astype(np.intp), 0, max(w - 2, 0))
    return yl, xl, ys - yl, xs - xl


def _check_rois(rois: np.ndarray) -> np.ndarray:
    rois = np.asarray(rois, dtype=np.float64)
    if rois.ndim != 2 or rois.shape[1] != 4:
        raise ValueError(f"rois must be (R, 4), got {rois.shape}")
    bad = np.where((rois[:, 2] <= 0) | (rois[:, 3] <= 0))[0]
    if bad.size:
        raise ValueError(f"degenerate RoI at index {int(bad[0])}: {rois[bad[0]].tolist()}")
    return rois


def roi_align_forward(featmap: np.ndarray, rois, out_bins: int = 3,
                      samples: int = 2, placement: str = "center"):
    """Max-pooled bilinear RoI alignment.

    Each RoI is split into out_bins x out_bins equal bins; each bin takes
    samples x samples interpolated points (at quadrant centers by
    default, or anchored at the bin origin with placement="corner") and
    keeps the per-channel max. Sample coordinates are clamped to the map.

    Returns (out, record) with out of shape (R, C, out_bins, out_bins).
    The record holds each winner's continuous coordinates for the
    backward pass.
    """
    c, h, w = featmap.shape
    rois = _check_rois(rois)
    r = rois.shape[0]
    if placement == "center":
        offs = (np.arange(samples) + 0.5) / samples
    elif placement == "corner":
        offs = np.arange(samples) / samples
    else:
        raise ValueError(f"unknown sample placement {placement!r}")
    frac = (np.arange(out_bins)[:, None] + offs[None, :]) / out_bins  # (bins, s)
    ys_1d = rois[:, 1][:, None, None] + rois[:, 3][:, None, None] * frac[None]
    xs_1d = rois[:, 0][:, None, None] + rois[:, 2][:, None, None] * frac[None]
    # cartesian product: (R, by, bx, sy, sx)
    ys = np.broadcast_to(ys_1d[:, :, None, :, None],
                         (r, out_bins, out_bins, samples, samples))
    xs = np.broadcast_to(xs_1d[:, None, :, None, :],
                         (r, out_bins, out_bins, samples, samples))
    nb2, ns2 = out_bins * out_bins, samples * samples
    ys = np.clip(ys.reshape(r, nb2, ns2), 0.0, h - 1.0)
    xs = np.clip(xs.reshape(r, nb2, ns2), 0.0, w - 1.0)
    vals = bilinear_sample(featmap, ys, xs)          # (C, R, nb2, ns2)
    sel = vals.argmax(axis=3)                        # (C, R, nb2)
    out = np.take_along_axis(vals, sel[..., None], axis=3)[..., 0]
    win_y = ys[np.arange(r)[None, :, None], np.arange(nb2)[None, None, :], sel]
    win_x = xs[np.arange(r)[None, :, None], np.arange(nb2)[None, None, :], sel]
    out = out.transpose(1, 0, 2).reshape(r, c, out_bins, out_bins)
    record = AlignRecord(win_y=win_y, win_x=win_x, featmap_shape=featmap.shape,
                         out_bins=out_bins)
    return out, record


class AlignRecord:
    """Winner sample coordinates from roi_align_forward.

    win_y/win_x have shape (C, R, out_bins^2): the continuous coordinates
    of the sample that won each bin's max, per channel.
    """

    def __init__(self, win_y, win_x, featmap_shape, out_bins):
        self.win_y = win_y
        self.win_x = win_x
        self.featmap_shape = featmap_shape
        self.out_bins = out_bins


def roi_align_backward(grad_out: np.ndarray, record: AlignRecord) -> np.ndarray:
    """Scatter bin gradients to the four integer neighbours of each winner.

    The winner at continuous (y, x) contributed
    (1-dy)(1-dx)*f[yl,xl] + (1-dy)dx*f[yl,xh] + dy(1-dx)*f[yh,xl] + dy dx*f[yh,xh],
    so its incoming gradient splits over those cells with the same weights.
    """
    c, h, w = record.featmap_shape
    nb = record.out_bins
    g = np.asarray(grad_out, dtype=np.float64)
    r = g.shape[0]
    if g.shape != (r, c, nb, nb):
        raise ValueError(f"grad_out shape {g.shape} does not match record")
    g = g.reshape(r, c, nb * nb).transpose(1, 0, 2)  # (C, R, nb2)
    yl, xl, ly, lx = _corner_decompose(record.win_y.ravel(),
                                       record.win_x.ravel(), h, w)
    yh = np.minimum(yl + 1, h - 1)
    xh = np.minimum(xl + 1, w - 1)
    cc = np.broadcast_to(np.arange(c)[:, None, None], g.shape).ravel()
    gg = g.ravel()
    grad_map = np.zeros((c, h, w), dtype=np.float64)
    np.add.at(grad_map, (cc, yl, xl), gg * (1 - ly) * (1 - lx))
    np.add.at(grad_map, (cc, yl, xh), gg * (1 - ly) * lx)
    np.add.at(grad_map, (cc, yh, xl), gg * ly * (1 - lx))
    np.add.at(grad_map, (cc, yh, xh), gg * ly * lx)
    return grad_map


# ---------------------------------------------------------------------------
# quantized baseline

def _round_half_up(v: np.ndarray) -> np.ndarray:
    return np.floor(v + 0.5).astype(np.intp)


def roi_pool_forward(featmap: np.ndarray, rois, out_bins: int = 3):
    """Max pooling over integer cells of a rounded RoI.

    RoI boundaries are rounded half-up to integers; each of the
    out_bins x out_bins bins covers the integer columns/rows
    [floor(j*W/out_bins), floor((j+1)*W/out_bins)) of the rounded RoI.
    An empty bin falls back to its single nearest cell. Returns
    (out (R,C,out_bins,out_bins), record) where the record stores flat
    argmax indices for the backward pass.
    """
    c, h, w = featmap.shape
    rois = _check_rois(rois)
    r = rois.shape[0]
    out = np.empty((r, c, out_bins, out_bins), dtype=featmap.dtype)
    argmax = np.empty((r, c, out_bins, out_bins), dtype=np.intp)
    flat = featmap.reshape(c, -1)
    for ri in range(r):
        x, y, rw, rh = rois[ri]
        xs = int(np.clip(_round_half_up(np.array(x)), 0, w - 1))
        ys = int(np.clip(_round_half_up(np.array(y)), 0, h - 1))
        xe = int(np.clip(_round_half_up(np.array(x + rw)), xs + 1, w))
        ye = int(np.clip(_round_half_up(np.array(y + rh)), ys + 1, h))
        wi, hi = xe - xs, ye - ys
        for by in range(out_bins):
            r0 = ys + (by * hi) // out_bins
            r1 = ys + ((by + 1) * hi) // out_bins
            if r1 <= r0:
                r0 = min(r0, ye - 1)
                r1 = r0 + 1
            for bx in range(out_bins):
                c0 = xs + (bx * wi) // out_bins
                c1 = xs + ((bx + 1) * wi) // out_bins
                if c1 <= c0:
                    c0 = min(c0, xe - 1)
                    c1 = c0 + 1
                block = featmap[:, r0:r1, c0:c1].reshape(c, -1)
                local = block.argmax(axis=1)
                rows = r0 + local // (c1 - c0)
                cols = c0 + local % (c1 - c0)
                idx = rows * w + cols
                argmax[ri, :, by, bx] = idx
                out[ri, :, by, bx] = flat[np.arange(c), idx]
    return out, (argmax, featmap.shape)


def roi_pool_backward(grad_out: np.ndarray, record) -> np.ndarray:
    argmax, (c, h, w) = record
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != argmax.shape:
        raise ValueError(f"grad_out shape {g.shape} does not match record")
    grad_map = np.zeros((c, h * w), dtype=np.float64)
    cc = np.broadcast_to(np.arange(c)[None, :, None, None], argmax.shape).ravel()
    np.add.at(grad_map, (cc, argmax.ravel()), g.ravel())
    return grad_map.reshape(c, h, w)
