"""Feature-map selection by pairwise mutual information.

Feature maps computed from the same frame are heavily redundant. Each
channel of the last conv layer is scored by how much information it
shares with the other channels: maps that are all zero carry nothing and
are dropped outright, and of the rest only the keep_count channels whose
worst-case redundancy (max MI against any other surviving channel) is
smallest are kept. The network is then physically pruned: dropped conv
filters disappear and the first FC layer loses the matching input
columns, which halves its weight count at the default 512 -> 256.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .network import NetworkConfig, NetworkParams

KEPT = "kept"
ZERO_MAP = "zero_map"
HIGH_REDUNDANCY = "high_redundancy"

_DEGENERATE_RANGE = 1e-12


def activation_histogram(fmap: np.ndarray, bins: int = 20):
    """Equal-width histogram of one activation map.

    Bin edges span [min, max] of the map; the max value lands in the last
    bin. A constant map gets a degenerate range of 1e-12 so all mass sits
    in bin 0. Returns (counts, edges).
    """
    v = np.asarray(fmap, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("empty activation map")
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        hi = lo + _DEGENERATE_RANGE
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(v, bins=edges)
    return counts, edges


def _bin_indices(v: np.ndarray, edges: np.ndarray) -> np.ndarray:
    # np.histogram semantics: half-open bins, the last bin closed
    idx = np.searchsorted(edges, v, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


def mutual_information(map_a: np.ndarray, map_b: np.ndarray,
                       bins: int = 20) -> float:
    """MI in nats between two same-shape activation maps.

    Each map is binned on its own equal-width grid; the joint histogram
    is bins x bins over paired elements. Terms with zero joint mass
    contribute nothing (0 * log 0 = 0).
    """
    a = np.asarray(map_a, dtype=np.float64).ravel()
    b = np.asarray(map_b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {map_a.shape} vs {map_b.shape}")
    _, ea = activation_histogram(a, bins)
    _, eb = activation_histogram(b, bins)
    ia = _bin_indices(a, ea)
    ib = _bin_indices(b, eb)
    joint = np.bincount(ia * bins + ib, minlength=bins * bins).astype(np.float64)
    joint = joint.reshape(bins, bins) / a.size
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    nz = joint > 0
    denom = np.outer(pa, pb)
    return float(np.sum(joint[nz] * np.log(joint[nz] / denom[nz])))


def mi_matrix(fmaps: np.ndarray, bins: int = 20) -> np.ndarray:
    """Symmetric C x C matrix of pairwise MI with a zero diagonal.

    fmaps is (C, H, W). Bin indices are computed once per channel, then
    each pair needs only a joint bincount.
    """
    fmaps = np.asarray(fmaps, dtype=np.float64)
    if fmaps.ndim != 3:
        raise ValueError(f"fmaps must be (C, H, W), got {fmaps.shape}")
    c = fmaps.shape[0]
    flat = fmaps.reshape(c, -1)
    n = flat.shape[1]
    idx = np.empty((c, n), dtype=np.intp)
    for i in range(c):
        _, edges = activation_histogram(flat[i], bins)
        idx[i] = _bin_indices(flat[i], edges)
    out = np.zeros((c, c))
    for i in range(c):
        for j in range(i + 1, c):
            joint = np.bincount(idx[i] * bins + idx[j],
                                minlength=bins * bins).astype(np.float64)
            joint = joint.reshape(bins, bins) / n
            pa = joint.sum(axis=1)
            pb = joint.sum(axis=0)
            nz = joint > 0
            mi = float(np.sum(joint[nz] * np.log(joint[nz]
                                                 / np.outer(pa, pb)[nz])))
            out[i, j] = out[j, i] = mi
    return out


def select_channels(fmaps: np.ndarray, keep_count: int, bins: int = 20,
                    zero_eps: float = 0.0):
    """Pick the least redundant channels of a (C, H, W) activation stack.

    All-zero maps (max abs <= zero_eps) are removed first. Each survivor
    is scored by its maximum MI against the other survivors; the
    keep_count lowest scores win, ties broken toward the lower channel
    index. Returns (kept_indices ascending, provenance list, mi_full)
    where provenance[c] is one of "kept" / "zero_map" / "high_redundancy"
    and mi_full is the C x C matrix (zero rows/cols for dropped maps).
    """
    fmaps = np.asarray(fmaps, dtype=np.float64)
    c = fmaps.shape[0]
    flat_abs = np.abs(fmaps.reshape(c, -1)).max(axis=1)
    alive = np.where(flat_abs > zero_eps)[0]
    if keep_count < 1:
        raise ValueError(f"keep_count must be >= 1, got {keep_count}")
    if keep_count > alive.size:
        raise ValueError(
            f"keep_count {keep_count} exceeds the {alive.size} non-zero maps "
            f"({c - alive.size} of {c} are all-zero)")
    sub = mi_matrix(fmaps[alive], bins)
    mi_full = np.zeros((c, c))
    mi_full[np.ix_(alive, alive)] = sub
    if alive.size == 1:
        scores = np.zeros(1)
    else:
        scores = sub.max(axis=1)
    order = np.lexsort((alive, scores))
    kept = np.sort(alive[order[:keep_count]])
    provenance = [ZERO_MAP] * c
    for ch in alive:
        provenance[ch] = HIGH_REDUNDANCY
    for ch in kept:
        provenance[ch] = KEPT
    return kept, provenance, mi_full


def prune_network(params: NetworkParams, config: NetworkConfig,
                  keep: np.ndarray):
    """Drop last-conv output channels and the matching fc1 input columns.

    RoI features are flattened channel-major (channel c occupies columns
    [c*bins^2, (c+1)*bins^2) of the fc1 input), so pruning removes whole
    column blocks. Returns (new_params, new_config).
    """
    keep = np.asarray(keep, dtype=np.intp)
    c_last = config.conv_channels[-1]
    if keep.size == 0:
        raise ValueError("cannot prune away every channel")
    if keep.size != np.unique(keep).size:
        raise ValueError("duplicate channel indices in keep")
    if keep.min() < 0 or keep.max() >= c_last:
        raise ValueError(f"channel index out of range 0..{c_last - 1}")
    keep = np.sort(keep)
    n_convs = len(config.conv_channels)
    last = f"conv{n_convs}"
    tensors = {k: v.copy() for k, v in params.tensors.items()}
    tensors[f"{last}.weight"] = tensors[f"{last}.weight"][keep]
    tensors[f"{last}.bias"] = tensors[f"{last}.bias"][keep]
    b2 = config.roi_bins * config.roi_bins
    cols = (keep[:, None] * b2 + np.arange(b2)[None, :]).ravel()
    tensors["fc1.weight"] = tensors["fc1.weight"][:, cols]
    new_config = NetworkConfig.from_dict({
        **config.to_dict(),
        "conv_channels": config.conv_channels[:-1] + (int(keep.size),),
    })
    return NetworkParams(tensors), new_config


class ChannelSelector(BaseEstimator, TransformerMixin):
    """Mutual-information channel selection as a transformer.

    fit(X) takes a (C, H, W) activation stack (or (1, C, H, W)) from the
    last conv layer on one frame; transform drops the redundant channels.
    After fitting, `keep_` holds the surviving indices, `provenance_` the
    per-channel outcome, and `mi_matrix_` the pairwise scores.
    """

    def __init__(self, keep_count: int = 256, bins: int = 20,
                 zero_eps: float = 0.0):
        self.keep_count = keep_count
        self.bins = bins
        self.zero_eps = zero_eps

    def fit(self, X, y=None):
        X = self._as_stack(X)
        self.n_channels_ = X.shape[0]
        self.keep_, self.provenance_, self.mi_matrix_ = select_channels(
            X, self.keep_count, self.bins, self.zero_eps)
        return self

    def transform(self, X):
        if not hasattr(self, "keep_"):
            raise NotFittedError("ChannelSelector is not fitted yet")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 3:
            return X[self.keep_]
        if X.ndim == 4:
            return X[:, self.keep_]
        raise ValueError(f"expected (C,H,W) or (N,C,H,W), got {X.shape}")

    def get_support(self) -> np.ndarray:
        if not hasattr(self, "keep_"):
            raise NotFittedError("ChannelSelector is not fitted yet")
        mask = np.zeros(self.n_channels_, dtype=bool)
        mask[self.keep_] = True
        return mask

    def prune(self, params: NetworkParams, config: NetworkConfig):
        if not hasattr(self, "keep_"):
            raise NotFittedError("ChannelSelector is not fitted yet")
        return prune_network(params, config, self.keep_)

    @staticmethod
    def _as_stack(X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 4:
            if X.shape[0] != 1:
                raise ValueError("channel selection uses one frame at a time")
            X = X[0]
        if X.ndim != 3:
            raise ValueError(f"expected (C,H,W) activations, got {X.shape}")
        return X


def select_for_frame(net, params: NetworkParams, image,
                     keep_count: int, bins: int = 20) -> ChannelSelector:
    """Run the conv stack on a frame and fit a selector on its last map."""
    fm, _ = net.forward_conv(params, image)
    sel = ChannelSelector(keep_count=keep_count, bins=bins)
    return sel.fit(fm[0])
