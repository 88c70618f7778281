"""The conv + RoI-align + FC classification network.

Architecture (default sizes): three conv blocks run once over the whole
frame, then every RoI is cut out of the last conv map with roi_align and
classified by a shared FC stack ending in one 2-way head per training
domain:

    conv 7x7x3x96 s2 -> relu -> lrn -> maxpool 3x3 s2
    conv 5x5x96x256 s2 p1 -> relu -> lrn -> maxpool 3x3 s2
    conv 3x3x256x512 s1 p1 -> relu
    [roi_align 3x3 bins, 2x2 samples]
    fc (4608 -> 512) -> dropout 0.5 -> fc (512 -> 512) -> dropout 0.5 -> head (512 -> 2)

Everything is float64. Parameters live in a flat name -> array dict so
optimizers and serialization stay trivial.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import layers, roi
from .rect import Rect
from .validation import check_image

FC_ONLY = "fc_only"
ALL_LAYERS = "all_layers"


@dataclass(frozen=True)
class NetworkConfig:
    conv_channels: tuple[int, ...] = (96, 256, 512)
    conv_kernels: tuple[int, ...] = (7, 5, 3)
    conv_strides: tuple[int, ...] = (2, 2, 1)
    conv_pads: tuple[int, ...] = (0, 1, 1)
    lrn_after: tuple[bool, ...] = (True, True, False)
    pool_after: tuple[bool, ...] = (True, True, False)
    pool_kernel: int = 3
    pool_stride: int = 2
    lrn_radius: int = 2
    lrn_k: float = 2.0
    lrn_alpha: float = 1e-4
    lrn_beta: float = 0.75
    roi_bins: int = 3
    roi_samples: int = 2
    fc_width: int = 512
    dropout_rate: float = 0.5
    in_channels: int = 3
    # sigma 0.01 is calibrated for the full-width stack on 0..255 pixels.
    # With no ReLU between the FC layers the classifier is a product of
    # three Gaussian matrices, so resized stacks must rescale sigma to
    # keep initial logits near 1: much larger and the first steps crush
    # the product onto the zero-weight saddle (constant output, dead
    # multiplicative gradients), much smaller and it barely moves.
    fc_init_sigma: float = 0.01

    def __post_init__(self):
        n = len(self.conv_channels)
        for name in ("conv_kernels", "conv_strides", "conv_pads",
                     "lrn_after", "pool_after"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must have {n} entries")

    @property
    def cumulative_stride(self) -> int:
        s = 1
        for cs, pooled in zip(self.conv_strides, self.pool_after):
            s *= cs
            if pooled:
                s *= self.pool_stride
        return s

    @property
    def feature_dim(self) -> int:
        return self.conv_channels[-1] * self.roi_bins * self.roi_bins

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        kw = dict(d)
        for name in ("conv_channels", "conv_kernels", "conv_strides",
                     "conv_pads", "lrn_after", "pool_after"):
            if name in kw:
                kw[name] = tuple(kw[name])
        return cls(**kw)


def describe_layers(config: NetworkConfig, branches: int = 1) -> list[str]:
    """Human-readable layer sequence, used to pin the default stack."""
    out = []
    cin = config.in_channels
    for i, cout in enumerate(config.conv_channels):
        k, s, p = config.conv_kernels[i], config.conv_strides[i], config.conv_pads[i]
        out.append(f"conv {k}x{k}x{cin}x{cout} stride {s} pad {p}")
        out.append("relu")
        if config.lrn_after[i]:
            out.append("lrn")
        if config.pool_after[i]:
            out.append(f"maxpool {config.pool_kernel}x{config.pool_kernel} "
                       f"stride {config.pool_stride}")
        cin = cout
    out.append(f"roi_align {config.roi_bins}x{config.roi_bins}x{cin} "
               f"({config.roi_samples}x{config.roi_samples} samples)")
    out.append(f"fc {config.feature_dim}->{config.fc_width}")
    out.append(f"dropout {config.dropout_rate}")
    out.append(f"fc {config.fc_width}->{config.fc_width}")
    out.append(f"dropout {config.dropout_rate}")
    out.append(f"head {config.fc_width}->2 x{branches}")
    return out


class NetworkParams:
    """Flat name -> float64 array mapping plus branch bookkeeping."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        self.tensors = tensors

    @property
    def n_branches(self) -> int:
        return sum(1 for k in self.tensors if k.startswith("head") and
                   k.endswith(".weight"))

    def clone(self) -> "NetworkParams":
        return NetworkParams({k: v.copy() for k, v in self.tensors.items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def count(self) -> int:
        return sum(v.size for v in self.tensors.values())


def head_name(branch: int) -> str:
    return f"head{branch}"


def fc_param_names(branch: int) -> list[str]:
    names = []
    for base in ("fc1", "fc2", head_name(branch)):
        names += [f"{base}.weight", f"{base}.bias"]
    return names


def conv_param_names(n_convs: int) -> list[str]:
    names = []
    for i in range(1, n_convs + 1):
        names += [f"conv{i}.weight", f"conv{i}.bias"]
    return names


class FeatureNetwork:
    """Stateless driver: owns the architecture, params travel explicitly."""

    def __init__(self, config: NetworkConfig | None = None):
        self.config = config or NetworkConfig()

    # -- initialization ----------------------------------------------------

    def init_params(self, rng: np.random.Generator, branches: int = 1) -> NetworkParams:
        cfg = self.config
        tensors: dict[str, np.ndarray] = {}
        cin = cfg.in_channels
        for i, cout in enumerate(cfg.conv_channels):
            k = cfg.conv_kernels[i]
            fan_in = cin * k * k
            sigma = np.sqrt(2.0 / fan_in)
            tensors[f"conv{i+1}.weight"] = rng.normal(0.0, sigma, (cout, cin, k, k))
            tensors[f"conv{i+1}.bias"] = np.zeros(cout)
            cin = cout
        dims = [cfg.feature_dim, cfg.fc_width, cfg.fc_width]
        for i in range(2):
            tensors[f"fc{i+1}.weight"] = rng.normal(
                0.0, cfg.fc_init_sigma, (dims[i + 1], dims[i]))
            tensors[f"fc{i+1}.bias"] = np.zeros(dims[i + 1])
        for b in range(branches):
            tensors[f"head{b}.weight"] = rng.normal(
                0.0, cfg.fc_init_sigma, (2, cfg.fc_width))
            tensors[f"head{b}.bias"] = np.zeros(2)
        return NetworkParams(tensors)

    def reinit_single_branch(self, params: NetworkParams,
                             rng: np.random.Generator) -> NetworkParams:
        """Drop all offline heads and start one fresh branch."""
        tensors = {k: v.copy() for k, v in params.tensors.items()
                   if not k.startswith("head")}
        tensors["head0.weight"] = rng.normal(
            0.0, self.config.fc_init_sigma, (2, self.config.fc_width))
        tensors["head0.bias"] = np.zeros(2)
        return NetworkParams(tensors)

    # -- forward -----------------------------------------------------------

    def forward_conv(self, params: NetworkParams, image, want_cache: bool = False):
        """Run the conv blocks over a whole frame.

        image is (3,H,W) or (N,3,H,W); returns (featmap (N,C,H',W'), cache).
        The cache is only assembled when the caller will backprop.
        """
        cfg = self.config
        x = np.asarray(image, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        cache = [] if want_cache else None
        for i in range(len(cfg.conv_channels)):
            w = params[f"conv{i+1}.weight"]
            b = params[f"conv{i+1}.bias"]
            x, conv_cache = layers.conv2d_forward(
                x, w, b, stride=cfg.conv_strides[i], pad=cfg.conv_pads[i])
            x, relu_mask = layers.relu_forward(x)
            lrn_cache = pool_cache = None
            if cfg.lrn_after[i]:
                x, lrn_cache = layers.lrn_forward(
                    x, cfg.lrn_radius, cfg.lrn_k, cfg.lrn_alpha, cfg.lrn_beta)
            if cfg.pool_after[i]:
                x, pool_cache = layers.maxpool_forward(
                    x, cfg.pool_kernel, cfg.pool_stride)
            if want_cache:
                cache.append((conv_cache, relu_mask, lrn_cache, pool_cache))
        return x, cache

    def rois_to_feature(self, rects: list[Rect]) -> np.ndarray:
        s = self.config.cumulative_stride
        return np.array(
            [[r.x / s, r.y / s, r.w / s, r.h / s] for r in rects], dtype=np.float64)

    def extract_features(self, featmap: np.ndarray, rois_feat: np.ndarray):
        """RoI-align a (C,H,W) map; returns (X (R, C*bins^2), record)."""
        cfg = self.config
        out, record = roi.roi_align_forward(
            featmap, rois_feat, out_bins=cfg.roi_bins, samples=cfg.roi_samples)
        return out.reshape(out.shape[0], -1), record

    def forward_fc(self, params: NetworkParams, feats: np.ndarray, branch: int = 0,
                   train: bool = False, rng: np.random.Generator | None = None):
        cfg = self.config
        a1, x0 = layers.fc_forward(feats, params["fc1.weight"], params["fc1.bias"])
        d1, m1 = layers.dropout_forward(a1, cfg.dropout_rate, train, rng)
        a2, x1 = layers.fc_forward(d1, params["fc2.weight"], params["fc2.bias"])
        d2, m2 = layers.dropout_forward(a2, cfg.dropout_rate, train, rng)
        hn = head_name(branch)
        logits, x2 = layers.fc_forward(d2, params[f"{hn}.weight"], params[f"{hn}.bias"])
        return logits, (x0, m1, x1, m2, x2, branch)

    def backward_fc(self, params: NetworkParams, grad_logits: np.ndarray, fc_cache):
        x0, m1, x1, m2, x2, branch = fc_cache
        hn = head_name(branch)
        grads: dict[str, np.ndarray] = {}
        d, grads[f"{hn}.weight"], grads[f"{hn}.bias"] = layers.fc_backward(
            grad_logits, params[f"{hn}.weight"], x2)
        d = layers.dropout_backward(d, m2)
        d, grads["fc2.weight"], grads["fc2.bias"] = layers.fc_backward(
            d, params["fc2.weight"], x1)
        d = layers.dropout_backward(d, m1)
        d, grads["fc1.weight"], grads["fc1.bias"] = layers.fc_backward(
            d, params["fc1.weight"], x0)
        return d, grads

    def backward_conv(self, params: NetworkParams, grad_featmap: np.ndarray,
                      conv_cache) -> dict[str, np.ndarray]:
        cfg = self.config
        grads: dict[str, np.ndarray] = {}
        g = grad_featmap
        for i in reversed(range(len(cfg.conv_channels))):
            conv_c, relu_mask, lrn_cache, pool_cache = conv_cache[i]
            if pool_cache is not None:
                g = layers.maxpool_backward(g, pool_cache)
            if lrn_cache is not None:
                g = layers.lrn_backward(g, lrn_cache, cfg.lrn_radius, cfg.lrn_k,
                                        cfg.lrn_alpha, cfg.lrn_beta)
            g = layers.relu_backward(g, relu_mask)
            g, gw, gb = layers.conv2d_backward(g, params[f"conv{i+1}.weight"], conv_c)
            grads[f"conv{i+1}.weight"] = gw
            grads[f"conv{i+1}.bias"] = gb
        return grads

    # -- combined passes ---------------------------------------------------

    def score_rois(self, params: NetworkParams, featmap: np.ndarray,
                   rois_feat: np.ndarray, branch: int = 0) -> np.ndarray:
        """Target-minus-background logit per RoI, dropout in eval mode."""
        feats, _ = self.extract_features(featmap, rois_feat)
        logits, _ = self.forward_fc(params, feats, branch=branch, train=False)
        return logits[:, 1] - logits[:, 0]

    def loss_and_grads(self, params: NetworkParams, groups, branch: int,
                       scope: str = ALL_LAYERS, train: bool = True,
                       rng: np.random.Generator | None = None):
        """Mean softmax cross-entropy and its gradients over RoI groups.

        groups is a list of (image (3,H,W), rois_feat (Ri,4), labels (Ri,))
        so one conv pass per frame serves all of that frame's samples.
        scope selects which gradients are produced: fc_only stops at the
        FC stack (conv maps are not backpropped), all_layers goes to the
        convs too. Raises if a forward cache is missing when needed.
        """
        if scope not in (FC_ONLY, ALL_LAYERS):
            raise ValueError(f"unknown backward scope {scope!r}")
        want_conv = scope == ALL_LAYERS
        conv_caches, align_records, feats, labels, counts = [], [], [], [], []
        for image, rois_feat, lab in groups:
            img = check_image(image)
            fm, cc = self.forward_conv(params, img, want_cache=want_conv)
            x, rec = self.extract_features(fm[0], rois_feat)
            conv_caches.append(cc)
            align_records.append(rec)
            feats.append(x)
            labels.append(np.asarray(lab, dtype=np.intp))
            counts.append(x.shape[0])
        xall = np.concatenate(feats, axis=0)
        yall = np.concatenate(labels, axis=0)
        logits, fc_cache = self.forward_fc(params, xall, branch=branch,
                                           train=train, rng=rng)
        loss, dlogits = layers.softmax_xent(logits, yall)
        dx, grads = self.backward_fc(params, dlogits, fc_cache)
        if want_conv:
            cfg = self.config
            conv_grads: dict[str, np.ndarray] | None = None
            offset = 0
            for i, (cc, rec) in enumerate(zip(conv_caches, align_records)):
                if cc is None:
                    raise RuntimeError("conv backward requested without cached "
                                       "activations")
                dxi = dx[offset : offset + counts[i]]
                offset += counts[i]
                dmaps = dxi.reshape(counts[i], cfg.conv_channels[-1],
                                    cfg.roi_bins, cfg.roi_bins)
                dfeat = roi.roi_align_backward(dmaps, rec)
                g = self.backward_conv(params, dfeat[None], cc)
                if conv_grads is None:
                    conv_grads = g
                else:
                    for k, v in g.items():
                        conv_grads[k] += v
            grads.update(conv_grads or {})
        return loss, grads

    def features_for_rects(self, params: NetworkParams, image,
                           rects: list[Rect]) -> np.ndarray:
        """Convenience: conv the frame and RoI-align the given rects."""
        img = check_image(image)
        fm, _ = self.forward_conv(params, img)
        feats, _ = self.extract_features(fm[0], self.rois_to_feature(rects))
        return feats
