"""Finite-difference audit of the full forward/backward chain.

Builds a small but structurally complete network (all layer kinds, three
conv blocks, RoI alignment, FC stack, softmax loss), computes analytic
gradients for every parameter, and compares each against a central
finite difference of the scalar loss.

The per-parameter relative error is |a - f| / max(|a|, |f|, 1e-4): the
denominator is floored at the probe scale so parameters with near-zero
gradients are judged on absolute error at the same tolerance instead of
dividing noise by noise.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .network import ALL_LAYERS, FeatureNetwork, NetworkConfig

GRADCHECK_CONFIG = NetworkConfig(
    conv_channels=(4, 6, 8),
    conv_kernels=(5, 5, 3),
    conv_strides=(1, 1, 1),
    conv_pads=(0, 1, 1),
    lrn_after=(True, True, False),
    pool_after=(True, True, False),
    pool_kernel=2,
    pool_stride=2,
    fc_width=16,
    dropout_rate=0.5,   # eval mode during the audit, so inert
)


@dataclass
class GradcheckReport:
    max_rel_err: float
    worst_param: str
    n_params: int
    seconds: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < 1e-4


def full_chain_gradcheck(seed: int = 0, image_hw: int = 32, n_rois: int = 4,
                         eps: float = 1e-4) -> GradcheckReport:
    start = time.time()
    rng = np.random.default_rng(seed)
    net = FeatureNetwork(GRADCHECK_CONFIG)
    params = net.init_params(rng, branches=1)
    image = rng.uniform(0.0, 1.0, size=(3, image_hw, image_hw))
    stride = net.config.cumulative_stride
    fm_hw = image_hw
    for k, s, p, pooled in zip(net.config.conv_kernels, net.config.conv_strides,
                               net.config.conv_pads, net.config.pool_after):
        fm_hw = (fm_hw + 2 * p - k) // s + 1
        if pooled:
            fm_hw = (fm_hw - net.config.pool_kernel) // net.config.pool_stride + 1
    # RoIs in image coordinates, spread over the frame, generic float sizes
    rois_img = []
    for _ in range(n_rois):
        w = rng.uniform(0.3, 0.8) * fm_hw * stride
        h = rng.uniform(0.3, 0.8) * fm_hw * stride
        x = rng.uniform(0.0, fm_hw * stride - w)
        y = rng.uniform(0.0, fm_hw * stride - h)
        rois_img.append([x, y, w, h])
    rois_feat = np.asarray(rois_img) / stride
    labels = np.arange(n_rois) % 2

    groups = [(image, rois_feat, labels)]

    def loss_only() -> float:
        fm, _ = net.forward_conv(params, image)
        feats, _ = net.extract_features(fm[0], rois_feat)
        logits, _ = net.forward_fc(params, feats, branch=0, train=False)
        from .layers import softmax_xent
        return softmax_xent(logits, labels)[0]

    _, grads = net.loss_and_grads(params, groups, branch=0, scope=ALL_LAYERS,
                                  train=False)
    worst = 0.0
    worst_name = ""
    n_checked = 0
    for name in sorted(grads):
        arr = params[name]
        flat = arr.ravel()
        gflat = grads[name].ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            up = loss_only()
            flat[idx] = orig - eps
            dn = loss_only()
            flat[idx] = orig
            fd = (up - dn) / (2.0 * eps)
            a = gflat[idx]
            rel = abs(a - fd) / max(abs(a), abs(fd), 1e-4)
            n_checked += 1
            if rel > worst:
                worst = rel
                worst_name = f"{name}[{idx}]"
    return GradcheckReport(max_rel_err=float(worst), worst_param=worst_name,
                           n_params=n_checked, seconds=time.time() - start)
