"""Offline multi-domain training.

One annotated video = one domain = one 2-way head branch; conv and FC
layers are shared. Each iteration serves the next domain round-robin
with a 32-positive / 96-negative minibatch drawn from a few of its
frames, and momentum SGD updates the shared layers plus that domain's
branch only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .network import ALL_LAYERS, FC_ONLY, FeatureNetwork, NetworkConfig
from .rect import Rect
from .sampling import sample_rois
from .sgd import SgdOptimizer
from .validation import check_image, check_random_state


@dataclass
class VideoDomain:
    """An annotated training video: frames plus one target rect each."""
    frames: list
    rects: list[Rect]

    def __post_init__(self):
        if len(self.frames) == 0:
            raise ValueError("video has no frames")
        if len(self.frames) != len(self.rects):
            raise ValueError(
                f"{len(self.frames)} frames but {len(self.rects)} rects")


class MultiDomainTrainer(BaseEstimator):
    """Fits the shared network on k videos with per-video heads.

    Parameters follow the usual conventions: `iterations` counts
    optimizer steps (cycling over domains), `lr`/`momentum`/`weight_decay`
    configure SGD, `batch_pos`/`batch_neg` fix the minibatch mix,
    `pos_per_frame`/`neg_per_frame` size the per-frame sample pools drawn
    once up front, and `frames_per_iter` limits how many conv passes one
    step costs. `backward_scope` is "all_layers" (default) or "fc_only".

    After fit: `params_` (trained weights), `net_` (the driver),
    `loss_history_` (one mean cross-entropy per iteration).
    """

    def __init__(self, network_config: NetworkConfig | None = None,
                 iterations: int = 100, lr: float = 1e-4,
                 momentum: float = 0.9, weight_decay: float = 5e-4,
                 batch_pos: int = 32, batch_neg: int = 96,
                 pos_per_frame: int = 8, neg_per_frame: int = 24,
                 frames_per_iter: int = 4, backward_scope: str = ALL_LAYERS,
                 random_state: int | None = 0):
        self.network_config = network_config
        self.iterations = iterations
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.batch_pos = batch_pos
        self.batch_neg = batch_neg
        self.pos_per_frame = pos_per_frame
        self.neg_per_frame = neg_per_frame
        self.frames_per_iter = frames_per_iter
        self.backward_scope = backward_scope
        self.random_state = random_state

    def fit(self, videos: list[VideoDomain], y=None):
        if len(videos) == 0:
            raise ValueError("need at least one training video")
        if self.backward_scope not in (ALL_LAYERS, FC_ONLY):
            raise ValueError(f"unknown backward_scope {self.backward_scope!r}")
        rng = check_random_state(self.random_state)
        cfg = self.network_config or NetworkConfig()
        net = FeatureNetwork(cfg)
        params = net.init_params(rng, branches=len(videos))

        domains = []
        for vi, video in enumerate(videos):
            frames = [check_image(f) for f in video.frames]
            pools = []
            for fi, (frame, rect) in enumerate(zip(frames, video.rects)):
                fh, fw = frame.shape[1], frame.shape[2]
                pos, neg = sample_rois(rng, rect, self.pos_per_frame,
                                       self.neg_per_frame, fw, fh)
                pools.append((pos, neg))
            domains.append((frames, pools))

        opt = SgdOptimizer(self.lr, self.momentum, self.weight_decay)
        history = []
        for it in range(self.iterations):
            d = it % len(videos)
            frames, pools = domains[d]
            picks = rng.choice(len(frames),
                               size=min(self.frames_per_iter, len(frames)),
                               replace=False)
            groups = self._assemble_minibatch(rng, net, frames, pools, picks)
            loss, grads = net.loss_and_grads(params, groups, branch=d,
                                             scope=self.backward_scope,
                                             train=True, rng=rng)
            opt.step(params.tensors, grads)
            history.append(loss)

        self.params_ = params
        self.net_ = net
        self.loss_history_ = history
        self.n_domains_ = len(videos)
        return self

    def _assemble_minibatch(self, rng, net, frames, pools, picks):
        """Draw batch_pos + batch_neg rects from the picked frames' pools."""
        pos_pool = [(fi, r) for fi in picks for r in pools[fi][0]]
        neg_pool = [(fi, r) for fi in picks for r in pools[fi][1]]
        chosen: dict[int, tuple[list[Rect], list[int]]] = {}

        def draw(pool, count, label):
            idx = rng.choice(len(pool), size=count,
                             replace=len(pool) < count)
            for k in idx:
                fi, rect = pool[k]
                rects, labels = chosen.setdefault(fi, ([], []))
                rects.append(rect)
                labels.append(label)

        draw(pos_pool, self.batch_pos, 1)
        draw(neg_pool, self.batch_neg, 0)
        groups = []
        for fi, (rects, labels) in sorted(chosen.items()):
            groups.append((frames[fi], net.rois_to_feature(rects),
                           np.asarray(labels)))
        return groups
