"""Online tracking-by-detection with loss-gated fine-tuning.

Per frame: sample candidates around the previous target, score each with
the current classifier (one whole-frame conv pass, RoI-aligned features,
FC head), take the argmax. A confident frame (best score above the
update threshold) is refined by the bbox regressor and contributes fresh
samples to the buffers. An unconfident one triggers an FC-only
fine-tune on buffered samples with hard-negative mining, which stops as
soon as a minibatch loss falls under the loss threshold (or at the
iteration cap), then the frame is re-scored once and the new argmax
stands.

Conv layers never change after offline training, so buffered samples are
stored as RoI-aligned feature vectors and fine-tuning is a pure FC
problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .layers import softmax_xent
from .network import FeatureNetwork, NetworkConfig, NetworkParams
from .rect import Rect
from .sampling import generate_candidates, sample_rois
from .selection import prune_network
from .sgd import SgdOptimizer
from .validation import check_image, check_random_state


@dataclass(frozen=True)
class TrackerConfig:
    update_threshold: float = 0.0      # fine-tune when best score <= this
    loss_threshold: float = 0.01       # stop fine-tuning below this loss
    max_finetune_iters: int = 10
    n_candidates: int = 256
    trans_sigma: float = 0.25
    scale_sigma: float = 0.5
    batch_pos: int = 32
    batch_neg: int = 96
    hard_mining_pool: int = 4          # negatives scored per mined one
    pos_per_frame: int = 8
    neg_per_frame: int = 24
    first_frame_pos: int = 32
    first_frame_neg: int = 96
    first_frame_lr: float = 5e-4
    first_frame_iters: int = 30
    online_lr: float = 1.5e-3
    momentum: float = 0.9
    weight_decay: float = 5e-4
    buffer_frames: int = 20            # keep samples from this many frames
    bbox_reg_lambda: float = 1000.0


@dataclass
class LogRow:
    frame: int
    best_score: float
    loss: float | None       # None when no fine-tune ran
    iterations: int


@dataclass
class TrackerState:
    current_rect: Rect
    frame_idx: int = 0
    pos_buffer: list = field(default_factory=list)   # (frame, feats (N,D))
    neg_buffer: list = field(default_factory=list)
    finetune_log: list[LogRow] = field(default_factory=list)


def should_update(best_score: float, threshold: float) -> bool:
    """The update gate: fine-tune only when confidence has dropped."""
    return best_score <= threshold


def run_finetune_controller(step_fn, loss_threshold: float, max_iters: int):
    """Run update iterations until one reports a loss below the threshold.

    step_fn performs one full update iteration (sample, forward, step)
    and returns that iteration's minibatch loss. Returns
    (iterations_used, final_loss).
    """
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    loss = None
    for it in range(1, max_iters + 1):
        loss = float(step_fn())
        if loss < loss_threshold:
            return it, loss
    return max_iters, loss


def mine_hard_negatives(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k highest-scoring (hardest) negatives, stable order."""
    scores = np.asarray(scores)
    if k < 0:
        raise ValueError("k must be non-negative")
    order = np.argsort(-scores, kind="stable")
    return order[: min(k, scores.size)]


class BBoxRegressor:
    """Ridge regression from RoI features to target-offset corrections.

    Offsets follow the usual detection parameterization: horizontal and
    vertical center shifts scaled by the box size, plus log size ratios.
    """

    def __init__(self, lam: float = 1000.0):
        self.lam = lam

    @staticmethod
    def offsets(rects: list[Rect], gt: Rect) -> np.ndarray:
        out = np.empty((len(rects), 4))
        gcx, gcy = gt.center
        for i, r in enumerate(rects):
            cx, cy = r.center
            out[i] = [(gcx - cx) / r.w, (gcy - cy) / r.h,
                      np.log(gt.w / r.w), np.log(gt.h / r.h)]
        return out

    def fit(self, feats: np.ndarray, rects: list[Rect], gt: Rect):
        feats = np.asarray(feats, dtype=np.float64)
        if feats.shape[0] != len(rects):
            raise ValueError(
                f"{feats.shape[0]} feature rows vs {len(rects)} rects")
        x = np.hstack([feats, np.ones((feats.shape[0], 1))])
        y = self.offsets(rects, gt)
        a = x.T @ x + self.lam * np.eye(x.shape[1])
        self.coef_ = np.linalg.solve(a, x.T @ y)
        return self

    def predict_offsets(self, feats: np.ndarray) -> np.ndarray:
        if not hasattr(self, "coef_"):
            raise NotFittedError("BBoxRegressor is not fitted yet")
        feats = np.asarray(feats, dtype=np.float64)
        x = np.hstack([feats, np.ones((feats.shape[0], 1))])
        return x @ self.coef_

    def refine(self, feats: np.ndarray, rect: Rect) -> Rect:
        d = self.predict_offsets(np.atleast_2d(feats))[0]
        cx, cy = rect.center
        ncx = cx + d[0] * rect.w
        ncy = cy + d[1] * rect.h
        nw = rect.w * np.exp(d[2])
        nh = rect.h * np.exp(d[3])
        return Rect(ncx - nw / 2.0, ncy - nh / 2.0, nw, nh)


class Tracker(BaseEstimator):
    """Single-target tracker: fit on the first frame, predict the rest.

    `params` are offline-trained network weights (any number of head
    branches; a fresh single branch replaces them at fit). `keep` is an
    optional channel mask from feature selection, applied by physically
    pruning the network before the first-frame fine-tune.
    """

    def __init__(self, params: NetworkParams,
                 net_config: NetworkConfig | None = None,
                 keep=None, config: TrackerConfig | None = None,
                 random_state: int | None = 0):
        self.params = params
        self.net_config = net_config
        self.keep = keep
        self.config = config
        self.random_state = random_state

    # -- fitting on the first frame -----------------------------------------

    def fit(self, frame, init_rect: Rect, y=None):
        cfg = self.config or TrackerConfig()
        net_cfg = self.net_config or NetworkConfig()
        rng = check_random_state(self.random_state)
        params = self.params.clone()
        if self.keep is not None:
            params, net_cfg = prune_network(params, net_cfg,
                                            np.asarray(self.keep))
        net = FeatureNetwork(net_cfg)
        params = net.reinit_single_branch(params, rng)

        img = check_image(frame)
        fh, fw = img.shape[1], img.shape[2]
        init_rect = init_rect.clipped(fw, fh)
        pos, neg = sample_rois(rng, init_rect, cfg.first_frame_pos,
                               cfg.first_frame_neg, fw, fh)
        fm, _ = net.forward_conv(params, img)
        pos_feats, _ = net.extract_features(fm[0], net.rois_to_feature(pos))
        neg_feats, _ = net.extract_features(fm[0], net.rois_to_feature(neg))

        self.cfg_ = cfg
        self.net_ = net
        self.params_ = params
        self.rng_ = rng
        self.state_ = TrackerState(current_rect=init_rect)
        self.state_.pos_buffer.append((0, pos_feats))
        self.state_.neg_buffer.append((0, neg_feats))

        loss, iters = self._finetune(lr=cfg.first_frame_lr,
                                     max_iters=cfg.first_frame_iters)
        self.state_.finetune_log.append(LogRow(0, float("nan"), loss, iters))

        self.regressor_ = BBoxRegressor(lam=cfg.bbox_reg_lambda)
        self.regressor_.fit(pos_feats, pos, init_rect)
        return self

    # -- per-frame loop ------------------------------------------------------

    def predict_frame(self, frame) -> Rect:
        if not hasattr(self, "state_"):
            raise NotFittedError("Tracker is not fitted yet")
        cfg, net, state = self.cfg_, self.net_, self.state_
        img = check_image(frame)
        fh, fw = img.shape[1], img.shape[2]
        state.frame_idx += 1

        candidates = generate_candidates(self.rng_, state.current_rect,
                                         cfg.n_candidates, fw, fh,
                                         cfg.trans_sigma, cfg.scale_sigma)
        fm, _ = net.forward_conv(self.params_, img)
        cand_feats, _ = net.extract_features(
            fm[0], net.rois_to_feature(candidates))
        scores = self._score_feats(cand_feats)
        best = int(np.argmax(scores))
        best_score = float(scores[best])
        estimate = candidates[best]

        if should_update(best_score, cfg.update_threshold):
            loss, iters = self._finetune(lr=cfg.online_lr,
                                         max_iters=cfg.max_finetune_iters)
            rescored = self._score_feats(cand_feats)
            state.current_rect = candidates[int(np.argmax(rescored))]
            state.finetune_log.append(
                LogRow(state.frame_idx, best_score, loss, iters))
        else:
            feats_est, _ = net.extract_features(
                fm[0], net.rois_to_feature([estimate]))
            refined = self.regressor_.refine(feats_est, estimate)
            state.current_rect = refined.clipped(fw, fh)
            self._collect_samples(fm[0], state.current_rect, fw, fh)
            state.finetune_log.append(
                LogRow(state.frame_idx, best_score, None, 0))
        return state.current_rect

    def predict(self, frames) -> list[Rect]:
        return [self.predict_frame(f) for f in frames]

    # -- internals -----------------------------------------------------------

    def _score_feats(self, feats: np.ndarray) -> np.ndarray:
        logits, _ = self.net_.forward_fc(self.params_, feats, branch=0,
                                         train=False)
        return logits[:, 1] - logits[:, 0]

    def _collect_samples(self, featmap: np.ndarray, target: Rect,
                         fw: int, fh: int) -> None:
        cfg, net, state = self.cfg_, self.net_, self.state_
        pos, neg = sample_rois(self.rng_, target, cfg.pos_per_frame,
                               cfg.neg_per_frame, fw, fh)
        pos_feats, _ = net.extract_features(featmap, net.rois_to_feature(pos))
        neg_feats, _ = net.extract_features(featmap, net.rois_to_feature(neg))
        state.pos_buffer.append((state.frame_idx, pos_feats))
        state.neg_buffer.append((state.frame_idx, neg_feats))
        for buf in (state.pos_buffer, state.neg_buffer):
            frames_present = sorted({f for f, _ in buf}, reverse=True)
            keep = set(frames_present[: cfg.buffer_frames])
            buf[:] = [(f, x) for f, x in buf if f in keep]

    def _finetune(self, lr: float, max_iters: int):
        cfg = self.cfg_
        pos_all = np.concatenate([x for _, x in self.state_.pos_buffer])
        neg_all = np.concatenate([x for _, x in self.state_.neg_buffer])
        opt = SgdOptimizer(lr, cfg.momentum, cfg.weight_decay)

        def step():
            pi = self.rng_.choice(pos_all.shape[0], size=cfg.batch_pos,
                                  replace=pos_all.shape[0] < cfg.batch_pos)
            pool_size = min(neg_all.shape[0],
                            cfg.hard_mining_pool * cfg.batch_neg)
            ni = self.rng_.choice(neg_all.shape[0], size=pool_size,
                                  replace=False)
            pool_scores = self._score_feats(neg_all[ni])
            hard = ni[mine_hard_negatives(pool_scores, cfg.batch_neg)]
            x = np.concatenate([pos_all[pi], neg_all[hard]])
            labels = np.concatenate([np.ones(len(pi), dtype=np.intp),
                                     np.zeros(len(hard), dtype=np.intp)])
            logits, cache = self.net_.forward_fc(self.params_, x, branch=0,
                                                 train=True, rng=self.rng_)
            loss, dlogits = softmax_xent(logits, labels)
            _, grads = self.net_.backward_fc(self.params_, dlogits, cache)
            opt.step(self.params_.tensors, grads)
            return loss

        iters, loss = run_finetune_controller(step, cfg.loss_threshold,
                                              max_iters)
        return loss, iters


def track_sequence(params: NetworkParams, frames, init_rect: Rect,
                   net_config: NetworkConfig | None = None, keep=None,
                   config: TrackerConfig | None = None,
                   seed: int | None = 0):
    """Track a whole sequence; frame 0's output is the given init rect.

    Returns (rects, finetune_log).
    """
    if len(frames) == 0:
        raise ValueError("empty sequence")
    tracker = Tracker(params, net_config=net_config, keep=keep, config=config,
                      random_state=seed)
    tracker.fit(frames[0], init_rect)
    rects = [tracker.state_.current_rect]
    rects += tracker.predict(frames[1:])
    return rects, tracker.state_.finetune_log
