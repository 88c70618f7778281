"""Shared desk-scale fixtures: a small network and synthetic videos.

The videos are bright textured squares drifting over dark per-frame
noise, sized so one full train/track cycle runs in seconds. The FC init
sigma follows the initial-logits-near-1 rule for the narrow stack.
"""

import numpy as np
import pytest

from fsnet.network import NetworkConfig
from fsnet.rect import Rect
from fsnet.training import MultiDomainTrainer, VideoDomain

FRAME_HW = 128
TARGET = 26

DESK_NET = NetworkConfig(conv_channels=(8, 12, 16), fc_width=64,
                         fc_init_sigma=0.03)
DESK_TRAIN = dict(iterations=300, lr=3e-3, random_state=0)


def make_video(seed, n_frames, hw=FRAME_HW, size=TARGET, step=3.0,
               lo=12.0, hi=64.0):
    """A rigid textured patch on fresh dark noise each frame.

    The walk stays within [lo, hi] so every box keeps full feature-map
    coverage. Returns (frames, rects) with integer-aligned ground truth.
    """
    rng = np.random.default_rng(seed)
    patch = rng.uniform(110.0, 255.0, size=(3, size, size))
    ii, jj = np.indices((size, size))
    checker = ((ii // 4 + jj // 4) % 2).astype(float) * 70.0
    patch = np.clip(patch * 0.6 + checker + 60.0, 0.0, 255.0)
    x, y = rng.uniform(lo, hi, size=2)
    frames, rects = [], []
    for _ in range(n_frames):
        frame = rng.uniform(0.0, 60.0, size=(3, hw, hw))
        xi, yi = int(round(x)), int(round(y))
        frame[:, yi:yi + size, xi:xi + size] = patch
        frame = np.clip(frame + rng.normal(0.0, 6.0, frame.shape), 0.0, 255.0)
        frames.append(frame)
        rects.append(Rect(float(xi), float(yi), float(size), float(size)))
        x = float(np.clip(x + rng.normal(0.0, step), lo, hi))
        y = float(np.clip(y + rng.normal(0.0, step), lo, hi))
    return frames, rects


@pytest.fixture(scope="session")
def desk_net():
    return DESK_NET


@pytest.fixture(scope="session")
def train_videos():
    return [VideoDomain(*make_video(101, 30)),
            VideoDomain(*make_video(202, 30))]


@pytest.fixture(scope="session")
def held_out():
    return make_video(303, 40)


@pytest.fixture(scope="session")
def tiny_videos():
    """Six-frame videos on 96px frames for fast trainer unit tests."""
    kw = dict(hw=96, size=22, lo=10.0, hi=40.0)
    return [VideoDomain(*make_video(11, 6, **kw)),
            VideoDomain(*make_video(12, 6, **kw))]


@pytest.fixture(scope="session")
def trained(train_videos):
    trainer = MultiDomainTrainer(network_config=DESK_NET, **DESK_TRAIN)
    trainer.fit(train_videos)
    return trainer
