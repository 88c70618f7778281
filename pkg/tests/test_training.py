"""Multi-domain trainer: scopes, branch isolation, determinism, learning."""

import numpy as np
import numpy.testing as npt
import pytest

from fsnet.network import ALL_LAYERS, FC_ONLY, NetworkConfig
from fsnet.rect import Rect
from fsnet.training import MultiDomainTrainer, VideoDomain

TINY_NET = NetworkConfig(conv_channels=(8, 12, 16), fc_width=64,
                         fc_init_sigma=0.03)


def _fit(videos, **kw):
    kw.setdefault("network_config", TINY_NET)
    kw.setdefault("iterations", 1)
    kw.setdefault("lr", 1e-3)
    kw.setdefault("random_state", 0)
    return MultiDomainTrainer(**kw).fit(videos)


def test_video_domain_validates_lengths():
    frame = np.zeros((3, 40, 40))
    with pytest.raises(ValueError, match="1 frames but 2"):
        VideoDomain([frame], [Rect(1, 1, 5, 5), Rect(2, 2, 5, 5)])
    with pytest.raises(ValueError, match="no frames"):
        VideoDomain([], [])


def test_fit_rejects_empty_video_list():
    with pytest.raises(ValueError, match="at least one"):
        MultiDomainTrainer().fit([])


def test_fit_rejects_unknown_scope(tiny_videos):
    with pytest.raises(ValueError, match="backward_scope"):
        _fit(tiny_videos, backward_scope="everything")


def test_one_head_per_domain_and_history_length(tiny_videos):
    tr = _fit(tiny_videos, iterations=4)
    names = set(tr.params_.tensors)
    assert {"head0.weight", "head0.bias", "head1.weight",
            "head1.bias"} <= names
    assert "head2.weight" not in names
    assert tr.n_domains_ == 2
    assert len(tr.loss_history_) == 4


def test_first_iteration_updates_only_domain0_head(tiny_videos):
    init = _fit(tiny_videos, iterations=0)
    one = _fit(tiny_videos, iterations=1)
    # domain 1's branch must be bit-identical to its initialization
    for name in ("head1.weight", "head1.bias"):
        npt.assert_array_equal(one.params_.tensors[name],
                               init.params_.tensors[name])
    assert not np.array_equal(one.params_.tensors["head0.weight"],
                              init.params_.tensors["head0.weight"])
    assert not np.array_equal(one.params_.tensors["conv1.weight"],
                              init.params_.tensors["conv1.weight"])


def test_round_robin_reaches_every_domain(tiny_videos):
    init = _fit(tiny_videos, iterations=0)
    two = _fit(tiny_videos, iterations=2)
    for name in ("head0.weight", "head1.weight"):
        assert not np.array_equal(two.params_.tensors[name],
                                  init.params_.tensors[name])


def test_fc_only_scope_freezes_conv_layers(tiny_videos):
    init = _fit(tiny_videos, iterations=0)
    tr = _fit(tiny_videos, iterations=2, backward_scope=FC_ONLY)
    for name, arr in tr.params_.tensors.items():
        if name.startswith("conv"):
            npt.assert_array_equal(arr, init.params_.tensors[name])
    assert not np.array_equal(tr.params_.tensors["fc1.weight"],
                              init.params_.tensors["fc1.weight"])


def test_fit_is_deterministic_per_seed(tiny_videos):
    a = _fit(tiny_videos, iterations=2)
    b = _fit(tiny_videos, iterations=2)
    assert set(a.params_.tensors) == set(b.params_.tensors)
    for name, arr in a.params_.tensors.items():
        npt.assert_array_equal(arr, b.params_.tensors[name])
    c = _fit(tiny_videos, iterations=2, random_state=1)
    assert not np.array_equal(c.params_.tensors["fc1.weight"],
                              a.params_.tensors["fc1.weight"])


def test_training_learns_the_desk_task(trained):
    h = trained.loss_history_
    assert len(h) == 300
    assert np.mean(h[-5:]) < 0.15
    assert np.mean(h[-5:]) < h[0] * 0.25


def test_single_domain_fit_runs(tiny_videos):
    tr = _fit(tiny_videos[:1], iterations=3, backward_scope=ALL_LAYERS)
    assert tr.n_domains_ == 1
    assert all(np.isfinite(v) for v in tr.loss_history_)
