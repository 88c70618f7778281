"""CLI behavior: pipeline wiring, exit codes, determinism, file formats."""

import json
import shutil

import numpy as np
import pytest
from PIL import Image

from fsnet.cli import main
from fsnet.evaluation import load_rect_file, write_rect_file
from fsnet.weights_io import load_weights

from conftest import make_video


def _write_sequence(root, seed, n_frames):
    root.mkdir(parents=True)
    frames, rects = make_video(seed, n_frames)
    for i, frame in enumerate(frames):
        rgb = np.round(frame).astype(np.uint8).transpose(1, 2, 0)
        Image.fromarray(rgb).save(root / f"{i:04d}.png")
    write_rect_file(root / "groundtruth_rect.txt", rects)
    return root


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    """Two tiny training sequences, one test sequence, config, weights."""
    ws = tmp_path_factory.mktemp("cli")
    _write_sequence(ws / "train_a", 101, 12)
    _write_sequence(ws / "train_b", 202, 12)
    _write_sequence(ws / "test_seq", 303, 8)
    (ws / "config.json").write_text(json.dumps({
        "network": {"conv_channels": [8, 12, 16], "fc_width": 64,
                    "fc_init_sigma": 0.03},
    }))
    (ws / "manifest.json").write_text(json.dumps(
        {"videos": [str(ws / "train_a"), str(ws / "train_b")]}))
    rc = main(["train", "--manifest", str(ws / "manifest.json"),
               "--out", str(ws / "weights.bin"),
               "--config", str(ws / "config.json"),
               "--iters", "60", "--seed", "0"])
    assert rc == 0
    return ws


def _last_json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


# -- argument handling --------------------------------------------------------

def test_unknown_subcommand_exits_2():
    assert main(["frobnicate"]) == 2


def test_unknown_flag_exits_2():
    assert main(["eval", "--bogus", "x"]) == 2


def test_missing_required_flag_exits_2():
    assert main(["track"]) == 2


def test_missing_file_exits_1(tmp_path, capsys):
    assert main(["eval", "--results", str(tmp_path / "nope.txt"),
                 "--gt", str(tmp_path / "nope.txt")]) == 1


# -- train ---------------------------------------------------------------------

def test_train_writes_loadable_weights(workspace):
    tensors = load_weights(workspace / "weights.bin")
    assert tensors["conv3.weight"].shape[0] == 16
    assert {"head0.weight", "head1.weight"} <= set(tensors)


def test_train_is_deterministic_per_seed(workspace, tmp_path, capsys):
    args = ["train", "--manifest", str(workspace / "manifest.json"),
            "--config", str(workspace / "config.json"),
            "--iters", "12", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "w1.bin")]) == 0
    assert main(args + ["--out", str(tmp_path / "w2.bin")]) == 0
    b1 = (tmp_path / "w1.bin").read_bytes()
    b2 = (tmp_path / "w2.bin").read_bytes()
    assert b1 == b2
    assert main(["train", "--manifest", str(workspace / "manifest.json"),
                 "--config", str(workspace / "config.json"),
                 "--iters", "12", "--seed", "8",
                 "--out", str(tmp_path / "w3.bin")]) == 0
    assert (tmp_path / "w3.bin").read_bytes() != b1
    capsys.readouterr()


def test_train_empty_manifest_fails(tmp_path, capsys):
    (tmp_path / "m.json").write_text("[]")
    assert main(["train", "--manifest", str(tmp_path / "m.json"),
                 "--out", str(tmp_path / "w.bin")]) == 1


# -- track ----------------------------------------------------------------------

def test_track_writes_results_and_log(workspace, tmp_path, capsys):
    out = tmp_path / "results.txt"
    log = tmp_path / "log.csv"
    rc = main(["track", "--weights", str(workspace / "weights.bin"),
               "--sequence", str(workspace / "test_seq"),
               "--config", str(workspace / "config.json"),
               "--out", str(out), "--log", str(log), "--seed", "0"])
    assert rc == 0
    info = _last_json(capsys)
    assert info["frames"] == 8
    rects = load_rect_file(out)
    assert len(rects) == 8
    lines = log.read_text().splitlines()
    assert lines[0] == "frame,best_score,loss,iterations"
    assert len(lines) == 9
    first = lines[1].split(",")
    assert first[0] == "0" and first[1] == ""    # no score on the init frame
    assert int(first[3]) >= 1


def test_track_is_deterministic_per_seed(workspace, tmp_path, capsys):
    def run(tag):
        out = tmp_path / f"r{tag}.txt"
        log = tmp_path / f"l{tag}.csv"
        assert main(["track", "--weights", str(workspace / "weights.bin"),
                     "--sequence", str(workspace / "test_seq"),
                     "--config", str(workspace / "config.json"),
                     "--out", str(out), "--log", str(log),
                     "--seed", "3"]) == 0
        return out.read_bytes(), log.read_bytes()

    a, b = run("a"), run("b")
    assert a == b
    capsys.readouterr()


def test_track_rejects_mismatched_config(workspace, tmp_path, capsys):
    # default network geometry does not fit the desk-sized weights
    rc = main(["track", "--weights", str(workspace / "weights.bin"),
               "--sequence", str(workspace / "test_seq"),
               "--out", str(tmp_path / "r.txt")])
    assert rc == 1
    assert "shape" in capsys.readouterr().err


# -- select-features and masked tracking ------------------------------------------

def test_select_features_writes_mask(workspace, tmp_path, capsys):
    mask_p = tmp_path / "mask.json"
    pruned_p = tmp_path / "pruned.bin"
    rc = main(["select-features", "--weights", str(workspace / "weights.bin"),
               "--image", str(workspace / "test_seq" / "0000.png"),
               "--config", str(workspace / "config.json"),
               "--keep", "6", "--bins", "10",
               "--out", str(mask_p), "--pruned-weights", str(pruned_p)])
    assert rc == 0
    mask = json.loads(mask_p.read_text())
    assert mask["n_channels"] == 16
    assert len(mask["keep"]) == 6
    assert len(mask["provenance"]) == 16
    assert set(mask["provenance"]) <= {"kept", "zero_map", "high_redundancy"}
    pruned = load_weights(pruned_p)
    assert pruned["conv3.weight"].shape[0] == 6
    assert pruned["fc1.weight"].shape[1] == 6 * 9


def test_track_with_mask(workspace, tmp_path, capsys):
    mask_p = tmp_path / "mask.json"
    assert main(["select-features", "--weights",
                 str(workspace / "weights.bin"),
                 "--image", str(workspace / "test_seq" / "0000.png"),
                 "--config", str(workspace / "config.json"),
                 "--keep", "8", "--out", str(mask_p)]) == 0
    out = tmp_path / "masked.txt"
    rc = main(["track", "--weights", str(workspace / "weights.bin"),
               "--sequence", str(workspace / "test_seq"),
               "--config", str(workspace / "config.json"),
               "--mask", str(mask_p), "--out", str(out), "--seed", "0"])
    assert rc == 0
    assert len(load_rect_file(out)) == 8
    capsys.readouterr()


# -- eval --------------------------------------------------------------------------

def test_eval_identical_files_scores_one(workspace, tmp_path, capsys):
    gt = workspace / "test_seq" / "groundtruth_rect.txt"
    res = tmp_path / "results.txt"
    shutil.copy(gt, res)
    curves = tmp_path / "curves.csv"
    rc = main(["eval", "--results", str(res), "--gt",
               str(workspace / "test_seq"), "--out", str(curves)])
    assert rc == 0
    info = _last_json(capsys)
    assert info["auc"] == 1.0
    assert info["precision_at_20"] == 1.0
    lines = curves.read_text().splitlines()
    assert lines[0] == "curve,threshold,value"
    assert len(lines) == 1 + 51 + 21


def test_eval_row_mismatch_exits_1(workspace, tmp_path, capsys):
    gt = workspace / "test_seq" / "groundtruth_rect.txt"
    res = tmp_path / "short.txt"
    res.write_text("".join(gt.read_text().splitlines(True)[:3]))
    assert main(["eval", "--results", str(res),
                 "--gt", str(gt)]) == 1
    assert "3 result rows" in capsys.readouterr().err


# -- benchmark and gradcheck ----------------------------------------------------------

def test_benchmark_roi_reports_continuity(tmp_path, capsys):
    sweep = tmp_path / "sweep.csv"
    rc = main(["benchmark-roi", "--size", "12", "--channels", "4",
               "--rois", "8", "--reps", "2", "--out", str(sweep)])
    assert rc == 0
    info = _last_json(capsys)
    assert info["align_changes"] == 19
    assert info["pool_changes"] < 19
    assert info["align_seconds_per_call"] > 0
    assert len(sweep.read_text().splitlines()) == 20


def test_gradcheck_cli_passes(capsys):
    assert main(["gradcheck", "--seed", "0"]) == 0
    info = _last_json(capsys)
    assert info["passed"] is True
    assert info["max_rel_err"] < 1e-4
