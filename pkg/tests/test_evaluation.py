"""Sequence IO conventions and metric curves."""

import numpy as np
import numpy.testing as npt
import pytest
from PIL import Image

from fsnet.evaluation import (auc, find_frame_files, find_gt_file,
                              load_image, load_rect_file, load_sequence,
                              parse_rect_line, precision_at, precision_curve,
                              success_curve, write_rect_file)
from fsnet.rect import Rect


# -- parsing ----------------------------------------------------------------

@pytest.mark.parametrize("line", [
    "10,20,30,40",
    "10 20 30 40",
    "10\t20\t30\t40",
    "10, 20\t30 40",
    "  10,20,30,40  ",
])
def test_parse_separators(line):
    r = parse_rect_line(line)
    assert (r.x, r.y, r.w, r.h) == (9.0, 19.0, 30.0, 40.0)


def test_parse_converts_one_based_floats():
    r = parse_rect_line("10.5,20.25,3.5,4.0")
    assert (r.x, r.y, r.w, r.h) == (9.5, 19.25, 3.5, 4.0)


@pytest.mark.parametrize("line", ["1,2,3", "1,2,3,4,5", "a,b,c,d", ""])
def test_parse_rejects_malformed(line):
    with pytest.raises(ValueError):
        parse_rect_line(line)


def test_load_rect_file_reports_path_and_line(tmp_path):
    p = tmp_path / "gt.txt"
    p.write_text("5,5,10,10\n5,5,10\n")
    with pytest.raises(ValueError, match=r"gt\.txt:2:"):
        load_rect_file(p)


def test_load_rect_file_skips_blank_lines(tmp_path):
    p = tmp_path / "gt.txt"
    p.write_text("5,5,10,10\n\n6,6,10,10\n\n")
    assert len(load_rect_file(p)) == 2


def test_load_rect_file_rejects_empty(tmp_path):
    p = tmp_path / "gt.txt"
    p.write_text("\n\n")
    with pytest.raises(ValueError, match="no rects"):
        load_rect_file(p)


def test_write_load_round_trip_is_exact(tmp_path):
    # dyadic coordinates survive the 1-based disk convention bit-exactly
    rects = [Rect(0.0, 0.5, 12.25, 8.0), Rect(31.5, 7.75, 3.0, 4.5)]
    p = tmp_path / "results.txt"
    write_rect_file(p, rects)
    back = load_rect_file(p)
    assert back == rects
    first = p.read_text().splitlines()[0]
    assert first == "1.0,1.5,12.25,8.0"


# -- images and sequence directories ----------------------------------------

def _save_png(path, h=8, w=10):
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    rgb[1, 3] = (200, 50, 25)
    Image.fromarray(rgb).save(path)


def test_load_image_is_chw_float(tmp_path):
    p = tmp_path / "f.png"
    _save_png(p)
    arr = load_image(p)
    assert arr.shape == (3, 8, 10)
    assert arr.dtype == np.float64
    npt.assert_array_equal(arr[:, 1, 3], [200.0, 50.0, 25.0])


def test_load_image_promotes_grayscale(tmp_path):
    p = tmp_path / "g.png"
    Image.fromarray(np.full((4, 5), 77, dtype=np.uint8), mode="L").save(p)
    arr = load_image(p)
    assert arr.shape == (3, 4, 5)
    npt.assert_array_equal(arr, np.full((3, 4, 5), 77.0))


def test_find_frame_files_prefers_img_subdir_and_sorts(tmp_path):
    (tmp_path / "img").mkdir()
    for name in ("0002.png", "0001.png", "0003.png"):
        _save_png(tmp_path / "img" / name)
    _save_png(tmp_path / "stray.png")
    files = find_frame_files(tmp_path)
    assert [f.name for f in files] == ["0001.png", "0002.png", "0003.png"]
    assert files[0].parent.name == "img"


def test_find_frame_files_ignores_other_suffixes(tmp_path):
    _save_png(tmp_path / "a.png")
    (tmp_path / "notes.txt").write_text("x")
    assert [f.name for f in find_frame_files(tmp_path)] == ["a.png"]


def test_find_frame_files_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        find_frame_files(tmp_path)


def test_find_gt_file_order(tmp_path):
    (tmp_path / "gt.txt").write_text("1,1,2,2\n")
    assert find_gt_file(tmp_path).name == "gt.txt"
    (tmp_path / "groundtruth_rect.txt").write_text("1,1,2,2\n")
    assert find_gt_file(tmp_path).name == "groundtruth_rect.txt"


def test_load_sequence(tmp_path):
    (tmp_path / "img").mkdir()
    for i in range(3):
        _save_png(tmp_path / "img" / f"{i:04d}.png")
    (tmp_path / "groundtruth_rect.txt").write_text(
        "1,1,4,4\n2,2,4,4\n3,3,4,4\n")
    seq = load_sequence(tmp_path)
    assert len(seq) == 3
    assert seq.rects[0] == Rect(0, 0, 4, 4)
    assert seq.frame(2).shape == (3, 8, 10)
    assert len(list(seq.frames())) == 3


def test_sequence_count_mismatch(tmp_path):
    (tmp_path / "img").mkdir()
    for i in range(2):
        _save_png(tmp_path / "img" / f"{i:04d}.png")
    (tmp_path / "groundtruth_rect.txt").write_text("1,1,4,4\n")
    with pytest.raises(ValueError, match="2 frames but 1"):
        load_sequence(tmp_path)


# -- metric curves -----------------------------------------------------------

def test_perfect_tracking_gives_unit_curves():
    rects = [Rect(i, 2 * i, 10, 12) for i in range(5)]
    prec = precision_curve(rects, rects)
    succ = success_curve(rects, rects)
    assert prec.shape == (51,)
    assert succ.shape == (21,)
    npt.assert_array_equal(prec, np.ones(51))
    npt.assert_array_equal(succ, np.ones(21))
    assert auc(succ) == 1.0
    assert precision_at(prec, 20) == 1.0


def test_success_curve_counts_iou_thresholds():
    gt = [Rect(0, 0, 10, 10)] * 3
    pred = [Rect(0, 0, 10, 10),   # IoU 1
            Rect(5, 0, 10, 10),   # IoU 50/150 = 1/3
            Rect(20, 20, 10, 10)]  # IoU 0
    succ = success_curve(pred, gt)
    assert succ[0] == 1.0                       # IoU >= 0 everywhere
    npt.assert_allclose(succ[1], 2 / 3)          # t = 0.05
    npt.assert_allclose(succ[6], 2 / 3)          # t = 0.30 < 1/3
    npt.assert_allclose(succ[7], 1 / 3)          # t = 0.35 > 1/3
    npt.assert_allclose(succ[20], 1 / 3)         # exact match only
    npt.assert_allclose(auc(succ), (1 + 6 * (2 / 3) + 14 * (1 / 3)) / 21)


def test_precision_curve_counts_center_errors():
    gt = [Rect(0, 0, 10, 10)] * 3
    pred = [Rect(0, 0, 10, 10),     # error 0
            Rect(10, 0, 10, 10),    # error 10
            Rect(0, 30, 10, 10)]    # error 30
    prec = precision_curve(pred, gt)
    npt.assert_allclose(prec[0], 1 / 3)
    npt.assert_allclose(prec[9], 1 / 3)
    npt.assert_allclose(prec[10], 2 / 3)   # <= is inclusive
    npt.assert_allclose(prec[29], 2 / 3)
    npt.assert_allclose(prec[30], 1.0)
    npt.assert_allclose(precision_at(prec), 2 / 3)


def test_curves_are_monotone():
    rng = np.random.default_rng(3)
    gt, pred = [], []
    for _ in range(40):
        x, y = rng.uniform(0, 50, 2)
        gt.append(Rect(x, y, 10 + rng.uniform(0, 5), 10 + rng.uniform(0, 5)))
        pred.append(Rect(x + rng.normal(0, 8), y + rng.normal(0, 8),
                         10 + rng.uniform(0, 5), 10 + rng.uniform(0, 5)))
    prec = precision_curve(pred, gt)
    succ = success_curve(pred, gt)
    assert np.all(np.diff(prec) >= 0)
    assert np.all(np.diff(succ) <= 0)


def test_curves_reject_mismatch_and_empty():
    r = [Rect(0, 0, 5, 5)]
    with pytest.raises(ValueError):
        precision_curve(r, r * 2)
    with pytest.raises(ValueError):
        success_curve([], [])
