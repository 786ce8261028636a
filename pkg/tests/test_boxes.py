import numpy as np
import pytest

from relact.boxes import (
    Box,
    SegTarget,
    box_giou,
    box_iou,
    box_l1,
    downsample_target,
    rasterize_boxes,
)


def _rand_box(rng):
    w = rng.uniform(0.05, 0.6)
    h = rng.uniform(0.05, 0.6)
    cx = rng.uniform(w / 2, 1 - w / 2)
    cy = rng.uniform(h / 2, 1 - h / 2)
    return Box(cx, cy, w, h)


def test_iou_identical_and_disjoint():
    a = Box(0.3, 0.3, 0.2, 0.2)
    assert box_iou(a, a) == 1.0
    assert box_iou(a, Box(0.8, 0.8, 0.2, 0.2)) == 0.0


def test_iou_hand_case_one_third():
    # unit boxes centered at (0.5, 0.5) and (1.0, 0.5): inter 0.5, union 1.5
    a = Box(0.5, 0.5, 1.0, 1.0)
    b = Box(1.0, 0.5, 1.0, 1.0)
    assert abs(box_iou(a, b) - 1 / 3) < 1e-12


def test_giou_identical():
    a = Box(0.4, 0.6, 0.3, 0.2)
    assert box_giou(a, a) == 1.0


def test_giou_separated_unit_boxes():
    # hull area 3, union 2 -> 0 - 1/3
    a = Box(0.5, 0.5, 1.0, 1.0)
    b = Box(2.5, 0.5, 1.0, 1.0)
    assert abs(box_giou(a, b) - (-1 / 3)) < 1e-12


def test_giou_overlap_case_closed_form():
    # hull equals union's area here, so giou == iou == 1/3
    a = Box(0.5, 0.5, 1.0, 1.0)
    b = Box(1.0, 0.5, 1.0, 1.0)
    assert abs(box_giou(a, b) - 1 / 3) < 1e-12


def test_l1_cases():
    a = Box(0.5, 0.5, 0.2, 0.2)
    assert box_l1(a, a) == 0.0
    assert abs(box_l1(a, Box(0.6, 0.5, 0.2, 0.2)) - 0.1) < 1e-12
    assert abs(box_l1(a, Box(0.4, 0.6, 0.1, 0.3)) - 0.4) < 1e-12


def test_iou_symmetry_and_range_random():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        a, b = _rand_box(rng), _rand_box(rng)
        iou = box_iou(a, b)
        assert iou == box_iou(b, a)
        assert 0.0 <= iou <= 1.0
        assert box_giou(a, b) <= iou + 1e-12


def test_degenerate_box_rejected():
    with pytest.raises(ValueError, match="degenerate"):
        Box(0.5, 0.5, 0.0, 0.2)
    with pytest.raises(ValueError, match="degenerate"):
        Box(0.5, 0.5, 0.2, -0.1)


def test_validate_normalized():
    Box(0.5, 0.5, 1.0, 1.0).validate_normalized()
    with pytest.raises(ValueError, match="corners"):
        Box(0.9, 0.5, 0.4, 0.2).validate_normalized()
    with pytest.raises(ValueError, match="center"):
        Box(1.5, 0.5, 0.2, 0.2).validate_normalized()


def test_rasterize_full_cover():
    t = rasterize_boxes([Box(0.5, 0.5, 1.0, 1.0)], [3], 4, 4, 5)
    assert np.all(t.grid[:, :, 3] == 1.0)
    assert np.all(t.grid[:, :, 5] == 0.0)
    t.validate()


def test_rasterize_empty_scene():
    t = rasterize_boxes([], [], 4, 6, 5)
    assert np.all(t.grid[:, :, 5] == 1.0)
    assert np.all(t.grid[:, :, :5] == 0.0)
    t.validate()


def test_rasterize_overlap_multi_hot():
    a = Box(0.4, 0.5, 0.5, 0.8)
    b = Box(0.6, 0.5, 0.5, 0.8)
    t = rasterize_boxes([a, b], [1, 2], 8, 8, 4)
    both = (t.grid[:, :, 1] == 1.0) & (t.grid[:, :, 2] == 1.0)
    assert both.any()
    assert np.all(t.grid[both][:, 4] == 0.0)
    t.validate()


def test_rasterize_label_out_of_range():
    with pytest.raises(ValueError, match="label"):
        rasterize_boxes([Box(0.5, 0.5, 0.2, 0.2)], [4], 4, 4, 4)


def test_rasterize_matches_point_in_box_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = rng.integers(0, 5)
        boxes = [_rand_box(rng) for _ in range(n)]
        labels = rng.integers(0, 6, size=n).tolist()
        t = rasterize_boxes(boxes, labels, 16, 16, 6)
        for i in range(16):
            for j in range(16):
                cy, cx = (i + 0.5) / 16, (j + 0.5) / 16
                want = np.zeros(7)
                for box, lab in zip(boxes, labels):
                    x1, y1, x2, y2 = box.corners()
                    if max(x1, 0) <= cx <= min(x2, 1) and max(y1, 0) <= cy <= min(y2, 1):
                        want[lab] = 1.0
                want[6] = 0.0 if want[:6].any() else 1.0
                assert np.array_equal(t.grid[i, j], want)


def test_downsample_all_background():
    t = rasterize_boxes([], [], 8, 8, 3)
    d = downsample_target(t, 2, 2)
    assert np.all(d.grid[:, :, 3] == 1.0)
    d.validate()


def test_downsample_single_positive_cell():
    grid = np.zeros((4, 4, 3))
    grid[1, 2, 0] = 1.0
    grid[:, :, 2] = ~grid[:, :, :2].any(axis=2)
    d = downsample_target(SegTarget(grid), 2, 2)
    assert d.grid[:, :, 0].sum() == 1.0
    assert d.grid[0, 1, 0] == 1.0
    d.validate()


def test_downsample_matches_block_or_oracle():
    rng = np.random.default_rng(2)
    for _ in range(20):
        grid = np.zeros((8, 8, 4))
        grid[:, :, :3] = rng.integers(0, 2, size=(8, 8, 3))
        grid[:, :, 3] = ~grid[:, :, :3].any(axis=2)
        d = downsample_target(SegTarget(grid), 4, 4)
        for i in range(4):
            for j in range(4):
                block = grid[2 * i:2 * i + 2, 2 * j:2 * j + 2, :3]
                want = block.any(axis=(0, 1)).astype(float)
                assert np.array_equal(d.grid[i, j, :3], want)
                assert d.grid[i, j, 3] == (0.0 if want.any() else 1.0)


def test_downsample_preserves_presence():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = rng.integers(1, 4)
        boxes = [_rand_box(rng) for _ in range(n)]
        labels = rng.integers(0, 4, size=n).tolist()
        t = rasterize_boxes(boxes, labels, 16, 16, 4)
        d = downsample_target(t, 4, 4)
        present_fine = t.grid[:, :, :4].any(axis=(0, 1))
        present_coarse = d.grid[:, :, :4].any(axis=(0, 1))
        assert np.array_equal(present_fine, present_coarse)


def test_downsample_rejects_upsampling():
    t = rasterize_boxes([], [], 4, 4, 2)
    with pytest.raises(ValueError, match="upsample"):
        downsample_target(t, 8, 4)
