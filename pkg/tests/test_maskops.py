import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from odopal.maskops import (
    apply_mask, part_mask, rasterize_polygon, resize_mask, threshold, to_grayscale,
)
from oracles import rasterize_bruteforce

masks = arrays(bool, st.tuples(st.integers(1, 12), st.integers(1, 12)))


def test_square_exact_pixels():
    m = rasterize_polygon([(0, 0), (10, 0), (10, 10), (0, 10)], (20, 20))
    assert m.sum() == 100
    assert m[:10, :10].all()


def test_right_triangle_matches_oracle():
    tri = [(0, 0), (10, 0), (0, 10)]
    m = rasterize_polygon(tri, (20, 20))
    # brute-force point-in-polygon over all 400 centres gives 45
    assert m.sum() == 45
    assert abs(int(m.sum()) - 50) <= 10
    np.testing.assert_array_equal(m, rasterize_bruteforce(tri, 20, 20))


def test_degenerate_polygon_rejected():
    with pytest.raises(ValueError):
        rasterize_polygon([(0, 0), (1, 1)], (5, 5))


def test_polygon_clipped_to_dims():
    m = rasterize_polygon([(-5, -5), (30, -5), (30, 30), (-5, 30)], (8, 6))
    assert m.shape == (6, 8) and m.all()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-3, 23), st.floats(-3, 18)), min_size=3, max_size=8))
def test_rasterize_matches_bruteforce(poly):
    got = rasterize_polygon(poly, (20, 15))
    want = rasterize_bruteforce(poly, 20, 15)
    # centres lying exactly on an edge may round either way
    for r, c in zip(*np.nonzero(got != want)):
        assert _edge_distance(c + 0.5, r + 0.5, poly) < 1e-9


def _edge_distance(px, py, poly):
    best = np.inf
    for (x0, y0), (x1, y1) in zip(poly, poly[1:] + poly[:1]):
        dx, dy = x1 - x0, y1 - y0
        L = dx * dx + dy * dy
        t = 0.0 if L == 0 else min(1.0, max(0.0, ((px - x0) * dx + (py - y0) * dy) / L))
        best = min(best, np.hypot(px - x0 - t * dx, py - y0 - t * dy))
    return best


@pytest.mark.parametrize("n", [3, 5, 8, 16])
def test_convex_area_within_perimeter_band(n):
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    poly = list(zip(20 + 15 * np.cos(ang), 20 + 15 * np.sin(ang)))
    area = 0.5 * abs(sum(x0 * y1 - x1 * y0 for (x0, y0), (x1, y1) in zip(poly, poly[1:] + poly[:1])))
    perim = sum(np.hypot(x1 - x0, y1 - y0) for (x0, y0), (x1, y1) in zip(poly, poly[1:] + poly[:1]))
    assert abs(rasterize_polygon(poly, (40, 40)).sum() - area) <= perim


def test_resize_identity_and_upsample():
    m = np.array([[True]])
    assert resize_mask(m, (2, 2)).all()
    checker = np.array([[True, False], [False, True]])
    up = resize_mask(checker, (4, 4))
    np.testing.assert_array_equal(up, np.kron(checker, np.ones((2, 2), dtype=bool)))
    np.testing.assert_array_equal(resize_mask(checker, (2, 2)), checker)


def test_resize_index_formula():
    rng = np.random.default_rng(1)
    m = rng.random((7, 5)) > 0.5
    out = resize_mask(m, (11, 3))
    for r in range(3):
        for c in range(11):
            assert out[r, c] == m[(r * 7) // 3, (c * 5) // 11]


@given(masks)
def test_resize_to_own_dims_is_identity(m):
    np.testing.assert_array_equal(resize_mask(m, (m.shape[1], m.shape[0])), m)


def test_grayscale_values():
    assert (to_grayscale(np.ones((3, 3), bool)) == 255).all()
    assert (to_grayscale(np.zeros((3, 3), bool)) == 0).all()
    m = np.array([[True, False], [False, True]])
    np.testing.assert_array_equal(to_grayscale(m), 255 * m.astype(np.uint8))
    assert to_grayscale(m).dtype == np.uint8


def test_threshold_boundary():
    g = np.array([0, 255, 127, 128], dtype=np.uint8)
    np.testing.assert_array_equal(threshold(g), [False, True, False, True])


@given(masks, st.integers(0, 254))
def test_grey_threshold_round_trip(m, t):
    np.testing.assert_array_equal(threshold(to_grayscale(m), t), m)


def test_apply_mask_cases():
    img = np.arange(2 * 2 * 3, dtype=np.uint8).reshape(2, 2, 3)
    np.testing.assert_array_equal(apply_mask(img, np.ones((2, 2), bool)), img.reshape(-1, 3))
    assert apply_mask(img, np.zeros((2, 2), bool)).shape == (0, 3)
    diag = np.array([[True, False], [False, True]])
    np.testing.assert_array_equal(apply_mask(img, diag), [img[0, 0], img[1, 1]])
    with pytest.raises(ValueError):
        apply_mask(img, np.ones((3, 2), bool))


@given(masks)
def test_apply_mask_popcount(m):
    img = np.zeros(m.shape + (3,), dtype=np.uint8)
    assert len(apply_mask(img, m)) == m.sum()


def test_part_mask_resizes_to_image():
    # polygon drawn on a 10x10 prediction grid, image is 20x20
    m = part_mask([[(0, 0), (5, 0), (5, 5), (0, 5)]], (10, 10), (20, 20))
    assert m.shape == (20, 20)
    assert m.sum() == 100 and m[:10, :10].all()
