import colorsys
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odopal.annot import BodyPart
from odopal.colour import (
    HsvTriple, build_palette, derive_seed, hsv_to_rgb, kmeans, mean_part_colour,
    render_palette_panel, rgb_to_hsv, rgb_to_hsv_array,
)
from oracles import kmeans_optimum

rgb8 = st.tuples(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))


# --- k-means --------------------------------------------------------------

def test_identical_points_single_cluster():
    res = kmeans(np.full((20, 3), 77.0), 3, seed=1)
    assert np.count_nonzero(np.bincount(res.labels, minlength=3)) == 1
    assert res.inertia == 0.0
    assert len(build_palette(np.full((20, 3), 77), 3)) == 1


def test_black_white_split():
    pts = np.array([[0, 0, 0]] * 10 + [[255, 255, 255]] * 10, dtype=float)
    res = kmeans(pts, 2, seed=0)
    assert sorted(map(tuple, res.centroids)) == [(0, 0, 0), (255, 255, 255)]
    assert res.inertia == 0.0
    assert kmeans_optimum(pts[[0, 1, 10, 11]], 2) == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_inertia_recomputed_and_monotone(seed):
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, 256, (300, 3)).astype(float)
    res = kmeans(pts, 5, seed=seed)
    direct = sum(float(((p - res.centroids[l]) ** 2).sum()) for p, l in zip(pts, res.labels))
    assert res.inertia == pytest.approx(direct, rel=1e-12)
    assert all(b <= a * (1 + 1e-12) for a, b in zip(res.inertia_history, res.inertia_history[1:]))
    for j in np.unique(res.labels):
        np.testing.assert_allclose(res.centroids[j], pts[res.labels == j].mean(axis=0))


def test_kmeans_errors():
    with pytest.raises(ValueError):
        kmeans(np.zeros((3, 3)), 0)
    with pytest.raises(ValueError):
        kmeans(np.zeros((0, 3)), 2)


def test_kmeans_seed_reproducible():
    pts = np.random.default_rng(0).integers(0, 256, (200, 3))
    a, b = kmeans(pts, 4, seed=9), kmeans(pts, 4, seed=9)
    np.testing.assert_array_equal(a.labels, b.labels)


@pytest.mark.parametrize("seed", range(40))
def test_small_instances_globally_optimal(seed):
    rng = np.random.default_rng(1000 + seed)
    n, k = int(rng.integers(1, 9)), int(rng.integers(1, 4))
    pts = rng.integers(0, 256, (n, 3)).astype(float)
    assert abs(kmeans(pts, k, seed=seed).inertia - kmeans_optimum(pts, k)) <= 1e-9


# --- palettes -------------------------------------------------------------

def test_uniform_red_palette():
    pal = build_palette(np.tile([255, 0, 0], (50, 1)))
    assert pal.entries == (((255, 0, 0), 1.0),)


def test_half_black_half_white_tie_order():
    px = np.array([[0, 0, 0]] * 8 + [[255, 255, 255]] * 8)
    pal = build_palette(px)
    assert pal.entries == (((0, 0, 0), 0.5), ((255, 255, 255), 0.5))


def test_default_k_bounds_entries():
    px = np.random.default_rng(2).integers(0, 256, (400, 3))
    pal = build_palette(px)
    assert 1 <= len(pal) <= 5
    assert sum(pal.frequencies) == pytest.approx(1.0, abs=1e-9)


def test_empty_pixels_rejected():
    with pytest.raises(ValueError):
        build_palette(np.zeros((0, 3)))


@settings(max_examples=40, deadline=None)
@given(st.lists(rgb8, min_size=1, max_size=60), st.integers(1, 6), st.integers(0, 1000))
def test_palette_laws(pixels, k, seed):
    pal = build_palette(np.array(pixels), k, seed=seed)
    assert len(pal) <= k
    assert abs(sum(pal.frequencies) - 1) <= 1e-9
    keys = [(-f, (r << 16) | (g << 8) | b) for (r, g, b), f in pal.entries]
    assert keys == sorted(keys)


# --- HSV ------------------------------------------------------------------

@pytest.mark.parametrize("rgb, hsv", [
    ((255, 0, 0), (0, 1, 1)),
    ((128, 128, 128), (0, 0, 128 / 255)),
    ((0, 255, 255), (180, 1, 1)),
])
def test_rgb_to_hsv_examples(rgb, hsv):
    got = rgb_to_hsv(rgb)
    assert (got.h, got.s, got.v) == pytest.approx(hsv, abs=1e-12)


def test_cube_corners_exact():
    expected = {
        (0, 0, 0): (0, 0, 0), (255, 255, 255): (0, 0, 1), (255, 0, 0): (0, 1, 1),
        (0, 255, 0): (120, 1, 1), (0, 0, 255): (240, 1, 1), (255, 255, 0): (60, 1, 1),
        (0, 255, 255): (180, 1, 1), (255, 0, 255): (300, 1, 1),
    }
    for rgb, hsv in expected.items():
        got = rgb_to_hsv(rgb)
        assert (got.h, got.s, got.v) == hsv


@given(rgb8)
def test_hsv_matches_colorsys_and_round_trips(rgb):
    got = rgb_to_hsv(rgb)
    h, s, v = colorsys.rgb_to_hsv(*(c / 255 for c in rgb))
    assert got.s == pytest.approx(s, abs=1e-12) and got.v == pytest.approx(v, abs=1e-12)
    if got.s > 0:
        assert min(abs(got.h - 360 * h), 360 - abs(got.h - 360 * h)) < 1e-9
    else:
        assert got.h == 0
    assert 0 <= got.h < 360
    back = hsv_to_rgb(got)
    assert max(abs(a - b) for a, b in zip(back, rgb)) <= 1.0


def test_array_matches_scalar():
    px = np.array(list(itertools.product(range(0, 256, 51), repeat=3)))
    arr = rgb_to_hsv_array(px)
    for row, p in zip(arr, px):
        t = rgb_to_hsv(p)
        assert tuple(row) == (t.h, t.s, t.v)


def test_8bit_export():
    assert HsvTriple(300.0, 0.5, 1.0).to_8bit() == (150.0, 127.5, 255.0)


# --- mean colour ----------------------------------------------------------

def test_mean_uniform_red():
    st_ = mean_part_colour(BodyPart.HEAD, np.tile([255, 0, 0], (10, 1)))
    assert st_.mean_rgb == (255, 0, 0)
    assert (st_.mean_hsv.h, st_.mean_hsv.s, st_.mean_hsv.v) == (0, 1, 1)
    assert st_.pixel_count == 10


def test_mean_black_white():
    st_ = mean_part_colour(BodyPart.THORAX, [[0, 0, 0], [255, 255, 255]])
    assert st_.mean_hsv.v == 0.5 and st_.mean_hsv.s == 0 and st_.mean_hsv.h == 0


def test_mean_hue_wraps():
    # hue 350 and 10 with s = v = 1
    a = hsv_to_rgb(HsvTriple(350, 1, 1))
    b = hsv_to_rgb(HsvTriple(10, 1, 1))
    st_ = mean_part_colour(BodyPart.ABDOMEN, [a, b])
    assert min(st_.mean_hsv.h, 360 - st_.mean_hsv.h) < 1e-9


def test_mean_empty_rejected():
    with pytest.raises(ValueError):
        mean_part_colour(BodyPart.HEAD, [])


@settings(max_examples=40)
@given(st.lists(rgb8, min_size=1, max_size=30), st.lists(rgb8, min_size=1, max_size=30), st.randoms())
def test_mean_v_permutation_and_mixture(a, b, rnd):
    va = mean_part_colour(BodyPart.HEAD, a).mean_hsv.v
    vb = mean_part_colour(BodyPart.HEAD, b).mean_hsv.v
    mixed = a + b
    rnd.shuffle(mixed)
    vm = mean_part_colour(BodyPart.HEAD, mixed).mean_hsv.v
    assert vm == pytest.approx((len(a) * va + len(b) * vb) / (len(a) + len(b)), abs=1e-12)


def test_derive_seed_stable():
    assert derive_seed(5, "img", BodyPart.HEAD) == derive_seed(5, "img", BodyPart.HEAD)
    assert derive_seed(5, "img", BodyPart.HEAD) != derive_seed(5, "img", BodyPart.THORAX)


# --- panels ---------------------------------------------------------------

def _palette(entries):
    from odopal.colour import Palette
    return Palette(tuple(entries))


def test_panel_zero_parts_is_image():
    img = np.random.default_rng(0).integers(0, 256, (10, 12, 3), dtype=np.uint8)
    np.testing.assert_array_equal(render_palette_panel(img, []), img)


def test_panel_single_colour_bar():
    img = np.zeros((10, 100, 3), np.uint8)
    mask = np.zeros((10, 100), bool)
    mask[2:5, 2:5] = True
    img[mask] = (9, 8, 7)
    panel = render_palette_panel(img, [(BodyPart.HEAD, mask, _palette([((1, 2, 3), 1.0)]))])
    assert panel.shape == (20, 200, 3)
    assert (panel[10:20, 100:] == (1, 2, 3)).all()
    np.testing.assert_array_equal(panel[10:20, :100][mask], img[mask])
    assert (panel[10:20, :100][~mask] == 0).all()
    np.testing.assert_array_equal(panel[:10, :100], img)


def test_panel_segment_widths():
    img = np.zeros((4, 100, 3), np.uint8)
    mask = np.ones((4, 100), bool)
    panel = render_palette_panel(img, [(BodyPart.HEAD, mask, _palette([((200, 0, 0), 0.6), ((0, 0, 200), 0.4)]))])
    bar = panel[4, 100:]
    assert (bar[:60] == (200, 0, 0)).all() and (bar[60:] == (0, 0, 200)).all()


def test_panel_dims_mismatch():
    with pytest.raises(ValueError):
        render_palette_panel(np.zeros((4, 4, 3), np.uint8),
                             [(BodyPart.HEAD, np.ones((3, 4), bool), _palette([((0, 0, 0), 1.0)]))])
