import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odopal.annot import BodyPart
from odopal.stats import (
    AnalysisRow, correlation_rows, group_and_correlate, pearson, rank_average, remap_hour,
    spearman, summarize, t_cdf_two_sided, unmap_hour,
)
from oracles import pearson_direct, ranks_bruteforce, t_two_sided_quad


# --- hours ----------------------------------------------------------------

@pytest.mark.parametrize("h, expected", [(20, 0), (23, 3), (0, 4), (19, 23)])
def test_remap_hour(h, expected):
    assert remap_hour(h) == expected


def test_remap_bijection_and_inverse():
    assert sorted(remap_hour(h) for h in range(24)) == list(range(24))
    assert all(unmap_hour(remap_hour(h)) == h for h in range(24))


@pytest.mark.parametrize("bad", [-1, 24, 3.5])
def test_remap_rejects(bad):
    with pytest.raises(ValueError):
        remap_hour(bad)


# --- t tail ---------------------------------------------------------------

def test_t_symmetry_and_cauchy():
    assert t_cdf_two_sided(0.0, 7) == 1.0
    assert abs(t_cdf_two_sided(1.0, 1) - 0.5) <= 1e-10
    assert t_cdf_two_sided(2.228, 10) == pytest.approx(0.050, abs=1e-3)
    assert t_cdf_two_sided(2.228, 10) == pytest.approx(t_two_sided_quad(2.228, 10), abs=1e-10)


def test_t_rejects_zero_df():
    with pytest.raises(ValueError):
        t_cdf_two_sided(1.0, 0)


@pytest.mark.parametrize("seed", range(10))
def test_t_against_quadrature(seed):
    rng = np.random.default_rng(seed)
    df = int(rng.integers(1, 200))
    t = float(rng.normal() * 4)
    assert t_cdf_two_sided(t, df) == pytest.approx(t_two_sided_quad(t, df), abs=1e-10)


# --- correlation ----------------------------------------------------------

def test_pearson_exact_lines():
    x = [1, 2, 3, 4, 5]
    r, p = pearson(x, [2 * v + 1 for v in x])
    assert r == pytest.approx(1.0, abs=1e-15) and p == pytest.approx(0.0, abs=1e-12)
    r, _ = pearson(x, [-v for v in x])
    assert r == pytest.approx(-1.0, abs=1e-15)


def test_pearson_small_case_oracle():
    x, y = [1, 2, 3, 4, 5], [2, 1, 4, 3, 5]
    r, p = pearson(x, y)
    # covariance formula gives 0.8; quadrature of the t density (df=3) gives the p-value
    assert r == pytest.approx(pearson_direct(x, y), abs=1e-15) == pytest.approx(0.8)
    assert p == pytest.approx(0.10408803866182781, abs=1e-10)
    assert p == pytest.approx(t_two_sided_quad(r * math.sqrt(3 / (1 - r * r)), 3), abs=1e-10)


@pytest.mark.parametrize("x, y", [([1, 2], [1, 2]), ([1, 2, 3], [1, 2]), ([1, 1, 1], [1, 2, 3]), ([1, 2, 3], [4, 4, 4])])
def test_pearson_errors(x, y):
    with pytest.raises(ValueError):
        pearson(x, y)


def test_spearman_monotone_and_reversed():
    x = [-2, -1, 0, 1, 2]
    assert spearman(x, [v ** 3 for v in x])[0] == pytest.approx(1.0)
    assert spearman(x, [5, 3, 1, -4, -9])[0] == pytest.approx(-1.0)


def test_spearman_tie_hand_ranks():
    x, y = [1, 2, 2, 3, 4], [1, 3, 2, 4, 5]
    rx, ry = [1, 2.5, 2.5, 4, 5], [1, 3, 2, 4, 5]
    assert spearman(x, y) == pearson(rx, ry)
    assert list(rank_average(x)) == rx


@settings(max_examples=60)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=30))
def test_ranks_match_bruteforce(values):
    assert list(rank_average(values)) == ranks_bruteforce(values)


finite = st.floats(-1e3, 1e3, allow_nan=False)


def _nonconstant(xs):
    return len(set(xs)) > 1


@settings(max_examples=60)
@given(st.lists(st.tuples(finite, finite), min_size=3, max_size=40).filter(
    lambda p: _nonconstant([a for a, _ in p]) and _nonconstant([b for _, b in p])),
    st.floats(0.1, 10), st.floats(-50, 50))
def test_pearson_affine_invariance(pairs, a, b):
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    if np.std(x) < 1e-3 or np.std(y) < 1e-3:
        return
    r = pearson(x, y)[0]
    assert pearson(a * x + b, y)[0] == pytest.approx(r, abs=1e-9)
    assert pearson(-a * x + b, y)[0] == pytest.approx(-r, abs=1e-9)


@settings(max_examples=60)
@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=3, max_size=40).filter(
    lambda p: _nonconstant([a for a, _ in p]) and _nonconstant([b for _, b in p])))
def test_spearman_is_pearson_of_ranks_and_monotone_invariant(pairs):
    x = [p[0] for p in pairs]
    y = [p[1] for p in pairs]
    assert spearman(x, y) == pearson(ranks_bruteforce(x), ranks_bruteforce(y))
    x3 = [v ** 3 + 7 for v in x]
    assert spearman(x3, y) == spearman(x, y)


def test_p_decreases_with_r():
    ps = []
    for r in np.linspace(0, 0.99, 30):
        t = r * math.sqrt(20 / (1 - r * r))
        ps.append(t_cdf_two_sided(t, 20))
    assert all(0 <= p <= 1 for p in ps)
    assert all(b < a for a, b in zip(ps, ps[1:]))


# --- grouping -------------------------------------------------------------

def _row(i, sex="male", part=BodyPart.HEAD, lat=50.0, hour=None, v=0.5):
    return AnalysisRow(str(i), part, sex, lat, 5.0, hour, 0.0, 0.0, v)


def test_group_planted_trend():
    rng = np.random.default_rng(0)
    lat = rng.uniform(50, 54, 200)
    v = 0.8 - 0.05 * lat + rng.normal(0, 0.02, 200)
    rows = [_row(i, lat=float(a), v=float(b)) for i, (a, b) in enumerate(zip(lat, v))]
    (g,) = group_and_correlate(rows, (), "latitude")
    assert (g.sex, g.part, g.n) == ("all", "all", 200)
    assert g.result.pearson_r < 0 and g.result.spearman_rho < 0


def test_group_insufficient():
    rows = [_row(0, lat=50, v=0.1), _row(1, lat=51, v=0.2)]
    (g,) = group_and_correlate(rows, ("sex",), "latitude")
    assert g.result is None and g.note == "insufficient"
    assert correlation_rows([g])[0][4:] == ["", "", "", ""]
    assert "insufficient" in summarize([g])


def test_group_cardinality_and_order():
    rows = []
    rng = np.random.default_rng(1)
    for i in range(60):
        sex = ("male", "female")[i % 2]
        part = (BodyPart.HEAD, BodyPart.THORAX, BodyPart.ABDOMEN)[i % 3]
        rows.append(_row(i, sex, part, float(rng.uniform(50, 54)), int(rng.integers(0, 24)), float(rng.random())))
    res = group_and_correlate(rows, ("sex", "part"), "hour")
    assert len(res) == 6
    assert [(g.sex, g.part) for g in res] == [(s, p) for s in ("female", "male") for p in ("head", "thorax", "abdomen")]
    assert all(g.n == 10 for g in res)


def test_hour_absent_rows_excluded():
    rows = [_row(i, lat=50 + i, hour=(i if i < 4 else None), v=0.1 * i) for i in range(6)]
    (lat_g,) = group_and_correlate(rows, (), "latitude")
    (hour_g,) = group_and_correlate(rows, (), "hour")
    assert lat_g.n == 6 and hour_g.n == 4


def test_unknown_sex_grouped():
    rows = [_row(i, sex="unknown", lat=50 + i, v=i) for i in range(3)]
    (g,) = group_and_correlate(rows, ("sex",), "latitude")
    assert g.sex == "unknown" and g.n == 3
