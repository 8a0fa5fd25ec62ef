"""Inner loops shared by k-means and polygon rasterisation.

Every kernel exists twice: a numba version (``*_nb``) and a numpy version
(``*_np``). The public name is bound to one of them at import time according
to :data:`odopal._accel.USE_NUMBA`. Both versions evaluate the same
floating-point expressions so their outputs agree bit for bit.
"""
from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = ["assign_labels", "transfer_pass", "polygon_fill", "BACKEND"]


# --------------------------------------------------------------------------
# nearest-centroid assignment


@njit
def _assign_labels_nb(points, centroids):
    n = points.shape[0]
    k = centroids.shape[0]
    d = points.shape[1]
    labels = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    for i in range(n):
        best = np.inf
        best_j = 0
        for j in range(k):
            acc = 0.0
            for c in range(d):
                diff = points[i, c] - centroids[j, c]
                acc += diff * diff
            # strict '<' keeps ties on the lowest index
            if acc < best:
                best = acc
                best_j = j
        labels[i] = best_j
        dist[i] = best
    return labels, dist


def _assign_labels_np(points, centroids):
    n = points.shape[0]
    k = centroids.shape[0]
    d2 = np.zeros((n, k), dtype=np.float64)
    for c in range(points.shape[1]):
        diff = points[:, c, None] - centroids[None, :, c]
        d2 += diff * diff
    labels = np.argmin(d2, axis=1).astype(np.int64)
    return labels, d2[np.arange(n), labels]


# --------------------------------------------------------------------------
# single-point transfer (Hartigan) pass
#
# Moving x from cluster a (size na) to b (size nb) lowers the within-cluster
# sum of squares by  d(x, mu_a) * na / (na - 1)  -  d(x, mu_b) * nb / (nb + 1).
# Points are visited in index order and moved as soon as a move helps; the
# two affected means are updated in place.


@njit
def _transfer_pass_nb(points, labels, centroids, counts, min_gain):
    n = points.shape[0]
    k = centroids.shape[0]
    d = points.shape[1]
    moves = 0
    for i in range(n):
        a = labels[i]
        na = counts[a]
        if na <= 1:
            continue
        acc = 0.0
        for c in range(d):
            diff = points[i, c] - centroids[a, c]
            acc += diff * diff
        da = (acc * na) / (na - 1)
        best = np.inf
        bj = -1
        for j in range(k):
            if j == a:
                continue
            acc = 0.0
            for c in range(d):
                diff = points[i, c] - centroids[j, c]
                acc += diff * diff
            db = (acc * counts[j]) / (counts[j] + 1)
            if db < best:
                best = db
                bj = j
        if bj >= 0 and da - best > min_gain:
            nb = counts[bj]
            for c in range(d):
                x = points[i, c]
                centroids[a, c] = (centroids[a, c] * na - x) / (na - 1)
                centroids[bj, c] = (centroids[bj, c] * nb + x) / (nb + 1)
            counts[a] = na - 1
            counts[bj] = nb + 1
            labels[i] = bj
            moves += 1
    return moves


def _first_gain_np(points, labels, centroids, counts, min_gain, start):
    """Index of the first point at or after ``start`` whose transfer would
    pay off under the current means, or -1.

    Sums are accumulated per coordinate in the same order as the scalar loop
    so the decisions agree bit for bit.
    """
    pts = points[start:]
    lab = labels[start:]
    k = centroids.shape[0]
    d2 = np.zeros((pts.shape[0], k))
    for c in range(points.shape[1]):
        diff = pts[:, c, None] - centroids[None, :, c]
        d2 += diff * diff
    na = counts[lab]
    rows = np.arange(pts.shape[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        da = (d2[rows, lab] * na) / (na - 1)
    best = np.full(pts.shape[0], np.inf)
    for j in range(k):
        db = (d2[:, j] * counts[j]) / (counts[j] + 1)
        better = (db < best) & (lab != j)
        best[better] = db[better]
    hit = np.nonzero((na > 1) & (da - best > min_gain))[0]
    return start + int(hit[0]) if hit.size else -1


def _transfer_pass_np(points, labels, centroids, counts, min_gain, _window=64):
    # Sequential by nature: a move changes the means seen by later points.
    # Stretches with no move are skipped by a vectorized scan; after a move
    # the loop steps point by point until it has seen ``_window`` non-moves.
    n, d = points.shape
    k = centroids.shape[0]
    moves = 0
    i = 0
    quiet = _window
    while i < n:
        if quiet >= _window:
            i = _first_gain_np(points, labels, centroids, counts, min_gain, i)
            if i < 0:
                break
            quiet = 0
        x = points[i].tolist()
        a = int(labels[i])
        na = int(counts[a])
        if na <= 1:
            quiet += 1
            i += 1
            continue
        ca = centroids[a].tolist()
        acc = 0.0
        for c in range(d):
            diff = x[c] - ca[c]
            acc += diff * diff
        da = (acc * na) / (na - 1)
        best = np.inf
        bj = -1
        for j in range(k):
            if j == a:
                continue
            cj = centroids[j].tolist()
            acc = 0.0
            for c in range(d):
                diff = x[c] - cj[c]
                acc += diff * diff
            nj = int(counts[j])
            db = (acc * nj) / (nj + 1)
            if db < best:
                best = db
                bj = j
        if bj >= 0 and da - best > min_gain:
            nb = int(counts[bj])
            cb = centroids[bj].tolist()
            for c in range(d):
                centroids[a, c] = (ca[c] * na - x[c]) / (na - 1)
                centroids[bj, c] = (cb[c] * nb + x[c]) / (nb + 1)
            counts[a] = na - 1
            counts[bj] = nb + 1
            labels[i] = bj
            moves += 1
            quiet = 0
        else:
            quiet += 1
        i += 1
    return moves


# --------------------------------------------------------------------------
# even-odd polygon fill, sampled at pixel centres


@njit
def _polygon_fill_nb(xs, ys, width, height):
    out = np.zeros((height, width), dtype=np.bool_)
    nv = xs.shape[0]
    xints = np.empty(nv, dtype=np.float64)
    for row in range(height):
        py = row + 0.5
        m = 0
        j = nv - 1
        for i in range(nv):
            yi = ys[i]
            yj = ys[j]
            if (yi > py) != (yj > py):
                xints[m] = (xs[j] - xs[i]) * (py - yi) / (yj - yi) + xs[i]
                m += 1
            j = i
        if m == 0:
            continue
        for col in range(width):
            px = col + 0.5
            cnt = 0
            for q in range(m):
                if px < xints[q]:
                    cnt += 1
            if cnt % 2 == 1:
                out[row, col] = True
    return out


def _polygon_fill_np(xs, ys, width, height):
    out = np.zeros((height, width), dtype=np.bool_)
    if width == 0 or height == 0:
        return out
    xj = np.roll(xs, 1)
    yj = np.roll(ys, 1)
    py = np.arange(height, dtype=np.float64) + 0.5
    px = np.arange(width, dtype=np.float64) + 0.5
    for i in range(xs.shape[0]):
        yi, yjj, xi, xjj = ys[i], yj[i], xs[i], xj[i]
        rows = np.nonzero((yi > py) != (yjj > py))[0]
        if rows.size == 0:
            continue
        xint = (xjj - xi) * (py[rows] - yi) / (yjj - yi) + xi
        out[rows] ^= px[None, :] < xint[:, None]
    return out


if USE_NUMBA:
    BACKEND = "numba"
    _assign_impl = _assign_labels_nb
    _transfer_impl = _transfer_pass_nb
    _fill_impl = _polygon_fill_nb
else:
    BACKEND = "numpy"
    _assign_impl = _assign_labels_np
    _transfer_impl = _transfer_pass_np
    _fill_impl = _polygon_fill_np


def assign_labels(points: np.ndarray, centroids: np.ndarray):
    """Index of the nearest centroid for each point, plus the squared distance.

    Ties resolve to the lowest centroid index.
    """
    p = np.ascontiguousarray(points, dtype=np.float64)
    c = np.ascontiguousarray(centroids, dtype=np.float64)
    return _assign_impl(p, c)


def transfer_pass(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray, counts: np.ndarray,
                  min_gain: float = 0.0) -> int:
    """One in-order pass of single-point transfers; returns the number of moves.

    ``labels``, ``centroids`` and ``counts`` must be contiguous int64/float64/int64
    arrays and are updated in place. A point moves to the cluster with the
    smallest weighted distance (lowest index on ties) when the decrease in
    inertia exceeds ``min_gain``.
    """
    return int(_transfer_impl(np.ascontiguousarray(points, dtype=np.float64), labels, centroids, counts,
                              float(min_gain)))


def polygon_fill(xs: np.ndarray, ys: np.ndarray, width: int, height: int) -> np.ndarray:
    """Boolean ``(height, width)`` array of pixels whose centre is inside the polygon."""
    x = np.ascontiguousarray(xs, dtype=np.float64)
    y = np.ascontiguousarray(ys, dtype=np.float64)
    return _fill_impl(x, y, int(width), int(height))
