"""Hour remapping and Pearson/Spearman correlation with two-sided p-values."""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import groupby
from typing import Iterable, Sequence

import numpy as np

from .annot import BodyPart

SEX_ORDER = ("female", "male", "unknown")


@dataclass(frozen=True)
class AnalysisRow:
    record_id: str
    part: BodyPart
    sex: str
    latitude: float | None
    longitude: float | None
    hour_remapped: int | None
    mean_h: float
    mean_s: float
    mean_v: float

    def __post_init__(self):
        if self.hour_remapped is not None and not 0 <= self.hour_remapped <= 23:
            raise ValueError(f"hour_remapped {self.hour_remapped} outside 0..23")


@dataclass(frozen=True)
class CorrelationResult:
    n: int
    pearson_r: float
    pearson_p: float
    spearman_rho: float
    spearman_p: float


@dataclass(frozen=True)
class GroupResult:
    sex: str  # "all" when not grouped by sex
    part: str  # "all" when not grouped by part
    variable: str
    n: int
    result: CorrelationResult | None
    note: str = ""  # why result is None

    @property
    def sufficient(self) -> bool:
        return self.result is not None


# --------------------------------------------------------------------------
# hour remapping


def remap_hour(h: int) -> int:
    """Shift the clock so hours 20..23 become 0..3 and 0..19 become 4..23."""
    if not isinstance(h, (int, np.integer)) or not 0 <= h <= 23:
        raise ValueError(f"hour must be an integer in 0..23, got {h!r}")
    return int(h - 20 if h >= 20 else h + 4)


def unmap_hour(h: int) -> int:
    if not 0 <= h <= 23:
        raise ValueError(f"hour must be in 0..23, got {h!r}")
    return h + 20 if h <= 3 else h - 4


# --------------------------------------------------------------------------
# Student t tail via the regularized incomplete beta function

_TINY = 1e-300
_EPS = 1e-16


def _betacf(a: float, b: float, x: float, max_iter: int = 10_000) -> float:
    """Continued fraction for I_x(a, b), modified Lentz evaluation."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_cdf_two_sided(t: float, df: float) -> float:
    """Two-sided tail ``2 P(T >= |t|)`` of Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError(f"df must be positive, got {df}")
    if math.isinf(t):
        return 0.0
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return min(1.0, max(0.0, betainc_regularized(df / 2.0, 0.5, x)))


# --------------------------------------------------------------------------
# correlation


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    xa = np.asarray(x, dtype=np.float64).ravel()
    ya = np.asarray(y, dtype=np.float64).ravel()
    if xa.shape != ya.shape:
        raise ValueError(f"length mismatch: {xa.size} vs {ya.size}")
    if xa.size < 3:
        raise ValueError(f"need at least 3 samples, got {xa.size}")
    return xa, ya


def _r_to_p(r: float, n: int) -> float:
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return t_cdf_two_sided(t, n - 2)


def pearson(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    xa, ya = _check_pair(x, y)
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("zero variance input")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    return r, _r_to_p(r, xa.size)


def rank_average(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    a = np.asarray(values, dtype=np.float64).ravel()
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(a.size, dtype=np.float64)
    sorted_a = a[order]
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and sorted_a[j + 1] == sorted_a[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    xa, ya = _check_pair(x, y)
    return pearson(rank_average(xa), rank_average(ya))


def correlate(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    r, p = pearson(x, y)
    rho, sp = spearman(x, y)
    return CorrelationResult(len(x), r, p, rho, sp)


# --------------------------------------------------------------------------
# grouped tables

VARIABLES = ("latitude", "hour")


def _covariate(row: AnalysisRow, variable: str):
    if variable == "latitude":
        return row.latitude
    if variable == "hour":
        return row.hour_remapped
    raise ValueError(f"unknown variable {variable!r}; expected one of {VARIABLES}")


def _sex_key(sex: str) -> str:
    return sex if sex in ("male", "female") else "unknown"


def group_and_correlate(rows: Iterable[AnalysisRow], group_keys: Iterable[str] = ("sex", "part"),
                        variable: str = "latitude") -> list[GroupResult]:
    """Correlate mean V against ``variable`` within each group.

    Rows missing the covariate are left out. Groups below three usable rows,
    or with a constant column, come back with ``result=None`` and a note.
    """
    keys = set(group_keys)
    bad = keys - {"sex", "part"}
    if bad:
        raise ValueError(f"unknown group keys {sorted(bad)}")
    if variable not in VARIABLES:
        raise ValueError(f"unknown variable {variable!r}; expected one of {VARIABLES}")

    def gkey(r: AnalysisRow):
        sex = SEX_ORDER.index(_sex_key(r.sex)) if "sex" in keys else -1
        part = int(r.part) if "part" in keys else -1
        return (sex, part)

    out = []
    for (sex_i, part_i), members in groupby(sorted(rows, key=gkey), key=gkey):
        sex = SEX_ORDER[sex_i] if sex_i >= 0 else "all"
        part = BodyPart(part_i).label if part_i >= 0 else "all"
        pairs = [(float(_covariate(r, variable)), r.mean_v) for r in members
                 if _covariate(r, variable) is not None]
        n = len(pairs)
        if n < 3:
            out.append(GroupResult(sex, part, variable, n, None, "insufficient"))
            continue
        xs, vs = zip(*pairs)
        if len(set(xs)) == 1 or len(set(vs)) == 1:
            out.append(GroupResult(sex, part, variable, n, None, "constant"))
            continue
        out.append(GroupResult(sex, part, variable, n, correlate(xs, vs)))
    return out


CORRELATION_HEADER = ["group_sex", "group_part", "variable", "n",
                      "pearson_r", "pearson_p", "spearman_rho", "spearman_p"]


def correlation_rows(results: Iterable[GroupResult]) -> list[list[str]]:
    """CSV rows under :data:`CORRELATION_HEADER`; unusable groups have blank numbers."""
    rows = []
    for g in results:
        if g.result is None:
            nums = ["", "", "", ""]
        else:
            c = g.result
            nums = [repr(c.pearson_r), repr(c.pearson_p), repr(c.spearman_rho), repr(c.spearman_p)]
        rows.append([g.sex, g.part, g.variable, str(g.n), *nums])
    return rows


def summarize(results: Iterable[GroupResult]) -> str:
    lines = []
    for g in results:
        label = f"{g.variable:9s} sex={g.sex:8s} part={g.part:8s} n={g.n:<6d}"
        if g.result is None:
            lines.append(f"{label} {g.note}")
            continue
        c = g.result
        sign = "negative" if c.pearson_r < 0 else "positive" if c.pearson_r > 0 else "zero"
        lines.append(f"{label} {sign:8s} pearson r={c.pearson_r:+.5f} (p={c.pearson_p:.3g})"
                     f"  spearman rho={c.spearman_rho:+.5f} (p={c.spearman_p:.3g})")
    return "\n".join(lines) + "\n"
