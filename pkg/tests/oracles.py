"""Small brute-force reference implementations used across test modules."""

import numpy as np

from causal_trees.trends import TrendSeries


def unrolled_recurrence(smoking: TrendSeries, ecig: TrendSeries, k: float,
                        cutoff: int = 2009) -> list[float]:
    """Step the decline-plus-gateway recurrence by hand, year by year."""
    past = [y for y in smoking.years if y <= cutoff]
    y1, y2 = past[-2], past[-1]
    decline = (smoking.value_at(y1) - smoking.value_at(y2)) / (y2 - y1)
    values = {
        y: p for y, p in zip(smoking.years, smoking.prevalence) if y <= cutoff
    }
    prev = values[cutoff]
    for year in range(cutoff + 1, max(smoking.years) + 1):
        cur = prev - decline
        e_now = ecig.value_at(year)
        e_before = ecig.value_at(year - 1)
        if e_now is not None and e_before is not None and e_now > e_before:
            cur += k * (e_now - e_before)
        values[year] = cur
        prev = cur
    return [values[y] for y in smoking.years]


def hdi_scan(samples: np.ndarray, mass: float) -> tuple[float, float]:
    """Exhaustive shortest-window scan over the sorted sample.

    Ties between equally short windows resolve to the lowest start.
    """
    s = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    n = s.size
    k = int(np.ceil(mass * n))
    if k >= n:
        return float(s[0]), float(s[-1])
    best_width = np.inf
    best_start = 0
    for start in range(n - k + 1):
        width = s[start + k - 1] - s[start]
        if width < best_width:
            best_width = width
            best_start = start
    return float(s[best_start]), float(s[best_start + k - 1])
