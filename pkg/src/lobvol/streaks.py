"""Constant-volume streaks at the best quote.

A streak is a maximal run of consecutive valid slots, inside one segment,
over which the best quote's (price, volume) pair does not change.  A new
quote at the same volume but another price starts a new streak.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, InsufficientDataError, ParameterError
from .series import VolumeSeries, nearest_rank

DEFAULT_TOP_K = 10
DEFAULT_D_MAX = 45


@dataclass(frozen=True)
class StreakRecord:
    side: str
    start_slot: int
    duration: int       # in native slots
    volume: object      # Decimal when the series carries exact volumes, else float


def _keys(values, exact):
    if exact is None:
        return list(values)
    return [e if e is not None else v for e, v in zip(exact, values)]


def detect_streaks(series: VolumeSeries, quote_prices=None) -> list[StreakRecord]:
    """Run-length encode the (price, volume) pairs of ``series``.

    ``quote_prices`` defaults to ``series.prices``; without any price
    information only volume changes end a streak.  Invalid slots and segment
    boundaries always end a streak.
    """
    n = len(series)
    prices = series.prices if quote_prices is None else quote_prices
    if prices is not None and len(prices) != n:
        raise AlignmentError(f"price series has {len(prices)} slots, volume series {n}")
    vols = _keys(series.values, series.exact)
    ok = series.valid
    seg = series.segment

    out: list[StreakRecord] = []
    start = None
    for i in range(n + 1):
        if start is not None:
            same = (
                i < n and ok[i] and seg[i] == seg[start] and vols[i] == vols[start]
                and (prices is None or prices[i] == prices[start])
            )
            if same:
                continue
            out.append(StreakRecord(series.side, start, i - start, vols[start]))
            start = None
        if i < n and ok[i]:
            start = i
    return out


@dataclass(frozen=True, eq=False)
class DurationDistribution:
    durations: np.ndarray       # distinct durations, ascending
    counts: np.ndarray
    cdf: np.ndarray
    q: float
    percentile: int             # nearest-rank q-th percentile of durations

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def streak_duration_distribution(records, q: float = 99) -> DurationDistribution:
    d = np.sort(np.array([r.duration for r in records], dtype=np.int64))
    if len(d) == 0:
        raise InsufficientDataError("no streaks")
    uniq, counts = np.unique(d, return_counts=True)
    return DurationDistribution(uniq, counts, np.cumsum(counts) / len(d), q, int(nearest_rank(d, q)))


@dataclass(frozen=True, eq=False)
class StreakFit:
    durations: np.ndarray       # durations with data inside 1..d_max
    top_k_mean: np.ndarray
    n: np.ndarray               # records per duration (before top-k truncation)
    sparse: np.ndarray          # bucket had fewer than k records
    amplitude: float
    rate: float
    r_squared: float
    k: int
    d_max: int

    @property
    def fit_range(self) -> tuple[int, int]:
        return int(self.durations[0]), int(self.durations[-1])

    def predict(self, tau):
        return self.amplitude * np.exp(-self.rate * np.asarray(tau, dtype=float))


def fit_extreme_volume_decay(records, k: int = DEFAULT_TOP_K, d_max: int = DEFAULT_D_MAX) -> StreakFit:
    """Fit ``mean of the k largest volumes at duration tau ~ a * exp(-b * tau)``.

    Least squares on ``ln(mean)`` against ``tau`` over durations ``1..d_max``
    that have at least one record.  Buckets with fewer than ``k`` records
    use what they have and are flagged in ``sparse``.
    """
    if k < 1 or d_max < 1:
        raise ParameterError("k and d_max must be positive")
    buckets: dict[int, list[float]] = {}
    for r in records:
        if 1 <= r.duration <= d_max:
            buckets.setdefault(r.duration, []).append(float(r.volume))
    if len(buckets) < 2:
        raise InsufficientDataError(f"need at least 2 durations with data in 1..{d_max}, have {len(buckets)}")
    taus = np.array(sorted(buckets), dtype=np.int64)
    means, counts = [], []
    for t in taus:
        v = sorted(buckets[t], reverse=True)
        counts.append(len(v))
        means.append(math.fsum(v[:k]) / min(k, len(v)))
    means = np.array(means)
    counts = np.array(counts)
    if np.any(means <= 0):
        raise InsufficientDataError("non-positive top-k mean cannot be log-fitted")
    y = np.log(means)
    x = taus.astype(float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (intercept + slope * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return StreakFit(taus, means, counts, counts < k, float(np.exp(intercept)), float(-slope), r2, k, d_max)
