"""Best-quote volume series, resampling and log volume returns.

Volumes are stored as unsigned magnitudes; ``VolumeSeries.sign`` records
the convention that ask volume counts positive and bid volume negative.
Every series lives on a regular slot grid.  Slots without a snapshot are
kept (invalid) so that slot ``i + k`` is always ``k`` intervals after slot
``i`` inside a segment; ``segment`` labels let estimators refuse to pair
observations across a data hole.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from decimal import Decimal
from fractions import Fraction
from typing import IO

import numpy as np

from .errors import InsufficientDataError, ParameterError
from .ingest import SnapshotStream, decimal_text

SIDES = ("ask", "bid")
# |ln V| < 2**10 for any finite double, so 10 + 1 + 40 bits fit a float mantissa
LOG_GRID_BITS = 40


def _check_side(side):
    if side not in SIDES:
        raise ParameterError(f"side must be 'ask' or 'bid', got {side!r}")


@dataclass(frozen=True, eq=False)
class VolumeSeries:
    side: str
    interval: int
    timestamps: np.ndarray
    values: np.ndarray
    valid: np.ndarray
    segment: np.ndarray
    # exact printed volumes and best-quote prices when built from snapshots
    exact: np.ndarray | None = None
    prices: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.values)
        if not (len(self.valid) == len(self.timestamps) == len(self.segment) == n):
            raise ParameterError("series arrays must have equal length")
        if np.any(self.values[self.valid] <= 0):
            raise ParameterError("valid volume entries must be positive")

    def __len__(self):
        return len(self.values)

    @property
    def sign(self) -> int:
        return 1 if self.side == "ask" else -1

    def signed_values(self) -> np.ndarray:
        return self.sign * self.values

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())


@dataclass(frozen=True, eq=False)
class ReturnSeries:
    """Log volume returns; ``kind`` is ``"signed"`` or ``"absolute"``."""

    side: str | None
    interval: int
    timestamps: np.ndarray
    values: np.ndarray
    valid: np.ndarray
    segment: np.ndarray
    kind: str = "signed"

    def __len__(self):
        return len(self.values)

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def absolute(self) -> "ReturnSeries":
        return replace(self, values=np.abs(self.values), kind="absolute")

    def valid_values(self) -> np.ndarray:
        return self.values[self.valid]

    @classmethod
    def from_array(cls, values, interval=10, side=None, kind="signed", valid=None, segment=None):
        """Wrap a plain array as a single-segment series (NaN entries become invalid)."""
        values = np.asarray(values, dtype=float)
        if valid is None:
            valid = np.isfinite(values)
        valid = np.asarray(valid, dtype=bool)
        if segment is None:
            segment = np.zeros(len(values), dtype=np.int64)
        ts = np.arange(len(values), dtype=np.int64) * interval
        return cls(side, interval, ts, np.where(valid, values, np.nan), valid, np.asarray(segment), kind)


def volume_series_from_array(values, interval=10, side="ask", valid=None, segment=None) -> VolumeSeries:
    values = np.asarray(values, dtype=float)
    if valid is None:
        valid = np.isfinite(values) & (values > 0)
    valid = np.asarray(valid, dtype=bool)
    if segment is None:
        segment = np.zeros(len(values), dtype=np.int64)
    ts = np.arange(len(values), dtype=np.int64) * interval
    return VolumeSeries(side, interval, ts, np.where(valid, values, np.nan), valid, np.asarray(segment))


# --------------------------------------------------------------------------
# construction


def best_volume_series(stream: SnapshotStream, side: str) -> VolumeSeries:
    """One slot per nominal interval inside each segment, holding the best-quote volume."""
    _check_side(side)
    step = stream.nominal_interval
    ts_parts, val_parts, ok_parts, seg_parts, ex_parts, px_parts = [], [], [], [], [], []
    for sid, seg in enumerate(stream.segments):
        recs = stream.segment_records(seg)
        base = seg.first_timestamp
        n = int(round((seg.last_timestamp - base) / step)) + 1
        vals = np.full(n, np.nan)
        ok = np.zeros(n, dtype=bool)
        exact = np.full(n, None, dtype=object)
        prices = np.full(n, None, dtype=object)
        for rec in recs:
            j = int(round((rec.timestamp - base) / step))
            price, volume = rec.best_ask if side == "ask" else rec.best_bid
            vals[j] = float(volume)
            exact[j] = volume
            prices[j] = price
            ok[j] = True
        ts_parts.append(base + step * np.arange(n, dtype=np.int64))
        val_parts.append(vals)
        ok_parts.append(ok)
        seg_parts.append(np.full(n, sid, dtype=np.int64))
        ex_parts.append(exact)
        px_parts.append(prices)

    def cat(parts, dtype):
        return np.concatenate(parts) if parts else np.zeros(0, dtype=dtype)

    return VolumeSeries(side, step, cat(ts_parts, np.int64), cat(val_parts, float),
                        cat(ok_parts, bool), cat(seg_parts, np.int64),
                        cat(ex_parts, object), cat(px_parts, object))


def resample(series: VolumeSeries, target_interval: int) -> VolumeSeries:
    """Closing-value resampling onto windows ``[w * target, (w + 1) * target)``.

    Windows are aligned to absolute time so that nested scales line up; each
    output slot takes the last valid observation in its window and is
    invalid when the window has none.
    """
    if target_interval <= 0 or target_interval % series.interval:
        raise ParameterError(
            f"target interval {target_interval}s is not a multiple of {series.interval}s")
    if target_interval == series.interval:
        return series
    ts_parts, val_parts, ok_parts, seg_parts, ex_parts, px_parts = [], [], [], [], [], []
    for sid in np.unique(series.segment):
        idx = np.flatnonzero(series.segment == sid)
        win = series.timestamps[idx] // target_interval
        w0 = int(win[0])
        n = int(win[-1]) - w0 + 1
        vals = np.full(n, np.nan)
        ok = np.zeros(n, dtype=bool)
        exact = np.full(n, None, dtype=object)
        prices = np.full(n, None, dtype=object)
        vi = idx[series.valid[idx]]
        if len(vi):
            vw = series.timestamps[vi] // target_interval
            last = np.r_[vw[1:] != vw[:-1], True]
            src = vi[last]
            dst = (vw[last] - w0).astype(np.int64)
            vals[dst] = series.values[src]
            ok[dst] = True
            if series.exact is not None:
                exact[dst] = series.exact[src]
            if series.prices is not None:
                prices[dst] = series.prices[src]
        ts_parts.append((w0 + np.arange(n, dtype=np.int64)) * target_interval)
        val_parts.append(vals)
        ok_parts.append(ok)
        seg_parts.append(np.full(n, sid, dtype=np.int64))
        ex_parts.append(exact)
        px_parts.append(prices)
    if not ts_parts:
        return replace(series, interval=target_interval)
    return VolumeSeries(
        series.side, target_interval, np.concatenate(ts_parts), np.concatenate(val_parts),
        np.concatenate(ok_parts), np.concatenate(seg_parts),
        np.concatenate(ex_parts) if series.exact is not None else None,
        np.concatenate(px_parts) if series.prices is not None else None,
    )


def log_volume(values) -> np.ndarray:
    """``ln V`` rounded to the fixed-point grid ``2**-LOG_GRID_BITS``.

    On this grid every difference and every telescoping partial sum of log
    volumes is exactly representable, so a coarse-scale return equals the
    sum of the fine-scale returns it spans bit for bit.  The rounding moves
    a return by at most ``2**-LOG_GRID_BITS``.
    """
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.ldexp(np.rint(np.ldexp(np.log(values), LOG_GRID_BITS)), -LOG_GRID_BITS)


def log_returns(series: VolumeSeries) -> ReturnSeries:
    """``r[i] = ln V[i+1] - ln V[i]``, valid only for consecutive valid slots of one segment.

    Computing the difference of (grid-rounded) logs rather than the log of a
    ratio makes ``r(V -> W) == -r(W -> V)`` hold bit for bit.
    """
    if len(series) < 2:
        empty = np.zeros(0)
        return ReturnSeries(series.side, series.interval, empty.astype(np.int64), empty,
                            empty.astype(bool), empty.astype(np.int64))
    logv = log_volume(np.where(series.valid, series.values, np.nan))
    ok = series.valid[1:] & series.valid[:-1] & (series.segment[1:] == series.segment[:-1])
    r = np.where(ok, logv[1:] - logv[:-1], np.nan)
    return ReturnSeries(series.side, series.interval, series.timestamps[1:].copy(), r, ok,
                        series.segment[1:].copy())


def lag_scatter(returns: ReturnSeries, lag: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Pairs ``(r(t), r(t + lag))`` with both members valid and in one segment."""
    v, ok, seg = returns.values, returns.valid, returns.segment
    both = ok[:-lag] & ok[lag:] & (seg[:-lag] == seg[lag:])
    return v[:-lag][both], v[lag:][both]


# --------------------------------------------------------------------------
# statistics


def nearest_rank(sorted_values, q) -> float:
    """Nearest-rank ``q``-th percentile of an ascending array (``q`` in [0, 100])."""
    n = len(sorted_values)
    if n == 0:
        raise InsufficientDataError("percentile of an empty sample")
    if not 0 <= q <= 100:
        raise ParameterError(f"percentile {q} outside [0, 100]")
    rank = math.ceil(Fraction(str(q)) * n / 100)
    return sorted_values[max(rank, 1) - 1]


@dataclass(frozen=True)
class DescriptiveStats:
    n: int
    median: float
    iqr: float
    mean: float
    std_dev: float
    skewness: float
    kurtosis: float

    def as_dict(self):
        return {k: getattr(self, k) for k in
                ("n", "median", "iqr", "mean", "std_dev", "skewness", "kurtosis")}


def descriptive_stats(series) -> DescriptiveStats:
    """Median/IQR by nearest rank; moments over valid entries.

    ``std_dev`` is the population standard deviation and ``kurtosis`` is the
    non-excess standardized fourth moment (3 for a Gaussian).
    """
    x = np.sort(np.asarray(series.values)[np.asarray(series.valid)])
    if len(x) < 2:
        raise InsufficientDataError(f"need at least 2 valid entries, got {len(x)}")
    mean = float(x.mean())
    d = x - mean
    m2 = float(np.mean(d ** 2))
    m3 = float(np.mean(d ** 3))
    m4 = float(np.mean(d ** 4))
    skew = m3 / m2 ** 1.5 if m2 > 0 else float("nan")
    kurt = m4 / m2 ** 2 if m2 > 0 else float("nan")
    q1, q3 = nearest_rank(x, 25), nearest_rank(x, 75)
    return DescriptiveStats(len(x), float(nearest_rank(x, 50)), float(q3 - q1), mean,
                            math.sqrt(m2), skew, kurt)


def empirical_cdf(series) -> tuple[np.ndarray, np.ndarray]:
    """Right-continuous ECDF: sorted unique values and ``F(v) = P(V <= v)``."""
    x = np.asarray(series.values)[np.asarray(series.valid)]
    if len(x) == 0:
        raise InsufficientDataError("empirical CDF of an empty series")
    v, counts = np.unique(x, return_counts=True)
    return v, np.cumsum(counts) / len(x)


def stochastically_dominates(upper, lower) -> bool:
    """True when ``F_upper(v) <= F_lower(v)`` at every observed ``v`` (first-order dominance)."""
    xu = np.sort(np.asarray(upper.values)[np.asarray(upper.valid)])
    xl = np.sort(np.asarray(lower.values)[np.asarray(lower.valid)])
    grid = np.union1d(xu, xl)
    fu = np.searchsorted(xu, grid, side="right") / len(xu)
    fl = np.searchsorted(xl, grid, side="right") / len(xl)
    return bool(np.all(fu <= fl))


# --------------------------------------------------------------------------
# CSV


def write_series_csv(series, fh: IO[str]) -> None:
    """Write ``slot_index,timestamp,value,valid``; invalid slots leave ``value`` blank."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["slot_index", "timestamp", "value", "valid"])
    exact = getattr(series, "exact", None)
    for i in range(len(series)):
        if series.valid[i]:
            text = decimal_text(exact[i]) if exact is not None and exact[i] is not None else repr(float(series.values[i]))
            w.writerow([i, int(series.timestamps[i]), text, 1])
        else:
            w.writerow([i, int(series.timestamps[i]), "", 0])


def _read_slots(fh, interval):
    rows = list(csv.DictReader(fh))
    ts = np.array([int(r["timestamp"]) for r in rows], dtype=np.int64)
    ok = np.array([r["valid"].strip() in ("1", "true", "True") for r in rows], dtype=bool)
    texts = [r["value"].strip() for r in rows]
    vals = np.array([float(t) if o else np.nan for t, o in zip(texts, ok)])
    if interval is None:
        diffs = np.diff(ts)
        interval = int(diffs[diffs > 0].min()) if np.any(diffs > 0) else 10
    seg = np.r_[0, np.cumsum(np.diff(ts) != interval)].astype(np.int64) if len(ts) else ts
    return ts, vals, ok, seg, texts, interval


def read_volume_csv(fh: IO[str], side: str = "ask", interval: int | None = None) -> VolumeSeries:
    """Read a series CSV; a timestamp jump other than one interval starts a new segment."""
    ts, vals, ok, seg, texts, interval = _read_slots(fh, interval)
    exact = np.array([Decimal(t) if o else None for t, o in zip(texts, ok)], dtype=object)
    ok = ok & (np.nan_to_num(vals) > 0)
    return VolumeSeries(side, interval, ts, np.where(ok, vals, np.nan), ok, seg, exact)


def read_returns_csv(fh: IO[str], side: str | None = None, interval: int | None = None) -> ReturnSeries:
    ts, vals, ok, seg, _, interval = _read_slots(fh, interval)
    return ReturnSeries(side, interval, ts, vals, ok, seg)
