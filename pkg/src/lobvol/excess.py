"""Excess volume (also called remnant volume) at the spread.

``V_ex = (V_ask - |V_bid|) / max(V_ask, |V_bid|)`` lies strictly inside
(-1, 1) whenever both sides hold volume.

When both series carry the exact printed volumes the ratio is evaluated in
decimal arithmetic and rounded once, so rescaling both volumes by any
positive decimal factor gives a bit-identical result.  The float path is
exact only for power-of-two factors.
"""

from __future__ import annotations

import decimal
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, InsufficientDataError, ParameterError
from .series import VolumeSeries

JUMP_POINTS = (-0.5, -0.1, 0.0, 0.1, 0.5)


@dataclass(frozen=True, eq=False)
class ExcessSeries:
    interval: int
    timestamps: np.ndarray
    values: np.ndarray
    valid: np.ndarray

    def valid_values(self):
        return self.values[self.valid]


def excess_ratio(ask, bid):
    """Elementwise excess volume of magnitudes ``ask`` and ``bid`` (both > 0)."""
    ask = np.abs(np.asarray(ask, dtype=float))
    bid = np.abs(np.asarray(bid, dtype=float))
    return (ask - bid) / np.maximum(ask, bid)


_EXACT = decimal.Context(prec=60)


def excess_ratio_exact(ask, bid) -> np.ndarray:
    """Excess volume of decimal magnitudes, one rounding per entry."""
    out = np.empty(len(ask))
    for i, (a, b) in enumerate(zip(ask, bid)):
        a, b = abs(a), abs(b)
        out[i] = float(_EXACT.divide(_EXACT.subtract(a, b), max(a, b)))
    return out


def excess_volume(ask: VolumeSeries, bid: VolumeSeries) -> ExcessSeries:
    if ask.interval != bid.interval or len(ask) != len(bid) or not np.array_equal(ask.timestamps, bid.timestamps):
        raise AlignmentError("ask and bid series must share interval and slot timestamps")
    ok = ask.valid & bid.valid
    v = np.full(len(ask), np.nan)
    idx = np.flatnonzero(ok)
    if ask.exact is not None and bid.exact is not None:
        v[idx] = excess_ratio_exact(ask.exact[idx], bid.exact[idx])
    else:
        v[idx] = excess_ratio(ask.values[idx], bid.values[idx])
    return ExcessSeries(ask.interval, ask.timestamps.copy(), v, ok)


@dataclass(frozen=True, eq=False)
class ExcessDistribution:
    edges: np.ndarray
    counts: np.ndarray
    frequency: np.ndarray
    n: int
    tail_mass: dict          # x -> P(|V_ex| >= x)
    jump_mass: dict          # c -> P(|V_ex - c| <= eps)
    eps: float


def excess_distribution(series: ExcessSeries, bin_width: float = 0.01, tails=(0.75,),
                        eps: float = 0.005, jump_points=JUMP_POINTS) -> ExcessDistribution:
    """Histogram on (-1, 1) plus tail and jump-location masses."""
    if not 0 < bin_width < 2:
        raise ParameterError(f"bin_width must be in (0, 2), got {bin_width}")
    x = series.valid_values()
    if len(x) == 0:
        raise InsufficientDataError("no valid excess-volume entries")
    nbins = int(np.ceil(round(2 / bin_width, 9)))
    edges = np.minimum(-1.0 + bin_width * np.arange(nbins + 1), 1.0)
    edges[-1] = 1.0
    counts, _ = np.histogram(x, bins=edges)
    n = len(x)
    ax = np.abs(x)
    tail = {float(t): float(np.mean(ax >= t)) for t in tails}
    jump = {float(c): float(np.mean(np.abs(x - c) <= eps)) for c in jump_points}
    return ExcessDistribution(edges, counts, counts / n, n, tail, jump, eps)
