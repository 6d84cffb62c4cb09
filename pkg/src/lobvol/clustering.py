"""Conditional exceedance probabilities of absolute returns.

``P_tau^q`` is the fraction of above-threshold observations whose partner
``tau`` slots later is also above threshold.  Under independence it equals
``1 - q/100``; the null band is the central 99% of a Binomial(n, 1 - q/100)
count divided by ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from . import rng
from .errors import InsufficientDataError, ParameterError
from .series import ReturnSeries, nearest_rank

MIN_EXCEEDANCES = 100


@dataclass(frozen=True, eq=False)
class ClusterProbEstimate:
    q: float
    r_q: float
    taus: np.ndarray
    p_values: np.ndarray        # NaN where the denominator is zero
    baseline: float
    band_low: np.ndarray
    band_high: np.ndarray
    n_exceed: np.ndarray        # denominator per tau
    n_pairs: np.ndarray         # numerator per tau
    low_count: bool             # fewer than MIN_EXCEEDANCES exceedances overall

    def inside_band(self) -> np.ndarray:
        p = self.p_values
        return np.isfinite(p) & (p >= self.band_low) & (p <= self.band_high)


def _check_q(q):
    if not 0 < q < 100:
        raise ParameterError(f"q must be in (0, 100), got {q}")


def threshold_percentile(abs_returns: ReturnSeries, q: float, min_count: int = 100) -> float:
    """Nearest-rank ``q``-th percentile of the valid absolute returns."""
    _check_q(q)
    x = np.sort(np.abs(abs_returns.valid_values()))
    if len(x) < min_count:
        raise InsufficientDataError(f"need at least {min_count} valid observations, have {len(x)}")
    return float(nearest_rank(x, q))


def null_band(n, baseline, level=0.99):
    """Central ``level`` binomial acceptance interval for a proportion, per denominator."""
    n = np.asarray(n)
    lo = stats.binom.ppf((1 - level) / 2, n, baseline)
    hi = stats.binom.ppf((1 + level) / 2, n, baseline)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n > 0, lo / n, np.nan), np.where(n > 0, hi / n, np.nan)


def cluster_prob(abs_returns: ReturnSeries, q: float, max_tau: int, level: float = 0.99,
                 threshold: float | None = None, min_count: int = 100) -> ClusterProbEstimate:
    """``P(|r(t+tau)| > r_q | |r(t)| > r_q)`` for ``tau = 1..max_tau``.

    An exceedance enters the denominator at ``tau`` only if slot ``t + tau``
    is valid and in the same segment.  Ties with ``r_q`` are not exceedances.
    """
    _check_q(q)
    if max_tau < 1:
        raise ParameterError("max_tau must be at least 1")
    _, seglen = np.unique(abs_returns.segment, return_counts=True)
    if len(seglen) == 0 or max_tau >= seglen.max():
        raise ParameterError("max_tau must be below the longest segment")
    r_q = threshold_percentile(abs_returns, q, min_count) if threshold is None else float(threshold)

    x = np.abs(np.where(abs_returns.valid, abs_returns.values, 0.0))
    ok = abs_returns.valid
    seg = abs_returns.segment
    big = ok & (x > r_q)
    denom = np.zeros(max_tau, dtype=np.int64)
    numer = np.zeros(max_tau, dtype=np.int64)
    for tau in range(1, max_tau + 1):
        pair = big[:-tau] & ok[tau:] & (seg[:-tau] == seg[tau:])
        denom[tau - 1] = pair.sum()
        numer[tau - 1] = (pair & big[tau:]).sum()
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(denom > 0, numer / np.maximum(denom, 1), np.nan)
    baseline = 1 - q / 100
    lo, hi = null_band(denom, baseline, level)
    return ClusterProbEstimate(q, r_q, np.arange(1, max_tau + 1), p, baseline, lo, hi, denom,
                               numer, int(big.sum()) < MIN_EXCEEDANCES)


def shuffled(returns: ReturnSeries, seed: int = 0) -> ReturnSeries:
    """Valid entries permuted in place (random stream ``seed``); invalid slots stay put."""
    idx = np.flatnonzero(returns.valid)
    vals = returns.values.copy()
    vals[idx] = vals[rng.stream(seed).permutation(idx)]
    return replace(returns, values=vals)
