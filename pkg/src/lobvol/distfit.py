"""Anderson-Darling normality battery and piecewise power-law ACF fits."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

from .correlo import CorrelationEstimate
from .errors import ParameterError, UnderdeterminedError, UndefinedTestError

# Stephens (1974), composite normal case, statistic scaled by (1 + 4/n - 25/n^2)
AD_CRITICAL = {15.0: 0.576, 10.0: 0.656, 5.0: 0.787, 2.5: 0.918, 1.0: 1.092}
DEFAULT_BREAKS = (60, 720)
UNRELIABLE_FRACTION = 0.2


@dataclass(frozen=True)
class AdTestResult:
    scale: int | None
    n: int
    a_squared: float          # small-sample adjusted statistic
    a_squared_raw: float
    critical_value: float
    significance: float       # percent
    reject: bool
    error: str | None = None


def anderson_darling(x, significance: float = 10.0, scale=None) -> AdTestResult:
    """Composite-hypothesis AD test for normality (mean and variance estimated)."""
    if significance not in AD_CRITICAL:
        raise ParameterError(f"significance must be one of {sorted(AD_CRITICAL)}")
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    n = len(x)
    if n < 8:
        raise UndefinedTestError(f"need at least 8 observations, have {n}")
    sd = x.std(ddof=1)
    if not sd > 0:
        raise UndefinedTestError("zero variance sample")
    z = np.sort((x - x.mean()) / sd)
    i = np.arange(1, n + 1)
    a2 = -n - np.sum((2 * i - 1) * (log_ndtr(z) + log_ndtr(-z[::-1]))) / n
    adj = a2 * (1 + 4 / n - 25 / n ** 2)
    crit = AD_CRITICAL[significance]
    return AdTestResult(scale, n, float(adj), float(a2), crit, significance, bool(adj > crit))


def ad_normality_battery(returns_by_scale, significance: float = 10.0) -> list[AdTestResult]:
    """One AD test per return series; a degenerate scale is reported, not raised."""
    out = []
    for r in returns_by_scale:
        try:
            out.append(anderson_darling(r.valid_values(), significance, r.interval))
        except UndefinedTestError as exc:
            out.append(AdTestResult(r.interval, int(r.n_valid), math.nan, math.nan,
                                    AD_CRITICAL[significance], significance, False, str(exc)))
    return out


# --------------------------------------------------------------------------
# power laws


@dataclass(frozen=True)
class PowerLawSegment:
    lag_lo: int
    lag_hi: int               # inclusive
    k: float
    beta: float
    stderr_beta: float
    r_squared: float
    n_used: int
    n_excluded: int           # non-positive correlations skipped
    ssr: float

    @property
    def unreliable(self) -> bool:
        return self.n_excluded > UNRELIABLE_FRACTION * (self.n_used + self.n_excluded)


@dataclass(frozen=True)
class PowerLawFit:
    breakpoints: tuple[int, ...]
    segments: tuple[PowerLawSegment, ...]
    fit_domain: tuple[int, int]

    @property
    def ssr(self) -> float:
        return math.fsum(s.ssr for s in self.segments)

    def predict(self, lags):
        lags = np.asarray(lags, dtype=float)
        out = np.full(lags.shape, np.nan)
        for s in self.segments:
            m = (lags >= s.lag_lo) & (lags <= s.lag_hi)
            out[m] = s.k * lags[m] ** -s.beta
        return out


def _fit_segment(lags, values, lo, hi):
    m = (lags >= lo) & (lags <= hi)
    lg, v = lags[m], values[m]
    pos = v > 0
    n = int(pos.sum())
    if n < 3:
        raise UnderdeterminedError(f"segment [{lo}, {hi}] has {n} usable points, need 3")
    x = np.log(lg[pos].astype(float))
    y = np.log(v[pos])
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(dx @ dx)
    if sxx == 0:
        raise UnderdeterminedError(f"segment [{lo}, {hi}] has a single distinct lag")
    slope = float(dx @ dy) / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    ssr = float(resid @ resid)
    syy = float(dy @ dy)
    r2 = 1.0 - ssr / syy if syy > 0 else 1.0
    stderr = math.sqrt(ssr / (n - 2) / sxx) if n > 2 else math.nan
    return PowerLawSegment(int(lo), int(hi), float(math.exp(intercept)), -slope, stderr, r2, n,
                           int(len(v) - n), ssr)


def _domain(lags, lag_min, lag_max):
    lo = int(lags.min()) if lag_min is None else int(lag_min)
    hi = int(lags.max()) if lag_max is None else int(lag_max)
    if lo >= hi:
        raise ParameterError(f"empty fit domain [{lo}, {hi}]")
    return lo, hi


def fit_power_law_xy(lags, values, breakpoints=(), lag_min=None, lag_max=None) -> PowerLawFit:
    """Piecewise least-squares line in (ln lag, ln C) space.

    A breakpoint ``b`` starts a new segment: segments are ``[lo, b1)``,
    ``[b1, b2)``, ..., ``[b_last, hi]``.
    """
    lags = np.asarray(lags)
    values = np.asarray(values, dtype=float)
    lo, hi = _domain(lags, lag_min, lag_max)
    bps = tuple(sorted(int(b) for b in breakpoints))
    if len(set(bps)) != len(bps) or any(not lo < b <= hi for b in bps):
        raise ParameterError(f"breakpoints {bps} must be distinct and inside ({lo}, {hi}]")
    edges = (lo,) + bps
    segs = []
    for i, start in enumerate(edges):
        stop = edges[i + 1] - 1 if i + 1 < len(edges) else hi
        segs.append(_fit_segment(lags, values, start, stop))
    return PowerLawFit(bps, tuple(segs), (lo, hi))


def fit_power_law(acf: CorrelationEstimate, breakpoints=(), lag_min=None, lag_max=None) -> PowerLawFit:
    return fit_power_law_xy(acf.lags, acf.values, breakpoints, lag_min, lag_max)


def scan_breakpoints_xy(lags, values, candidate_set=DEFAULT_BREAKS, max_breaks=2,
                        lag_min=None, lag_max=None) -> PowerLawFit:
    """Choose up to ``max_breaks`` breakpoints from ``candidate_set`` minimizing total residual.

    Ties (within rounding) go to the fit with fewer breakpoints.
    """
    lags = np.asarray(lags)
    lo, hi = _domain(lags, lag_min, lag_max)
    cands = sorted(set(int(c) for c in candidate_set))
    if max_breaks > 0 and not cands:
        raise ParameterError("empty candidate set with max_breaks > 0")
    if max_breaks < 0:
        raise ParameterError("max_breaks must be non-negative")
    if any(not lo < c <= hi for c in cands):
        raise ParameterError(f"candidates must lie inside ({lo}, {hi}]")
    best = None
    for size in range(0, min(max_breaks, len(cands)) + 1):
        for combo in itertools.combinations(cands, size):
            try:
                fit = fit_power_law_xy(lags, values, combo, lo, hi)
            except UnderdeterminedError:
                continue
            if best is None:
                best = fit
                continue
            tol = 1e-9 * best.ssr + 1e-12 * len(lags)
            if fit.ssr < best.ssr - tol:
                best = fit
    if best is None:
        raise UnderdeterminedError("no candidate breakpoint set yields a determined fit")
    return best


def scan_breakpoints(acf: CorrelationEstimate, candidate_set=DEFAULT_BREAKS, max_breaks=2,
                     lag_min=None, lag_max=None) -> PowerLawFit:
    return scan_breakpoints_xy(acf.lags, acf.values, candidate_set, max_breaks, lag_min, lag_max)
