"""Autocorrelation, partial autocorrelation and block-bootstrap intervals.

Lagged pairs are formed with pairwise deletion: a pair ``(r[i], r[i+k])``
contributes only when both members are valid and lie in the same segment.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from . import rng
from .errors import DegeneracyError, ParameterError, UndefinedCorrelationError
from .series import ReturnSeries, nearest_rank

DEFAULT_LEVEL = 0.99
DEFAULT_WINDOW = 5
# above this many pair operations the lag sums are taken by FFT
_FFT_WORK = 20_000_000


@dataclass(frozen=True, eq=False)
class CorrelationEstimate:
    kind: str                 # "acf" or "pacf"
    input_kind: str           # "signed" or "absolute"
    lags: np.ndarray
    values: np.ndarray
    n_effective: np.ndarray
    noise_low: np.ndarray
    noise_high: np.ndarray
    level: float = DEFAULT_LEVEL
    method: str = "pearson"
    ci_low: np.ndarray | None = None
    ci_high: np.ndarray | None = None

    @property
    def max_lag(self) -> int:
        return int(self.lags[-1]) if len(self.lags) else 0

    def outside_band(self) -> np.ndarray:
        return (self.values < self.noise_low) | (self.values > self.noise_high)


def _segments(returns: ReturnSeries):
    """Yield (x, mask) per segment with invalid entries zeroed."""
    seg = returns.segment
    if len(seg) == 0:
        return
    cuts = np.flatnonzero(np.diff(seg)) + 1
    for lo, hi in zip(np.r_[0, cuts], np.r_[cuts, len(seg)]):
        m = returns.valid[lo:hi].astype(float)
        x = np.where(returns.valid[lo:hi], returns.values[lo:hi], 0.0)
        yield x, m


def _lag_sums_direct(x, m, K):
    out = np.zeros((6, K + 1))
    for k in range(1, K + 1):
        if k >= len(x):
            break
        a, b = x[:-k], x[k:]
        ma, mb = m[:-k], m[k:]
        w = ma * mb
        out[:, k] = (w.sum(), (a * w).sum(), (b * w).sum(), (a * a * w).sum(),
                     (b * b * w).sum(), (a * b).sum())
    return out


def _xcorr(F, G, nfft, K):
    # c[k] = sum_i f[i] g[i + k]
    return np.fft.irfft(np.conj(F) * G, nfft)[: K + 1]


def _lag_sums_fft(x, m, K):
    n = len(x)
    nfft = 1 << int(math.ceil(math.log2(2 * n)))
    Fm, Fx, Fxx = (np.fft.rfft(v, nfft) for v in (m, x, x * x))
    out = np.vstack([
        _xcorr(Fm, Fm, nfft, K),
        _xcorr(Fx, Fm, nfft, K),
        _xcorr(Fm, Fx, nfft, K),
        _xcorr(Fxx, Fm, nfft, K),
        _xcorr(Fm, Fxx, nfft, K),
        _xcorr(Fx, Fx, nfft, K),
    ])
    out[0] = np.rint(out[0])
    if K >= n:
        out[:, n:] = 0.0
    return out


def _lag_sums(returns: ReturnSeries, K, center):
    total = np.zeros((6, K + 1))
    for x, m in _segments(returns):
        x = np.where(m > 0, x - center, 0.0)
        if len(x) * K > _FFT_WORK:
            total += _lag_sums_fft(x, m, K)
        else:
            total += _lag_sums_direct(x, m, K)
    return total


def _check_lag(returns: ReturnSeries, max_lag):
    if max_lag < 1:
        raise ParameterError("max_lag must be at least 1")
    seg = returns.segment
    if len(seg) == 0:
        raise ParameterError("empty return series")
    _, counts = np.unique(seg, return_counts=True)
    if max_lag >= counts.max():
        raise ParameterError(f"max_lag {max_lag} must be below the longest segment ({counts.max()} slots)")
    best = max(int(m.sum()) for _, m in _segments(returns))
    if best < max_lag + 2:
        raise ParameterError(f"need {max_lag + 2} valid observations in one segment, have {best}")


def _band(n_pairs, level):
    z = stats.norm.ppf(0.5 + level / 2)
    half = z / np.sqrt(np.maximum(n_pairs, 1))
    return -half, half


def acf(returns: ReturnSeries, max_lag: int, method: str = "pearson",
        level: float = DEFAULT_LEVEL) -> CorrelationEstimate:
    """Sample autocorrelation at lags ``1..max_lag``.

    ``method="pearson"`` correlates the leading and trailing subsamples with
    their own means and variances.  ``method="toeplitz"`` is the classical
    estimator ``gamma(k) / gamma(0)`` with one overall mean and divisor
    ``N``; its values always form a positive semi-definite sequence on
    gap-free data.
    """
    _check_lag(returns, max_lag)
    valid = returns.valid_values()
    mu = float(valid.mean())
    s = _lag_sums(returns, max_lag, mu)[:, 1:]
    n, sa, sb, saa, sbb, sab = s
    if method == "pearson":
        if np.any(n < 2):
            k = int(np.flatnonzero(n < 2)[0]) + 1
            raise UndefinedCorrelationError(f"fewer than 2 valid pairs at lag {k}")
        va = saa - sa * sa / n
        vb = sbb - sb * sb / n
        cov = sab - sa * sb / n
        scale = np.maximum(saa, sbb) * 1e-13
        bad = (va <= scale) | (vb <= scale)
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0]) + 1
            raise UndefinedCorrelationError(f"zero variance in a subsample at lag {k}")
        values = cov / np.sqrt(va * vb)
    elif method == "toeplitz":
        d = valid - mu
        g0 = float(d @ d)
        if g0 <= 0:
            raise UndefinedCorrelationError("zero variance series")
        values = sab / g0
    else:
        raise ParameterError(f"unknown acf method {method!r}")
    values = np.clip(values, -1.0, 1.0)
    lo, hi = _band(n, level)
    return CorrelationEstimate("acf", returns.kind, np.arange(1, max_lag + 1), values,
                               n.astype(np.int64), lo, hi, level, method)


def durbin_levinson(rho) -> np.ndarray:
    """Partial autocorrelations from autocorrelations ``rho[0..K-1]`` (lags 1..K)."""
    rho = np.asarray(rho, dtype=float)
    K = len(rho)
    out = np.zeros(K)
    if K == 0:
        return out
    phi = np.zeros(K)
    phi[0] = out[0] = rho[0]
    v = 1.0 - rho[0] ** 2
    if v <= 0:
        raise DegeneracyError(1)
    for k in range(1, K):
        num = rho[k] - phi[:k] @ rho[k - 1::-1]
        pkk = num / v
        if not abs(pkk) < 1:
            raise DegeneracyError(k + 1)
        phi[:k] = phi[:k] - pkk * phi[k - 1::-1]
        phi[k] = pkk
        out[k] = pkk
        v *= 1.0 - pkk * pkk
    return out


def pacf(returns: ReturnSeries, max_lag: int, method: str = "pearson",
         level: float = DEFAULT_LEVEL, acf_estimate: CorrelationEstimate | None = None) -> CorrelationEstimate:
    """PACF by Durbin-Levinson recursion on the sample ACF of the same method."""
    est = acf_estimate if acf_estimate is not None else acf(returns, max_lag, method, level)
    if est.max_lag < max_lag:
        raise ParameterError("supplied ACF is shorter than max_lag")
    values = durbin_levinson(est.values[:max_lag])
    return replace(est, kind="pacf", lags=est.lags[:max_lag], values=values,
                   n_effective=est.n_effective[:max_lag], noise_low=est.noise_low[:max_lag],
                   noise_high=est.noise_high[:max_lag], ci_low=None, ci_high=None)


# --------------------------------------------------------------------------
# bootstrap


@dataclass(frozen=True, eq=False)
class BootstrapCI:
    lags: np.ndarray
    low: np.ndarray
    high: np.ndarray
    level: float
    block_len: int
    replicates: int
    seed: int


def default_block_len(n: int) -> int:
    return max(1, math.ceil(math.sqrt(n)))


def _replicate(returns: ReturnSeries, max_lag, block_len, seed, index, method):
    n = len(returns)
    gen = rng.stream(seed, index)
    nblocks = -(-n // block_len)
    starts = gen.integers(0, n - block_len + 1, size=nblocks)
    idx = (starts[:, None] + np.arange(block_len)).ravel()[:n]
    seg = returns.segment[idx]
    joins = np.zeros(n, dtype=bool)
    joins[1:] = seg[1:] != seg[:-1]
    joins[::block_len] = False
    sample = ReturnSeries(returns.side, returns.interval, returns.timestamps, returns.values[idx],
                          returns.valid[idx], np.cumsum(joins), returns.kind)
    try:
        return acf(sample, max_lag, method).values
    except (UndefinedCorrelationError, ParameterError):
        return np.full(max_lag, np.nan)


def block_bootstrap_ci(returns: ReturnSeries, max_lag: int, block_len: int | None = None,
                       replicates: int = 1000, level: float = DEFAULT_LEVEL, seed: int = 0,
                       method: str = "pearson", workers: int | None = None) -> BootstrapCI:
    """Moving-block bootstrap percentile intervals for the ACF.

    Each replicate draws ``ceil(N / block_len)`` blocks of consecutive slots
    with replacement, truncates to ``N`` and recomputes the ACF.  Replicate
    ``i`` uses random stream ``(seed, i)``, so the result does not depend on
    ``workers``.  Bounds are nearest-rank percentiles at ``(1 -+ level) / 2``.
    """
    n = len(returns)
    if block_len is None:
        block_len = default_block_len(n)
    if block_len < 1 or block_len > n:
        raise ParameterError(f"block_len must be in 1..{n}, got {block_len}")
    if replicates < 100:
        raise ParameterError("at least 100 bootstrap replicates are required")
    if not 0 < level < 1:
        raise ParameterError("level must be in (0, 1)")
    _check_lag(returns, max_lag)
    if workers is None:
        workers = int(os.environ.get("LOBVOL_THREADS", "1") or 1)

    def run(i):
        return _replicate(returns, max_lag, block_len, seed, i, method)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(run, range(replicates)))
    else:
        reps = [run(i) for i in range(replicates)]
    reps = np.sort(np.vstack(reps), axis=0)
    lo_q, hi_q = 100 * (1 - level) / 2, 100 * (1 + level) / 2
    low = np.empty(max_lag)
    high = np.empty(max_lag)
    for k in range(max_lag):
        col = reps[:, k]
        col = col[np.isfinite(col)]
        low[k] = nearest_rank(col, lo_q) if len(col) else np.nan
        high[k] = nearest_rank(col, hi_q) if len(col) else np.nan
    return BootstrapCI(np.arange(1, max_lag + 1), low, high, level, block_len, replicates, seed)


def with_bootstrap(est: CorrelationEstimate, ci: BootstrapCI) -> CorrelationEstimate:
    k = min(est.max_lag, len(ci.lags))
    return replace(est, ci_low=ci.low[:k], ci_high=ci.high[:k])


# --------------------------------------------------------------------------
# Box-Jenkins style order diagnosis


@dataclass(frozen=True)
class OrderDiagnosis:
    cutoff_lag_acf: int | None
    cutoff_lag_pacf: int | None
    tail_off_pacf: bool
    suggested_model: str


def cutoff_lag(est: CorrelationEstimate, window: int = DEFAULT_WINDOW) -> int | None:
    """Last lag before the estimate first stays inside its noise band for ``window`` lags.

    Returns ``None`` when no such run exists within ``max_lag``.
    """
    inside = ~est.outside_band()
    run = 0
    for i, ok in enumerate(inside):
        run = run + 1 if ok else 0
        if run == window:
            return i - window + 1
    return None


def ma_order_diagnosis(est_acf: CorrelationEstimate, est_pacf: CorrelationEstimate,
                       window: int = DEFAULT_WINDOW) -> OrderDiagnosis:
    """Classify ACF/PACF cut-off versus tail-off behaviour.

    ACF cuts off at ``p`` while the PACF keeps leaving its band past ``p``:
    ``MA(p)``.  PACF cuts off at ``p`` while the ACF persists: ``AR(p)``.
    Neither cuts off: ``ARMA``.  Both in band from lag 1: ``none``.
    """
    if est_acf.max_lag != est_pacf.max_lag:
        raise ParameterError("ACF and PACF must share max_lag")
    a = cutoff_lag(est_acf, window)
    p = cutoff_lag(est_pacf, window)
    tail_off = a is not None and (p is None or p > a)
    if a == 0 and p == 0:
        model = "none"
    elif tail_off and a > 0:
        model = f"MA({a})"
    elif p is not None and p > 0 and (a is None or a > p):
        model = f"AR({p})"
    elif a is None and p is None:
        model = "ARMA"
    else:
        model = "inconclusive"
    return OrderDiagnosis(a, p, tail_off, model)
