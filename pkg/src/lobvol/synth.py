"""Synthetic processes with known structure, used as oracles for the estimators.

All draws come from :func:`lobvol.rng.stream`, so a ``GeneratorSpec`` and
its seed fully determine the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from . import rng
from .errors import ParameterError
from .series import ReturnSeries, VolumeSeries, volume_series_from_array

KINDS = ("iid_normal", "ma", "ar1", "quote_flicker", "long_memory", "clustered")


@dataclass(frozen=True)
class GeneratorSpec:
    """What to generate.

    ``params`` by kind:

    * ``ma``: ``theta`` (sequence, lag 1 first)
    * ``ar1``: ``phi``
    * ``long_memory``: ``hurst`` in (0.5, 1)
    * ``clustered``: ``period`` (slots) and ``amplitude`` of a log-sine envelope
    * ``quote_flicker``: ``base`` volumes, ``flicker`` volumes, flicker
      probability ``p`` and base-level switch probability ``p_jump``
    """

    kind: str
    length: int
    seed: int = 0
    params: dict = field(default_factory=dict)
    interval: int = 10

    def __post_init__(self):
        validate(self)


def validate(spec: GeneratorSpec) -> None:
    p = spec.params
    if spec.kind not in KINDS:
        raise ParameterError(f"unknown generator kind {spec.kind!r}")
    if spec.length < 1:
        raise ParameterError("length must be positive")
    if spec.kind == "ma":
        theta = np.asarray(p.get("theta", ()), dtype=float)
        if theta.ndim != 1 or len(theta) == 0 or not np.all(np.isfinite(theta)):
            raise ParameterError("ma needs a non-empty finite theta sequence")
    elif spec.kind == "ar1":
        phi = p.get("phi")
        if phi is None or not math.isfinite(phi) or not abs(phi) < 1:
            raise ParameterError("ar1 needs |phi| < 1")
    elif spec.kind == "long_memory":
        h = p.get("hurst")
        if h is None or not 0.5 < h < 1:
            raise ParameterError("long_memory needs hurst in (0.5, 1)")
    elif spec.kind == "clustered":
        if p.get("period", 1000) <= 0 or p.get("amplitude", 1.5) < 0:
            raise ParameterError("clustered needs period > 0 and amplitude >= 0")
    elif spec.kind == "quote_flicker":
        base = np.asarray(p.get("base", (2.0,)), dtype=float)
        flick = np.asarray(p.get("flicker", (8.0,)), dtype=float)
        if len(base) == 0 or len(flick) == 0 or np.any(base <= 0) or np.any(flick <= 0):
            raise ParameterError("quote_flicker palettes must hold positive volumes")
        for name in ("p", "p_jump"):
            if not 0 <= p.get(name, 0.05 if name == "p" else 0.0) <= 1:
                raise ParameterError(f"{name} must be a probability")


# --------------------------------------------------------------------------
# generators


def fgn_autocovariance(hurst: float, lags) -> np.ndarray:
    """Unit-variance fractional Gaussian noise autocovariance at integer ``lags``."""
    k = np.abs(np.asarray(lags, dtype=float))
    h2 = 2 * hurst
    return 0.5 * ((k + 1) ** h2 - 2 * k ** h2 + np.abs(k - 1) ** h2)


def fractional_gaussian_noise(n: int, hurst: float, gen: np.random.Generator) -> np.ndarray:
    """Exact fGn sample by circulant embedding of size ``2n`` (Davies-Harte)."""
    gamma = fgn_autocovariance(hurst, np.arange(n + 1))
    row = np.concatenate([gamma, gamma[n - 1:0:-1]])
    m = len(row)
    lam = np.fft.fft(row).real
    if lam.min() < -1e-9 * lam.max():
        raise ParameterError("circulant embedding is not non-negative definite")
    lam = np.clip(lam, 0.0, None)
    w = gen.standard_normal(m) + 1j * gen.standard_normal(m)
    y = np.fft.fft(np.sqrt(lam / m) * w)
    return y.real[:n]


def _ma(spec, gen):
    theta = np.asarray(spec.params["theta"], dtype=float)
    q = len(theta)
    e = gen.standard_normal(spec.length + q)
    return np.convolve(e, np.r_[1.0, theta], mode="valid")


def _ar1(spec, gen):
    phi = float(spec.params["phi"])
    e = gen.standard_normal(spec.length)
    x0 = e[0] / math.sqrt(1 - phi * phi)
    if spec.length == 1:
        return np.array([x0])
    rest, _ = signal.lfilter([1.0], [1.0, -phi], e[1:], zi=[phi * x0])
    return np.r_[x0, rest]


def _clustered(spec, gen):
    period = spec.params.get("period", 1000)
    amp = spec.params.get("amplitude", 1.5)
    t = np.arange(spec.length)
    envelope = np.exp(amp * np.sin(2 * np.pi * t / period))
    return envelope * gen.standard_normal(spec.length)


@dataclass(frozen=True, eq=False)
class FlickerSample:
    series: VolumeSeries
    flicker_slots: np.ndarray    # slot t holds the transient volume; t - 1 and t + 1 hold the base


def quote_flicker(spec: GeneratorSpec) -> FlickerSample:
    """Piecewise-constant best-quote volume with one-slot transient quotes.

    A transient order of volume ``W`` replaces the standing volume ``V`` for
    exactly one slot, producing the return pair ``(ln W - ln V, ln V - ln W)``.
    """
    p = spec.params
    base = np.asarray(p.get("base", (2.0,)), dtype=float)
    flick = np.asarray(p.get("flicker", (8.0,)), dtype=float)
    p_flicker = p.get("p", 0.05)
    p_jump = p.get("p_jump", 0.0)
    n = spec.length
    gen = rng.stream(spec.seed)

    jumps = gen.random(n) < p_jump
    jumps[0] = True
    level_idx = gen.integers(0, len(base), size=n)
    level = base[level_idx[np.maximum.accumulate(np.where(jumps, np.arange(n), 0))]]
    values = level.copy()

    proposals = np.flatnonzero(gen.random(n) < p_flicker)
    choice = flick[gen.integers(0, len(flick), size=n)]
    slots = []
    last = -3
    for t in proposals:
        if t < 1 or t > n - 2 or t - last < 2:
            continue
        if not (level[t - 1] == level[t] == level[t + 1]) or choice[t] == level[t]:
            continue
        values[t] = choice[t]
        slots.append(t)
        last = t
    series = volume_series_from_array(values, interval=spec.interval, side=p.get("side", "bid"))
    return FlickerSample(series, np.asarray(slots, dtype=np.int64))


def generate(spec: GeneratorSpec):
    """Draw the process described by ``spec``.

    Returns a :class:`VolumeSeries` for ``quote_flicker`` and a signed
    :class:`ReturnSeries` for every other kind.
    """
    if spec.kind == "quote_flicker":
        return quote_flicker(spec).series
    gen = rng.stream(spec.seed)
    if spec.kind == "iid_normal":
        x = gen.standard_normal(spec.length)
    elif spec.kind == "ma":
        x = _ma(spec, gen)
    elif spec.kind == "ar1":
        x = _ar1(spec, gen)
    elif spec.kind == "long_memory":
        x = fractional_gaussian_noise(spec.length, spec.params["hurst"], gen)
    else:
        x = _clustered(spec, gen)
    return ReturnSeries.from_array(x, interval=spec.interval)


def theoretical_acf(spec: GeneratorSpec, max_lag: int) -> np.ndarray:
    """Model autocorrelation at lags ``1..max_lag``."""
    lags = np.arange(1, max_lag + 1)
    if spec.kind == "iid_normal":
        return np.zeros(max_lag)
    if spec.kind == "ar1":
        return float(spec.params["phi"]) ** lags
    if spec.kind == "long_memory":
        return fgn_autocovariance(spec.params["hurst"], lags)
    if spec.kind == "ma":
        th = np.r_[1.0, np.asarray(spec.params["theta"], dtype=float)]
        q = len(th) - 1
        denom = th @ th
        out = np.zeros(max_lag)
        for k in range(1, min(q, max_lag) + 1):
            out[k - 1] = th[:-k] @ th[k:] / denom
        return out
    raise ParameterError(f"no closed-form ACF for kind {spec.kind!r}")
