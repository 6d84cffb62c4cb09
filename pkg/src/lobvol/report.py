"""CSV renderers and the full ``report`` pipeline.

Every renderer returns text, so single commands and the report share one
formatting path.  Floats are printed with ``repr`` and NaN as an empty
cell, which keeps reruns byte-identical.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from decimal import Decimal
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import cluster_prob
from .correlo import (acf, block_bootstrap_ci, default_block_len, ma_order_diagnosis, pacf,
                      with_bootstrap)
from .distfit import ad_normality_battery, scan_breakpoints
from .errors import LobvolError, ParameterError
from .excess import excess_distribution, excess_volume
from .ingest import DEFAULT_MAX_GAP, FormatConfig, decimal_text, read_snapshots
from .series import (best_volume_series, descriptive_stats, empirical_cdf, lag_scatter, log_returns,
                     resample)
from .streaks import detect_streaks, fit_extreme_volume_decay, streak_duration_distribution

ANALYSES = ("stats", "cdf", "gaussianity", "acf", "scatter", "abs_acf", "cluster", "streaks", "excess")


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def render_series(series) -> str:
    from .series import write_series_csv

    buf = io.StringIO()
    write_series_csv(series, buf)
    return buf.getvalue()


def render_stats(rows) -> str:
    """``rows`` is a list of ``(side, scale, DescriptiveStats)``."""
    return _csv(["side", "scale", "n", "median", "iqr", "mean", "std_dev", "skewness", "kurtosis"],
                [[side, scale, s.n, s.median, s.iqr, s.mean, s.std_dev, s.skewness, s.kurtosis]
                 for side, scale, s in rows])


def render_cdf(cdf) -> str:
    v, f = cdf
    return _csv(["value", "F"], zip(v, f))


def render_correlation(est) -> str:
    lo = est.ci_low if est.ci_low is not None else [None] * len(est.lags)
    hi = est.ci_high if est.ci_high is not None else [None] * len(est.lags)
    return _csv(["lag", "value", "noise_low", "noise_high", "ci_low", "ci_high"],
                zip(est.lags, est.values, est.noise_low, est.noise_high, lo, hi))


def render_cluster(c) -> str:
    return _csv(["tau", "p", "baseline", "band_low", "band_high", "n_pairs"],
                zip(c.taus, c.p_values, [c.baseline] * len(c.taus), c.band_low, c.band_high, c.n_exceed))


def render_streaks(records) -> str:
    return _csv(["start_slot", "duration", "volume"],
                ([r.start_slot, r.duration, _volume_text(r.volume)] for r in records))


def _volume_text(v):
    return decimal_text(v) if isinstance(v, Decimal) else repr(float(v))


def render_streak_distribution(d) -> str:
    return _csv(["duration", "count", "cdf"], zip(d.durations, d.counts, d.cdf))


def render_streak_fit(fit) -> str:
    text = _csv(["tau", "topk_mean", "n"], zip(fit.durations, fit.top_k_mean, fit.n))
    lo, hi = fit.fit_range
    return text + (f"# fit amplitude={fit.amplitude!r} rate={fit.rate!r} r2={fit.r_squared!r} "
                   f"k={fit.k} d_max={fit.d_max} range={lo}..{hi} sparse={int(fit.sparse.sum())}\n")


def render_excess(ex) -> str:
    return _csv(["slot", "v_ex", "valid"], zip(range(len(ex.values)), ex.values, ex.valid))


def render_excess_hist(dist) -> str:
    return _csv(["bin_left", "bin_right", "count", "frequency"],
                zip(dist.edges[:-1], dist.edges[1:], dist.counts, dist.frequency))


def excess_summary(dist) -> dict:
    return {"n": dist.n, "eps": dist.eps,
            "tail_mass": {repr(k): v for k, v in dist.tail_mass.items()},
            "jump_mass": {repr(k): v for k, v in dist.jump_mass.items()}}


def render_ad(results) -> str:
    return _csv(["scale", "n", "a2", "crit", "reject"],
                ([r.scale, r.n, r.a_squared, r.critical_value, r.reject] for r in results))


def render_powerlaw(fit) -> str:
    return _csv(["segment", "lag_lo", "lag_hi", "k", "beta", "stderr", "r2"],
                ([i, s.lag_lo, s.lag_hi, s.k, s.beta, s.stderr_beta, s.r_squared]
                 for i, s in enumerate(fit.segments)))


def render_scatter(pair) -> str:
    return _csv(["r_t", "r_t1"], zip(*pair))


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# configuration


def _ints(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(t) for t in text)
    return tuple(int(t) for t in str(text).replace(" ", "").split(",") if t)


def _floats(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(t) for t in text)
    return tuple(float(t) for t in str(text).replace(" ", "").split(",") if t)


def _strs(text):
    if isinstance(text, (list, tuple)):
        return tuple(str(t) for t in text)
    return tuple(t for t in str(text).replace(" ", "").split(",") if t)


@dataclass
class RunConfig:
    inputs: tuple = ()
    out_dir: str = "report"
    layout: str = "long"
    delimiter: str = ","
    max_gap: int = DEFAULT_MAX_GAP
    sides: tuple = ("ask", "bid")
    scales: tuple = (10,)
    ad_scales: tuple = (10, 60, 180, 300, 3600, 28800)
    cluster_scales: tuple = (10, 900)
    analyses: tuple = ANALYSES
    max_lag: int = 50
    abs_max_lag: int = 3000
    q: tuple = (90.0, 99.0)
    max_tau: int = 200
    top_k: int = 10
    d_max: int = 45
    breakpoints: tuple = (60, 720)
    max_breaks: int = 2
    bootstrap: int = 0
    block: str = "auto"
    level: float = 0.99
    seed: int = 7
    bin_width: float = 0.01
    tails: tuple = (0.75,)

    _CONVERT = {
        "inputs": _strs, "sides": _strs, "analyses": _strs, "scales": _ints, "ad_scales": _ints,
        "cluster_scales": _ints, "breakpoints": _ints, "q": _floats, "tails": _floats,
        "max_gap": int, "max_lag": int, "abs_max_lag": int, "max_tau": int, "top_k": int, "d_max": int,
        "max_breaks": int, "bootstrap": int, "seed": int, "level": float, "bin_width": float,
        "out_dir": str, "layout": str, "delimiter": str, "block": str,
    }

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        cfg = cls()
        cfg.update(values)
        return cfg

    def update(self, values: dict) -> None:
        names = {f.name for f in fields(self)}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in names:
                raise ParameterError(f"unknown config key {key!r}")
            if raw is None:
                continue
            try:
                setattr(self, key, self._CONVERT[key](raw))
            except (TypeError, ValueError) as exc:
                raise ParameterError(f"bad value for {key}: {raw!r} ({exc})") from None

    def as_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def validate(self) -> None:
        """Check every parameter (and input existence) before any computation."""
        if not self.inputs:
            raise ParameterError("no input files given")
        for p in self.inputs:
            if not Path(p).is_file():
                raise ParameterError(f"input file {p} does not exist")
        FormatConfig(layout=self.layout, delimiter=self.delimiter)
        for s in self.sides:
            if s not in ("ask", "bid"):
                raise ParameterError(f"unknown side {s!r}")
        for a in self.analyses:
            if a not in ANALYSES:
                raise ParameterError(f"unknown analysis {a!r}; choose from {', '.join(ANALYSES)}")
        for name in ("scales", "ad_scales", "cluster_scales"):
            for s in getattr(self, name):
                if s <= 0 or s % 10:
                    raise ParameterError(f"{name}: scale {s}s is not a positive multiple of 10s")
        if self.max_gap < 10:
            raise ParameterError("max_gap must be at least the 10s nominal interval")
        for name in ("max_lag", "abs_max_lag", "max_tau", "top_k", "d_max"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be positive")
        for q in self.q:
            if not 0 < q < 100:
                raise ParameterError(f"q {q} outside (0, 100)")
        if self.bootstrap and self.bootstrap < 100:
            raise ParameterError("bootstrap needs 0 (off) or at least 100 replicates")
        if self.block != "auto" and (not self.block.isdigit() or int(self.block) < 1):
            raise ParameterError("block must be 'auto' or a positive integer")
        if not 0 < self.level < 1:
            raise ParameterError("level must be in (0, 1)")
        if not 0 < self.bin_width < 2:
            raise ParameterError("bin_width must be in (0, 2)")
        if self.max_breaks < 0:
            raise ParameterError("max_breaks must be non-negative")
        if not 0 <= self.seed < 2 ** 64:
            raise ParameterError("seed must be in [0, 2**64)")


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; an optional ``[lobvol]`` section header is allowed."""
    text = Path(path).read_text()
    if not text.lstrip().startswith("["):
        text = "[lobvol]\n" + text
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(text)
    section = parser["lobvol"] if parser.has_section("lobvol") else parser[parser.sections()[0]]
    return dict(section)


# --------------------------------------------------------------------------
# pipeline


class _Data:
    """Lazily built series shared by the analyses of one run."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.stream = read_snapshots(cfg.inputs, FormatConfig(layout=cfg.layout, delimiter=cfg.delimiter),
                                     max_gap=cfg.max_gap)
        self.base = {side: best_volume_series(self.stream, side) for side in ("ask", "bid")}
        self._acf = {}
        self._acf_locks = {}
        self._lock = threading.Lock()

    def volumes(self, side, scale):
        return resample(self.base[side], scale)

    def returns(self, side, scale):
        return log_returns(self.volumes(side, scale))

    def acf(self, side, scale, absolute):
        """ACF shared by the estimate writer and the tasks built on it; computed once."""
        key = (side, scale, absolute)
        with self._lock:
            lock = self._acf_locks.setdefault(key, threading.Lock())
        with lock:
            if key not in self._acf:
                cfg = self.cfg
                r = self.returns(side, scale)
                if absolute:
                    r = r.absolute()
                    a = acf(r, cfg.abs_max_lag, level=cfg.level)
                    if cfg.bootstrap:
                        block = default_block_len(len(r)) if cfg.block == "auto" else int(cfg.block)
                        a = with_bootstrap(a, block_bootstrap_ci(r, cfg.abs_max_lag, block, cfg.bootstrap,
                                                                 cfg.level, cfg.seed))
                else:
                    a = acf(r, cfg.max_lag, level=cfg.level)
                self._acf[key] = a
            return self._acf[key]


def _tasks(cfg: RunConfig, data: _Data):
    """Yield ``(name, callable)``; each callable returns ``{filename: text}``."""
    on = set(cfg.analyses)
    if "stats" in on:
        def stats_task():
            rows = [(side, scale, descriptive_stats(data.volumes(side, scale)))
                    for side in cfg.sides for scale in cfg.scales]
            return {"stats.csv": render_stats(rows)}
        yield "stats", stats_task
    for side in cfg.sides:
        if "cdf" in on:
            for scale in cfg.scales:
                yield f"cdf/{side}/{scale}", (lambda side=side, scale=scale: {
                    f"cdf_{side}_{scale}s.csv": render_cdf(empirical_cdf(data.volumes(side, scale)))})
        if "gaussianity" in on:
            yield f"gaussianity/{side}", (lambda side=side: {
                f"gaussianity_{side}.csv": render_ad(
                    ad_normality_battery([data.returns(side, s) for s in cfg.ad_scales]))})
        for scale in cfg.scales:
            tag = f"{side}_{scale}s"
            if "acf" in on:
                yield f"acf/{side}/{scale}", (lambda side=side, scale=scale, tag=tag: {
                    f"acf_{tag}.csv": render_correlation(data.acf(side, scale, False))})

                def pacf_task(side=side, scale=scale, tag=tag):
                    a = data.acf(side, scale, False)
                    p = pacf(data.returns(side, scale), cfg.max_lag, level=cfg.level, acf_estimate=a)
                    return {f"pacf_{tag}.csv": render_correlation(p),
                            f"ma_diagnosis_{tag}.json": _json(asdict(ma_order_diagnosis(a, p)))}
                yield f"pacf/{side}/{scale}", pacf_task
            if "scatter" in on:
                yield f"scatter/{side}/{scale}", (lambda side=side, scale=scale, tag=tag: {
                    f"scatter_{tag}.csv": render_scatter(lag_scatter(data.returns(side, scale)))})
            if "abs_acf" in on:
                yield f"abs_acf/{side}/{scale}", (lambda side=side, scale=scale, tag=tag: {
                    f"abs_acf_{tag}.csv": render_correlation(data.acf(side, scale, True))})

                def powerlaw_task(side=side, scale=scale, tag=tag):
                    cands = [b for b in cfg.breakpoints if 1 < b <= cfg.abs_max_lag]
                    fit = scan_breakpoints(data.acf(side, scale, True), cands, min(cfg.max_breaks, len(cands)))
                    return {f"powerlaw_{tag}.csv": render_powerlaw(fit)}
                yield f"powerlaw/{side}/{scale}", powerlaw_task
        if "cluster" in on:
            for scale in cfg.cluster_scales:
                for q in cfg.q:
                    yield f"cluster/{side}/{scale}/{q:g}", (lambda side=side, scale=scale, q=q: {
                        f"cluster_q{q:g}_{side}_{scale}s.csv": render_cluster(
                            cluster_prob(data.returns(side, scale).absolute(), q, cfg.max_tau, cfg.level))})
        if "streaks" in on:
            def streak_task(side=side):
                recs = detect_streaks(data.base[side])
                return {f"streaks_{side}.csv": render_streaks(recs),
                        f"streak_dist_{side}.csv": render_streak_distribution(streak_duration_distribution(recs)),
                        f"streak_fit_{side}.csv": render_streak_fit(
                            fit_extreme_volume_decay(recs, cfg.top_k, cfg.d_max))}
            yield f"streaks/{side}", streak_task
    if "excess" in on:
        for scale in cfg.scales:
            def excess_task(scale=scale):
                ex = excess_volume(data.volumes("ask", scale), data.volumes("bid", scale))
                dist = excess_distribution(ex, cfg.bin_width, cfg.tails)
                return {f"excess_{scale}s.csv": render_excess(ex),
                        f"excess_hist_{scale}s.csv": render_excess_hist(dist),
                        f"excess_summary_{scale}s.json": _json(excess_summary(dist))}
            yield f"excess/{scale}", excess_task


def _threads():
    try:
        return max(1, int(os.environ.get("LOBVOL_THREADS", "1")))
    except ValueError:
        return 1


def run_report(cfg: RunConfig) -> dict:
    """Run every enabled analysis, write outputs and ``manifest.json``; return the manifest.

    A failing analysis is recorded under ``errors`` and the others still run.
    """
    cfg.validate()
    data = _Data(cfg)
    tasks = list(_tasks(cfg, data))

    def run(task):
        name, fn = task
        try:
            return name, fn(), None
        except LobvolError as exc:
            return name, {}, f"{type(exc).__name__}: {exc}"

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(run, tasks))

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {}
    errors = []
    for name, files, err in results:
        if err:
            errors.append({"analysis": name, "error": err})
        for fname in sorted(files):
            payload = files[fname].encode("utf-8")
            (out_dir / fname).write_bytes(payload)
            outputs[fname] = hashlib.sha256(payload).hexdigest()
    manifest = {
        "version": __version__,
        "config": cfg.as_dict(),
        "seed": cfg.seed,
        "records": len(data.stream.records),
        "segments": len(data.stream.segments),
        "quarantined": len(data.stream.quarantine),
        "outputs": dict(sorted(outputs.items())),
        "errors": errors,
    }
    (out_dir / "manifest.json").write_text(_json(manifest))
    return manifest
