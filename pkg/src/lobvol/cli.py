"""lobvol: best-quote volume statistics from limit order book snapshots.

Exit codes: 0 success, 2 invalid input or parameters, 3 an analysis failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import report as rp
from .clustering import cluster_prob
from .correlo import acf, block_bootstrap_ci, default_block_len, pacf, with_bootstrap
from .distfit import ad_normality_battery, fit_power_law, scan_breakpoints
from .errors import FormatError, LobvolError, ParameterError, ValidationError
from .excess import excess_distribution, excess_volume
from .ingest import FormatConfig, read_snapshots, stream_index
from .series import (best_volume_series, descriptive_stats, empirical_cdf, log_returns,
                     read_returns_csv, read_volume_csv, resample)
from .streaks import detect_streaks, fit_extreme_volume_decay, streak_duration_distribution
from .synth import GeneratorSpec, generate

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 2, 3


def _emit(text: str, path) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _stream(args):
    if not args.input:
        raise ParameterError("--input is required")
    cfg = FormatConfig(layout=args.layout, delimiter=args.delimiter)
    max_gap = rp.DEFAULT_MAX_GAP if args.max_gap is None else args.max_gap
    return read_snapshots(args.input, cfg, max_gap=max_gap, strict=args.strict)


def _volumes(args, side=None):
    side = side or args.side
    if getattr(args, "series", None):
        with open(args.series) as fh:
            vs = read_volume_csv(fh, side=side)
    else:
        vs = best_volume_series(_stream(args), side)
    return resample(vs, args.scale) if args.scale else vs


def _returns(args):
    if getattr(args, "returns", None):
        with open(args.returns) as fh:
            r = read_returns_csv(fh, side=args.side)
    else:
        r = log_returns(_volumes(args))
    return r.absolute() if getattr(args, "abs", False) else r


# --------------------------------------------------------------------------
# commands


def cmd_ingest(args):
    stream = _stream(args)
    _emit(json.dumps(stream_index(stream), indent=2, sort_keys=True) + "\n", args.out)
    if stream.quarantine:
        print(f"{len(stream.quarantine)} invariant violation(s) quarantined", file=sys.stderr)


def cmd_series(args):
    _emit(rp.render_series(_volumes(args)), args.out)


def cmd_returns(args):
    _emit(rp.render_series(_returns(args)), args.out)


def cmd_stats(args):
    rows = []
    for side in (("ask", "bid") if args.side == "both" else (args.side,)):
        rows.append((side, args.scale or 10, descriptive_stats(_volumes(args, side))))
    _emit(rp.render_stats(rows), args.out)


def cmd_cdf(args):
    _emit(rp.render_cdf(empirical_cdf(_volumes(args))), args.out)


def cmd_acf(args):
    r = _returns(args)
    est = acf(r, args.max_lag, method=args.method, level=args.level)
    if args.bootstrap:
        block = default_block_len(len(r)) if args.block == "auto" else int(args.block)
        ci = block_bootstrap_ci(r, args.max_lag, block, args.bootstrap, args.level, args.seed,
                                method=args.method)
        est = with_bootstrap(est, ci)
    _emit(rp.render_correlation(est), args.out)


def cmd_pacf(args):
    r = _returns(args)
    _emit(rp.render_correlation(pacf(r, args.max_lag, method=args.method, level=args.level)), args.out)


def cmd_cluster(args):
    r = _returns(args).absolute()
    _emit(rp.render_cluster(cluster_prob(r, args.q, args.max_tau, args.level)), args.out)


def cmd_streaks(args):
    recs = detect_streaks(_volumes(args))
    _emit(rp.render_streaks(recs), args.out)
    if args.dist_out:
        _emit(rp.render_streak_distribution(streak_duration_distribution(recs, args.percentile)), args.dist_out)
    if args.fit_out:
        _emit(rp.render_streak_fit(fit_extreme_volume_decay(recs, args.top_k, args.d_max)), args.fit_out)


def cmd_excess(args):
    ex = excess_volume(_volumes(args, "ask"), _volumes(args, "bid"))
    dist = excess_distribution(ex, args.bin, rp._floats(args.tails))
    _emit(rp.render_excess(ex), args.out)
    if args.hist_out:
        _emit(rp.render_excess_hist(dist), args.hist_out)
    print(json.dumps(rp.excess_summary(dist), sort_keys=True), file=sys.stderr)


def cmd_gaussianity(args):
    args.scale = None
    base = _volumes(args)
    scales = rp._ints(args.scales)
    series = [log_returns(resample(base, s)) for s in scales]
    _emit(rp.render_ad(ad_normality_battery(series, args.significance)), args.out)


def cmd_powerlaw(args):
    r = _returns(args).absolute()
    est = acf(r, args.max_lag, level=args.level)
    lo, hi = args.lag_min, args.lag_max or args.max_lag
    breaks = rp._ints(args.breaks)
    if args.scan:
        fit = scan_breakpoints(est, breaks, args.max_breaks, lo, hi)
    else:
        fit = fit_power_law(est, breaks, lo, hi)
    _emit(rp.render_powerlaw(fit), args.out)


def cmd_synth(args):
    params = {}
    if args.theta:
        params["theta"] = rp._floats(args.theta)
    for key in ("phi", "hurst", "period", "amplitude", "p", "p_jump"):
        if getattr(args, key) is not None:
            params[key] = getattr(args, key)
    if args.base:
        params["base"] = rp._floats(args.base)
    if args.flicker:
        params["flicker"] = rp._floats(args.flicker)
    spec = GeneratorSpec(args.kind, args.n, args.seed, params)
    _emit(rp.render_series(generate(spec)), args.out)


def cmd_report(args, file_values):
    cfg = rp.RunConfig.from_mapping(file_values)
    flags = {k: v for k, v in {
        "inputs": args.input, "out_dir": args.out, "sides": args.sides, "scales": args.scales,
        "analyses": args.analyses, "seed": args.seed, "bootstrap": args.bootstrap,
        "max_gap": args.max_gap, "layout": args.layout if args.layout != "long" else None,
    }.items() if v is not None}
    cfg.update(flags)
    manifest = rp.run_report(cfg)
    for err in manifest["errors"]:
        print(f"{err['analysis']}: {err['error']}", file=sys.stderr)
    return EXIT_FAILED if manifest["errors"] else EXIT_OK


# --------------------------------------------------------------------------
# parser


def _source_args(p, returns=False, sides=("ask", "bid")):
    p.add_argument("--input", nargs="+", help="snapshot CSV file(s), in time order")
    p.add_argument("--series", help="volume series CSV instead of snapshots")
    if returns:
        p.add_argument("--returns", help="return series CSV instead of snapshots")
    p.add_argument("--side", choices=sides, default="ask")
    p.add_argument("--scale", type=int, default=None, help="resampling interval in seconds")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file; flags override it")
    common.add_argument("--layout", choices=("long", "wide"), default="long")
    common.add_argument("--delimiter", default=",")
    common.add_argument("--max-gap", type=int, default=None, help="split segments at gaps above this (s), default 30")
    common.add_argument("--strict", action="store_true", help="fail on the first invalid snapshot")
    common.add_argument("--out", default=None)

    parser = argparse.ArgumentParser(prog="lobvol", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="parse and index snapshot files")
    p.add_argument("--input", nargs="+", required=True)
    p.set_defaults(func=cmd_ingest)

    for name, func, help_ in (("series", cmd_series, "best-quote volume series"),
                              ("cdf", cmd_cdf, "empirical CDF of volumes")):
        p = sub.add_parser(name, parents=[common], help=help_)
        _source_args(p)
        p.set_defaults(func=func)

    p = sub.add_parser("returns", parents=[common], help="log volume returns")
    _source_args(p)
    p.add_argument("--abs", action="store_true")
    p.set_defaults(func=cmd_returns)

    p = sub.add_parser("stats", parents=[common], help="descriptive statistics")
    _source_args(p, sides=("ask", "bid", "both"))
    p.set_defaults(func=cmd_stats)

    for name, func in (("acf", cmd_acf), ("pacf", cmd_pacf)):
        p = sub.add_parser(name, parents=[common], help=f"{name.upper()} of volume returns")
        _source_args(p, returns=True)
        p.add_argument("--abs", action="store_true", help="use absolute returns")
        p.add_argument("--max-lag", type=int, default=50)
        p.add_argument("--method", choices=("pearson", "toeplitz"), default="pearson")
        p.add_argument("--level", type=float, default=0.99)
        if name == "acf":
            p.add_argument("--bootstrap", type=int, default=0, help="replicates (0 = off)")
            p.add_argument("--block", default="auto")
            p.add_argument("--seed", type=int, default=7)
        p.set_defaults(func=func)

    p = sub.add_parser("cluster-prob", parents=[common], help="conditional exceedance probabilities")
    _source_args(p, returns=True)
    p.add_argument("--q", type=float, default=99.0)
    p.add_argument("--max-tau", type=int, default=200)
    p.add_argument("--level", type=float, default=0.99)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("streaks", parents=[common], help="constant-volume streaks")
    _source_args(p)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--d-max", type=int, default=45)
    p.add_argument("--percentile", type=float, default=99.0)
    p.add_argument("--dist-out")
    p.add_argument("--fit-out")
    p.set_defaults(func=cmd_streaks)

    p = sub.add_parser("excess", parents=[common], help="excess volume at the spread")
    p.add_argument("--input", nargs="+")
    p.add_argument("--scale", type=int, default=None)
    p.add_argument("--bin", type=float, default=0.01)
    p.add_argument("--tails", default="0.75")
    p.add_argument("--hist-out")
    p.set_defaults(func=cmd_excess)

    p = sub.add_parser("gaussianity", parents=[common], help="Anderson-Darling battery across scales")
    _source_args(p)
    p.add_argument("--scales", default="10,60,180,300,3600,28800")
    p.add_argument("--significance", type=float, default=10.0)
    p.set_defaults(func=cmd_gaussianity)

    p = sub.add_parser("powerlaw", parents=[common], help="power-law fit of the absolute-return ACF")
    _source_args(p, returns=True)
    p.add_argument("--max-lag", type=int, default=3000)
    p.add_argument("--lag-min", type=int, default=None)
    p.add_argument("--lag-max", type=int, default=None)
    p.add_argument("--breaks", default="60,720")
    p.add_argument("--scan", action="store_true", help="choose breakpoints from --breaks")
    p.add_argument("--max-breaks", type=int, default=2)
    p.add_argument("--level", type=float, default=0.99)
    p.set_defaults(func=cmd_powerlaw)

    p = sub.add_parser("synth", parents=[common], help="synthetic oracle series")
    p.add_argument("--kind", required=True,
                   choices=("iid_normal", "ma", "ar1", "quote_flicker", "long_memory", "clustered"))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--theta")
    p.add_argument("--phi", type=float)
    p.add_argument("--hurst", type=float)
    p.add_argument("--period", type=float)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--p-jump", type=float)
    p.add_argument("--base")
    p.add_argument("--flicker")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", parents=[common], help="full analysis bundle with manifest")
    p.add_argument("--input", nargs="+")
    p.add_argument("--sides")
    p.add_argument("--scales")
    p.add_argument("--analyses")
    p.add_argument("--seed", type=int)
    p.add_argument("--bootstrap", type=int)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    file_values = {}
    try:
        if args.config:
            file_values = rp.read_config_file(args.config)
            if args.command != "report":
                # config keys matching flag names act as defaults for single commands
                known = {k: v for k, v in file_values.items() if hasattr(args, k.replace("-", "_"))}
                sub_parser = parser._subparsers._group_actions[0].choices[args.command]
                sub_parser.set_defaults(**{k.replace("-", "_"): v for k, v in known.items()})
                args = parser.parse_args(argv)
        if args.command == "report":
            return cmd_report(args, file_values)
        args.func(args)
        return EXIT_OK
    except (ParameterError, FormatError, ValidationError, OSError) as exc:
        print(f"lobvol {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except LobvolError as exc:
        print(f"lobvol {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
