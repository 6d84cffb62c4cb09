"""Volume dynamics at the best quotes of a limit order book."""

__version__ = "0.1.0"

from .clustering import cluster_prob, threshold_percentile
from .correlo import acf, block_bootstrap_ci, ma_order_diagnosis, pacf
from .distfit import ad_normality_battery, anderson_darling, fit_power_law, scan_breakpoints
from .excess import excess_distribution, excess_volume
from .ingest import FormatConfig, parse_snapshots, read_snapshots, segment_stream
from .series import (best_volume_series, descriptive_stats, empirical_cdf, log_returns,
                     resample)
from .streaks import detect_streaks, fit_extreme_volume_decay, streak_duration_distribution
from .synth import GeneratorSpec, generate, theoretical_acf

__all__ = [
    "FormatConfig", "GeneratorSpec", "acf", "ad_normality_battery", "anderson_darling",
    "best_volume_series", "block_bootstrap_ci", "cluster_prob", "descriptive_stats",
    "detect_streaks", "empirical_cdf", "excess_distribution", "excess_volume",
    "fit_extreme_volume_decay", "fit_power_law", "generate", "log_returns",
    "ma_order_diagnosis", "pacf", "parse_snapshots", "read_snapshots", "resample",
    "scan_breakpoints", "segment_stream", "streak_duration_distribution", "theoretical_acf",
    "threshold_percentile",
]
