import math
from collections import Counter
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lobvol.errors import AlignmentError, InsufficientDataError
from lobvol.ingest import parse_snapshots
from lobvol.series import best_volume_series, volume_series_from_array
from lobvol.streaks import (StreakRecord, detect_streaks, fit_extreme_volume_decay,
                            streak_duration_distribution)

from conftest import simple_book, snapshot_csv


def _pairs(records):
    return [(r.duration, r.volume) for r in records]


def brute_force_rle(volumes, prices, valid, segment):
    out = []
    i, n = 0, len(volumes)
    while i < n:
        if not valid[i]:
            i += 1
            continue
        j = i
        while (j + 1 < n and valid[j + 1] and segment[j + 1] == segment[i]
               and volumes[j + 1] == volumes[i] and prices[j + 1] == prices[i]):
            j += 1
        out.append((j - i + 1, volumes[i]))
        i = j + 1
    return out


def random_fixture(gen, n):
    vol = gen.choice([1.0, 2.0, 3.0], size=n, p=[0.6, 0.3, 0.1])
    price = gen.choice([100, 101], size=n, p=[0.8, 0.2])
    # stretches where only the price moves
    hold = gen.random(n) < 0.5
    vol = np.where(hold, np.roll(vol, 1), vol)
    valid = gen.random(n) > 0.05
    segment = np.cumsum(gen.random(n) < 0.01)
    return vol, price, valid, segment


def test_three_episode_fixture():
    vs = volume_series_from_array([4.0] * 3 + [2.5] * 4 + [7.0] * 3)
    assert _pairs(detect_streaks(vs)) == [(3, 4.0), (4, 2.5), (3, 7.0)]


def test_small_examples():
    assert _pairs(detect_streaks(volume_series_from_array([5, 5, 7, 5]))) == [(2, 5), (1, 7), (1, 5)]
    assert _pairs(detect_streaks(volume_series_from_array([3.0] * 50))) == [(50, 3.0)]


def test_price_change_breaks_streak():
    vs = volume_series_from_array([5, 5, 5, 5])
    recs = detect_streaks(vs, quote_prices=np.array([100, 100, 101, 101]))
    assert _pairs(recs) == [(2, 5), (2, 5)]
    with pytest.raises(AlignmentError):
        detect_streaks(vs, quote_prices=np.array([1, 2]))


def test_invalid_slot_breaks_streak():
    vs = volume_series_from_array([5, 5, np.nan, 5])
    assert _pairs(detect_streaks(vs)) == [(2, 5), (1, 5)]


def test_from_snapshots_uses_exact_decimals_and_prices():
    books = [simple_book(0, ask_vol="1.10"), simple_book(10, ask_vol="1.1"),
             simple_book(20, ask_vol="1.1", ask_px="102"), simple_book(30, ask_vol="1.1", ask_px="102")]
    vs = best_volume_series(parse_snapshots(snapshot_csv(books)), "ask")
    recs = detect_streaks(vs)
    assert _pairs(recs) == [(2, Decimal("1.10")), (2, Decimal("1.1"))]
    assert isinstance(recs[0].volume, Decimal)


def test_oracle_and_coverage_on_random_fixtures():
    gen = np.random.default_rng(42)
    for _ in range(30):
        n = int(gen.integers(1, 1000))
        vol, price, valid, segment = random_fixture(gen, n)
        vs = volume_series_from_array(vol, valid=valid, segment=segment)
        recs = detect_streaks(vs, quote_prices=price)
        assert Counter(_pairs(recs)) == Counter(brute_force_rle(vol, price, valid, segment))
        assert sum(r.duration for r in recs) == valid.sum()
        assert all(r.duration >= 1 for r in recs)
        ends = [(r.start_slot, r.start_slot + r.duration) for r in recs]
        assert all(a[1] <= b[0] for a, b in zip(ends, ends[1:]))


def test_duration_distribution():
    recs = [StreakRecord("bid", i, 1, 1.0) for i in range(99)] + [StreakRecord("bid", 99, 14, 1.0)]
    d = streak_duration_distribution(recs)
    assert d.percentile == 1
    assert d.cdf[0] == 0.99
    flat = streak_duration_distribution([StreakRecord("ask", i, i + 1, 1.0) for i in range(10)])
    assert flat.counts.tolist() == [1] * 10 and flat.durations.tolist() == list(range(1, 11))
    with pytest.raises(InsufficientDataError):
        streak_duration_distribution([])


def _exact_fit_records(a=100.0, b=0.1, per=10):
    recs = []
    for tau in range(1, 46):
        target = a * math.exp(-b * tau)
        vols = target + np.linspace(-1, 1, per) * 0.01 * target   # mean exactly target
        recs += [StreakRecord("ask", 0, tau, float(v)) for v in vols]
        recs += [StreakRecord("ask", 0, tau, 0.001 * target) for _ in range(3)]  # below top-k
    return recs


def test_exact_exponential_fit():
    fit = fit_extreme_volume_decay(_exact_fit_records())
    assert fit.amplitude == pytest.approx(100, abs=1e-9)
    assert fit.rate == pytest.approx(0.1, abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.fit_range == (1, 45)
    assert not fit.sparse.any()


def test_durations_past_dmax_ignored():
    recs = _exact_fit_records() + [StreakRecord("ask", 0, 60, 1e6)]
    assert fit_extreme_volume_decay(recs).rate == pytest.approx(0.1, abs=1e-9)


def test_sparse_buckets_flagged():
    recs = [StreakRecord("ask", 0, t, 50.0 * math.exp(-0.2 * t)) for t in range(1, 10)]
    fit = fit_extreme_volume_decay(recs)
    assert fit.sparse.all() and fit.n.tolist() == [1] * 9
    assert fit.rate == pytest.approx(0.2, abs=1e-9)


def test_fit_needs_two_durations():
    with pytest.raises(InsufficientDataError):
        fit_extreme_volume_decay([StreakRecord("ask", 0, 3, 1.0)])


@settings(max_examples=30, deadline=None)
@given(st.permutations(list(range(60))))
def test_fit_invariant_under_record_order(perm):
    base = [StreakRecord("ask", 0, 1 + i % 6, 1.0 + (i * 7919) % 13) for i in range(60)]
    a = fit_extreme_volume_decay(base)
    b = fit_extreme_volume_decay([base[i] for i in perm])
    assert (a.amplitude, a.rate) == (b.amplitude, b.rate)
