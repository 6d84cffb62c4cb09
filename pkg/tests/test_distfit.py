import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from lobvol.correlo import acf
from lobvol.distfit import (AD_CRITICAL, ad_normality_battery, anderson_darling, fit_power_law,
                            fit_power_law_xy, scan_breakpoints_xy)
from lobvol.errors import ParameterError, UnderdeterminedError, UndefinedTestError
from lobvol.series import ReturnSeries
from lobvol.synth import GeneratorSpec, fgn_autocovariance, generate


def two_sided_pareto(gen, n, alpha=3.0):
    x = gen.pareto(alpha, n) * gen.choice([-1.0, 1.0], n)
    return (x - x.mean()) / x.std()


def piecewise_fixture(bp=60, k1=2.0, b1=0.2, b2=0.5, hi=300):
    lags = np.arange(1, hi + 1)
    k2 = k1 * bp ** (b2 - b1)        # continuous at the breakpoint
    c = np.where(lags < bp, k1 * lags ** -b1, k2 * lags ** -b2)
    return lags, c, k2


def test_ad_matches_scipy():
    gen = np.random.default_rng(0)
    for n in (8, 50, 1000):
        x = gen.standard_t(5, n)
        ours = anderson_darling(x)
        ref = stats.anderson(x, "norm")
        assert ours.a_squared == pytest.approx(ref.statistic * (1 + 4 / n - 25 / n ** 2), rel=1e-10)
        assert ours.a_squared_raw == pytest.approx(ref.statistic, rel=1e-10)


def test_ad_critical_values_match_scipy_large_n():
    ref = stats.anderson(np.random.default_rng(1).normal(size=10_000), "norm")
    # scipy scales the table by 1/(1 + 4/n - 25/n^2); undo that
    n = 10_000
    for level, crit in zip(ref.significance_level, ref.critical_values):
        assert AD_CRITICAL[float(level)] == pytest.approx(crit * (1 + 4 / n - 25 / n ** 2), abs=1e-3)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 100), st.floats(-1e3, 1e3))
def test_ad_affine_invariance(c, b):
    x = np.random.default_rng(3).normal(size=200)
    a0 = anderson_darling(x).a_squared
    assert anderson_darling(c * x + b).a_squared == pytest.approx(a0, rel=1e-9, abs=1e-12)


def test_ad_ideal_normal_grid_not_rejected():
    n = 1000
    x = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    res = anderson_darling(x)
    assert not res.reject and res.a_squared >= 0


def test_ad_heavy_tail_rejected():
    x = two_sided_pareto(np.random.default_rng(4), 10_000)
    assert anderson_darling(x).reject


def test_ad_errors_and_battery():
    with pytest.raises(UndefinedTestError):
        anderson_darling(np.ones(20))
    with pytest.raises(UndefinedTestError):
        anderson_darling(np.arange(5.0))
    with pytest.raises(ParameterError):
        anderson_darling(np.arange(50.0), significance=7)
    good = ReturnSeries.from_array(np.random.default_rng(5).normal(size=500), interval=60)
    flat = ReturnSeries.from_array(np.zeros(50), interval=3600)
    out = ad_normality_battery([good, flat])
    assert out[0].scale == 60 and out[0].error is None
    assert out[1].error and not out[1].reject


def test_exact_single_power_law():
    lags = np.arange(1, 201)
    fit = fit_power_law_xy(lags, 2.0 * lags ** -0.3)
    seg, = fit.segments
    assert seg.k == pytest.approx(2.0, abs=1e-9)
    assert seg.beta == pytest.approx(0.3, abs=1e-9)
    assert seg.ssr < 1e-20 and fit.fit_domain == (1, 200)


def test_exact_piecewise_power_law():
    lags, c, k2 = piecewise_fixture()
    fit = fit_power_law_xy(lags, c, breakpoints=[60])
    s1, s2 = fit.segments
    assert (s1.lag_lo, s1.lag_hi, s2.lag_lo, s2.lag_hi) == (1, 59, 60, 300)
    assert s1.k == pytest.approx(2.0, abs=1e-9) and s1.beta == pytest.approx(0.2, abs=1e-9)
    assert s2.k == pytest.approx(k2, abs=1e-9) and s2.beta == pytest.approx(0.5, abs=1e-9)


def test_scan_selects_true_breakpoint():
    lags, c, _ = piecewise_fixture()
    fit = scan_breakpoints_xy(lags, c, candidate_set=(30, 60, 120), max_breaks=2)
    assert fit.breakpoints == (60,)


def test_scan_pure_law_selects_no_breaks():
    lags = np.arange(1, 2001)
    fit = scan_breakpoints_xy(lags, 0.5 * lags ** -0.4, candidate_set=(60, 720))
    assert fit.breakpoints == ()


def test_scan_errors():
    lags = np.arange(1, 100)
    with pytest.raises(ParameterError):
        scan_breakpoints_xy(lags, lags ** -0.5, candidate_set=(), max_breaks=1)
    with pytest.raises(ParameterError):
        scan_breakpoints_xy(lags, lags ** -0.5, candidate_set=(500,))


def test_beta_invariant_under_rescaling():
    lags, c, _ = piecewise_fixture()
    noisy = c * np.exp(np.random.default_rng(6).normal(0, 0.05, len(c)))
    a = fit_power_law_xy(lags, noisy, [60])
    b = fit_power_law_xy(lags, 7.5 * noisy, [60])
    for s, t in zip(a.segments, b.segments):
        assert t.beta == pytest.approx(s.beta, abs=1e-12)
        assert t.k == pytest.approx(7.5 * s.k, rel=1e-12)


def test_nonpositive_values_excluded_and_flagged():
    lags = np.arange(1, 21)
    c = 1.0 * lags ** -0.5
    c[[3, 7, 11, 15, 19]] = -0.01
    seg, = fit_power_law_xy(lags, c).segments
    assert seg.n_excluded == 5 and seg.n_used == 15
    assert seg.unreliable
    assert seg.beta == pytest.approx(0.5, abs=1e-9)


def test_underdetermined_segment():
    lags = np.arange(1, 50)
    with pytest.raises(UnderdeterminedError):
        fit_power_law_xy(lags, lags ** -0.5, breakpoints=[3])
    with pytest.raises(ParameterError):
        fit_power_law_xy(lags, lags ** -0.5, breakpoints=[100])


def test_fit_from_correlation_estimate():
    r = generate(GeneratorSpec("long_memory", 50_000, seed=2, params={"hurst": 0.9}))
    fit = fit_power_law(acf(r, 200), lag_min=5, lag_max=200)
    assert 0.05 < fit.segments[0].beta < 0.6


def _biased_fgn_acf(hurst, n, lags):
    # subtracting the sample mean shifts every autocovariance by about Var(mean) = n**(2H - 2)
    v = n ** (2 * hurst - 2)
    return (fgn_autocovariance(hurst, lags) - v) / (1 - v)


@pytest.mark.slow
def test_fgn_exponent_across_seeds_matches_bias_prediction():
    n, h = 1_000_000, 0.85
    lags = np.arange(10, 1001)
    predicted = fit_power_law_xy(lags, _biased_fgn_acf(h, n, lags)).segments[0].beta
    betas = []
    for seed in range(8):
        r = generate(GeneratorSpec("long_memory", n, seed=seed, params={"hurst": h}))
        betas.append(fit_power_law(acf(r, 1000), lag_min=10, lag_max=1000).segments[0].beta)
    assert np.mean(betas) == pytest.approx(predicted, abs=0.03)
    # without the mean-estimation bias the exponent is 2 - 2H
    exact = fit_power_law_xy(lags, _biased_fgn_acf(h, np.inf, lags)).segments[0].beta
    assert exact == pytest.approx(0.3, abs=0.01)
