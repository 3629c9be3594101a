import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critlab.analysis import (TailFit, autocorrelation, batch_means_se, fit_power_law, ks_distance_to_cdf,
                              log_binned_histogram, loglog_slope)
from critlab.rng import RngStream
from critlab.series import TimeSeries


def pareto(alpha, n, seed, x_min=1.0):
    u = RngStream(seed).generator().random(n)
    return x_min * (1.0 - u) ** (-1.0 / (alpha - 1.0))


@pytest.mark.parametrize("alpha", [1.5, 2.0, 2.5])
def test_pareto_exponent_fixed_xmin(alpha):
    fit = fit_power_law(pareto(alpha, 100_000, int(alpha * 10)), x_min=1.0)
    assert abs(fit.exponent - alpha) < 0.02
    assert fit.verdict == "power-law"
    assert fit.n_tail == 100_000


def test_pareto_auto_xmin():
    x = pareto(1.5, 100_000, 3)
    fit = fit_power_law(x)
    assert abs(fit.exponent - 1.5) < 0.05
    assert fit.n_tail >= 100


def test_truncated_fit():
    x = pareto(2.0, 200_000, 4)
    fit = fit_power_law(x, x_min=2.0, x_max=200.0)
    assert abs(fit.exponent - 2.0) < 0.03
    assert fit.x_max == 200.0


def test_exponential_verdict():
    x = RngStream(5).generator().exponential(1.0, 100_000)
    assert fit_power_law(x).verdict == "exponential"


def test_insufficient():
    fit = fit_power_law(pareto(2.0, 50, 6))
    assert fit.verdict == "insufficient"
    fit = fit_power_law(pareto(2.0, 5000, 6), x_min=1e6)
    assert fit.verdict == "insufficient"


def test_tailfit_json_roundtrip():
    fit = fit_power_law(pareto(2.0, 10_000, 7), x_min=1.0)
    back = TailFit.from_json(fit.to_json())
    assert back == fit
    bad = TailFit(float("nan"), 1.0, 0, float("nan"), "insufficient")
    assert json.loads(bad.to_json())["exponent"] is None
    assert np.isnan(TailFit.from_json(bad.to_json()).exponent)


def test_autocorrelation_iid_and_constant():
    x = RngStream(8).generator().standard_normal(100_000)
    lags, acf = autocorrelation(x, 50)
    assert acf[0] == 1.0 and len(lags) == 51
    assert np.all(np.abs(acf[1:]) < 3 / np.sqrt(len(x)) * 1.5)
    _, c = autocorrelation(np.full(1000, 3.0), 20)
    assert np.all(c == 1.0)
    with pytest.raises(ValueError):
        autocorrelation(np.zeros(100), 20)


def test_autocorrelation_ou_decay():
    from critlab.ou import simulate_ou
    from critlab.series import NoiseSpec

    ts = simulate_ou(1.0, NoiseSpec(1.0), 0.0, 0.01, 1_000_000, RngStream(9))
    lags, acf = autocorrelation(ts, 200)
    for k in (50, 100, 200):
        assert abs(acf[k] - np.exp(-k * 0.01)) < 0.05


def test_log_binned_single_value():
    c, d = log_binned_histogram(np.full(100, 7.0))
    assert np.count_nonzero(d) == 1


@given(st.lists(st.floats(1e-3, 1e6), min_size=1, max_size=200), st.integers(1, 20))
@settings(max_examples=50, deadline=None)
def test_log_binned_normalised(xs, bpd):
    c, d = log_binned_histogram(xs, bpd)
    # recover edges from geometric centres is not possible; use the integral via histogram
    x = np.asarray(xs)
    lo = np.floor(np.log10(x.min()) * bpd) / bpd
    hi = np.floor(np.log10(x.max()) * bpd) / bpd + 1.0 / bpd
    n = max(1, int(round((hi - lo) * bpd)))
    edges = 10.0 ** (lo + np.arange(n + 1) / bpd)
    edges[0] = min(edges[0], x.min())
    edges[-1] = max(edges[-1], x.max() * (1 + 1e-12))
    assert np.sum(d * np.diff(edges)) == pytest.approx(1.0)


def test_log_binned_slope():
    c, d = log_binned_histogram(pareto(2.0, 200_000, 10), 5)
    keep = (c > 2) & (c < 1e3)
    assert abs(loglog_slope(c[keep], d[keep]) + 2.0) < 0.1


def test_log_binned_dragon_king_hump():
    x = np.concatenate((pareto(2.0, 100_000, 11), np.full(2000, 5e4)))
    x = x[x <= 6e4]
    c, d = log_binned_histogram(x, 5)
    body = (c > 2) & (c < 1e3)
    slope = np.polyfit(np.log(c[body]), np.log(d[body]), 1)
    last = np.flatnonzero(d > 0)[-1]
    assert d[last] > 10 * np.exp(np.polyval(slope, np.log(c[last])))


def test_batch_means_and_ks():
    x = RngStream(12).generator().standard_normal(100_000)
    assert abs(batch_means_se(x) - 1 / np.sqrt(len(x))) < 0.001
    from scipy.stats import norm

    assert ks_distance_to_cdf(x, norm.cdf) < 0.01
    with pytest.raises(ValueError):
        batch_means_se(np.ones(10), 100)


def test_critical_branching_exponent():
    from critlab.branching import OffspringDistribution, avalanche_ensemble

    av = avalanche_ensemble(OffspringDistribution("poisson", 1.0), 200_000, 10**5, RngStream(13))
    fit = fit_power_law(av.uncapped_sizes(), x_min=10, x_max=1e4)
    assert abs(fit.exponent - 1.5) < 0.05
