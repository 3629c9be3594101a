import math

import numpy as np
import pytest
from scipy import integrate

from critlab.analysis import fit_power_law, ks_distance_to_cdf
from critlab.rng import RngStream
from critlab.sweep import (SweepConfig, dragon_king_excess, mixture_avalanche_law, sample_stationary_slope,
                           simulate_sweep, stationary_slope_cdf, stationary_slope_density)


def test_config_validation():
    with pytest.raises(ValueError):
        SweepConfig(1.0, 1.0, 0.01, 10**4)  # mu*dt = 0.01
    with pytest.raises(ValueError):
        SweepConfig(1.0, 1.0, 0.001, 999)
    with pytest.raises(ValueError):
        SweepConfig(0.0, 1.0, 0.001, 10**4)
    with pytest.raises(ValueError):
        SweepConfig(1.0, -1.0, 0.001, 10**4)
    with pytest.raises(ValueError):
        SweepConfig(1.0, 1.0, 0.001, 10**4, "zeta-tail")


def test_no_triggers():
    cfg = SweepConfig(0.5, 0.0, 0.001, 10**4)
    run = simulate_sweep(cfg, 100.0, RngStream(0))
    assert len(run.trigger_time) == 0 and len(run.avalanches) == 0
    p = run.path(1.0)
    assert np.allclose(p.component(0), 0.5 * p.times)
    with pytest.raises(ValueError):
        stationary_slope_density(cfg)


def test_closed_form_values():
    cfg = SweepConfig(1.0, 1.0, 0.001, 10**4)
    assert cfg.z == pytest.approx(1 + math.sqrt(math.pi / 2))
    pdf = stationary_slope_density(cfg)
    assert pdf(0.5) == pytest.approx(1 / 2.2533141, rel=1e-6)
    assert pdf(1 - 1e-12) == pytest.approx(pdf(1 + 1e-12))
    total, _ = integrate.quad(pdf, 0, 1)
    tail, _ = integrate.quad(pdf, 1, np.inf)
    assert total + tail == pytest.approx(1.0, abs=1e-9)
    assert float(pdf(1.7)) == pytest.approx(math.exp(-0.5 * 0.49) / cfg.z)
    assert float(pdf(-0.1)) == 0.0


@pytest.mark.parametrize("mu,gamma", [(1.0, 1.0), (0.25, 1.0), (2.0, 0.5)])
def test_cdf_matches_density(mu, gamma):
    cfg = SweepConfig(mu, gamma, 0.001, 10**4)
    pdf, cdf = stationary_slope_density(cfg), stationary_slope_cdf(cfg)
    for x in (0.3, 1.0, 1.4, 3.0):
        val, _ = integrate.quad(pdf, 0, x, points=[1.0] if x > 1 else None)
        assert cdf(x) == pytest.approx(val, abs=1e-9)
    sample = sample_stationary_slope(cfg, 200_000, RngStream(1).generator())
    assert ks_distance_to_cdf(sample, cdf) < 0.005


def test_stationary_occupation_ks():
    cfg = SweepConfig(0.25, 1.0, 0.001, 10**4)
    run = simulate_sweep(cfg, 2e5, RngStream(2))
    assert run.ks_to_stationary() < 0.02


def test_resets_happen_only_at_landslides():
    cfg = SweepConfig(1.0, 1.0, 0.001, 10**4)
    run = simulate_sweep(cfg, 2000.0, RngStream(3))
    assert run.landslide.any()
    r0 = run.r0_at_trigger
    # between triggers R0 grows at rate mu; a landslide resets it to 0
    t = run.trigger_time
    for i in range(1, len(t)):
        base = 0.0 if run.landslide[i - 1] else r0[i - 1]
        assert r0[i] == pytest.approx(base + cfg.mu * (t[i] - t[i - 1]), abs=1e-9)
    assert np.all(run.avalanches.size[run.landslide] == cfg.system_size)
    assert run.segment_lengths().sum() == pytest.approx(2000.0)
    assert run.occupation_cdf(np.array([0.0]))[0] == 0.0
    assert run.occupation_cdf(np.array([1e9]))[0] == pytest.approx(1.0)


def test_outputs(tmp_path):
    cfg = SweepConfig(1.0, 1.0, 0.001, 10**4)
    run = simulate_sweep(cfg, 50.0, RngStream(4))
    run.write_csv(tmp_path, path_dt=0.5)
    lines = (tmp_path / "r0_path.csv").read_text().splitlines()
    assert lines[0] == "t,r0" and len(lines) == 102
    assert (tmp_path / "avalanches.csv").read_text().splitlines()[0] == "t,r0_at_trigger,size,duration,landslide"
    again = simulate_sweep(cfg, 50.0, RngStream(4))
    assert np.array_equal(run.trigger_time, again.trigger_time)


def test_mixture_exponent_and_dragon_kings():
    cfg = SweepConfig(1.0, 1.0, 0.001, 10**5)
    s = mixture_avalanche_law(cfg, 10**6, RngStream(5))
    sizes = s.avalanches.size[~s.avalanches.capped]
    fit = fit_power_law(sizes, x_min=100, x_max=1e4)
    assert abs(fit.exponent - 2.0) < 0.15
    assert dragon_king_excess(s, cfg.system_size, fit.exponent, 100) >= 3
    # crossover: avalanches triggered at near-critical slope follow the pure critical law
    crit = (s.r0 >= 0.99) & (s.r0 <= 1.01) & ~s.avalanches.capped
    f15 = fit_power_law(s.avalanches.size[crit], x_min=10, x_max=1e4)
    assert abs(f15.exponent - 1.5) < 0.1


def test_truncated_mixture_is_exponential():
    cfg = SweepConfig(1.0, 1.0, 0.001, 10**5)
    s = mixture_avalanche_law(cfg, 200_000, RngStream(6), r0_max=0.5)
    assert s.r0.max() <= 0.5 and not s.avalanches.capped.any()
    size = s.avalanches.size
    grid = np.arange(5, 41)
    ccdf = np.array([np.mean(size >= k) for k in grid])
    # light tail: an S^-2 law would reach sizes of order the sample count
    assert size.max() < 200
    # no constant log-log slope: the decay keeps steepening
    lo = np.polyfit(np.log(grid[:6]), np.log(ccdf[:6]), 1)[0]
    hi = np.polyfit(np.log(grid[-10:]), np.log(ccdf[-10:]), 1)[0]
    assert hi < 1.5 * lo
