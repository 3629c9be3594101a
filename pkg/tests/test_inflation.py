import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critlab.errors import NonStationaryError
from critlab.inflation import (RepricingConfig, dominant_period, evolve_density, initial_state, predicted_branching_ratio,
                               predicted_flux, run_abm, stationary_cdf, stationary_density, step_abm,
                               supercritical_run)
from critlab.rng import RngStream


def cfg(J, n=10_000, gamma=0.001, **kw):
    return RepricingConfig(n, -0.5, 0.5, gamma, J, 0.01, 1.0, **kw)


def turnover(c):
    return c.width * (1 - c.J) / c.I0


def test_validation():
    with pytest.raises(ValueError):
        cfg(0.5, coupling="ring")
    with pytest.raises(ValueError):
        cfg(0.5, n=10, exposure=10)
    with pytest.raises(ValueError):
        RepricingConfig(10, 0.5, -0.5, 0.001, 0.5, 0.01, 1.0)
    with pytest.raises(ValueError):
        cfg(-0.1)
    with pytest.raises(NonStationaryError):
        run_abm(cfg(1.0), 10.0, RngStream(0))
    with pytest.raises(ValueError):
        supercritical_run(cfg(0.5), 10.0, RngStream(0))


@given(st.floats(0.0, 0.98), st.floats(1e-4, 0.1), st.floats(1e-3, 0.1))
@settings(max_examples=50, deadline=None)
def test_stationary_inflation_balance(J, gamma, I0):
    # mean-price balance: I_st = I0 / (1 - J) whatever the shape of the density
    c = RepricingConfig(100, -0.5, 0.5, gamma, J, I0, 1.0)
    pdf, I = stationary_density(c)
    assert I == pytest.approx(I0 / (1 - J), rel=1e-9)
    p = np.linspace(-0.5, 0.5, 20001)
    assert np.trapezoid(pdf(p), p) == pytest.approx(1.0, rel=1e-6)
    assert stationary_cdf(c, I)(0.5) == pytest.approx(1.0)


def test_stationary_limits():
    assert stationary_density(cfg(0.0))[1] == pytest.approx(0.01)
    assert stationary_density(cfg(0.9))[1] == pytest.approx(0.1)
    with pytest.raises(NonStationaryError):
        stationary_density(cfg(1.0))
    # small gamma: uniform density, branching ratio ~ J
    c = cfg(0.6, gamma=1e-6)
    assert predicted_branching_ratio(c) == pytest.approx(0.6, abs=1e-3)
    assert predicted_flux(c) == pytest.approx(1e-6 + 0.025, rel=1e-3)


def test_evolve_density_reaches_closed_form():
    c = cfg(0.5, gamma=0.02)
    x, P, path = evolve_density(c, 3000.0, n_cells=400)
    pdf, I = stationary_density(c)
    assert path[-1, 1] == pytest.approx(I, rel=0.02)
    assert np.max(np.abs(P - pdf(x))) < 0.02 * pdf(x).max()


def test_zero_coupling_has_no_cascades():
    c = cfg(0.0)
    run = run_abm(c, 5 * turnover(c), RngStream(1), burn_in=turnover(c))
    assert np.all(run.cascades.children == 0)
    assert run.mean_inflation() == pytest.approx(0.01, rel=1e-9)


@pytest.mark.parametrize("J", [0.3, 0.6])
def test_abm_matches_closed_forms(J):
    c = cfg(J)
    T = turnover(c)
    run = run_abm(c, 12 * T, RngStream(2), burn_in=2 * T)
    assert run.mean_inflation() == pytest.approx(0.01 / (1 - J), rel=0.1)
    flux, se = run.repricing_flux()
    assert abs(flux - predicted_flux(c)) < 4 * se
    assert run.ks_to_stationary() < 0.03
    assert abs(run.stationary_cascades().branching_ratio() - predicted_branching_ratio(c)) < 0.05
    assert np.all(run.state.prices >= c.p_minus) and np.all(run.state.prices <= c.p_plus)


def test_global_coupling_inflation_right_but_cascades_suppressed():
    c = cfg(0.6, coupling="global")
    T = turnover(c)
    run = run_abm(c, 12 * T, RngStream(2), burn_in=2 * T)
    assert run.mean_inflation() == pytest.approx(0.025, rel=0.1)
    assert run.stationary_cascades().branching_ratio() < 0.6 - 0.05


def test_inflation_monotone_in_J():
    means = []
    for J in (0.0, 0.3, 0.6, 0.8):
        c = cfg(J)
        T = turnover(c)
        means.append(run_abm(c, 8 * T, RngStream(3), burn_in=2 * T).mean_inflation())
    assert np.all(np.diff(means) > 0)


def test_step_and_determinism(tmp_path):
    c = cfg(0.5, n=2000)
    s = initial_state(c, RngStream(0))
    s2, casc = step_abm(c, s, RngStream(1))
    assert s2.time == pytest.approx(1.0)
    assert np.all(s2.prices <= c.p_plus)
    a = run_abm(c, 200.0, RngStream(5))
    b = run_abm(c, 200.0, RngStream(5))
    a.write_csv(tmp_path)
    assert np.array_equal(a.inflation.values, b.inflation.values)
    for f in ("inflation.csv", "cascades.csv", "price_hist.csv"):
        assert (tmp_path / f).exists()


def test_supercritical_runaway():
    c = cfg(1.5, n=2000, coupling="global")
    run = supercritical_run(c, 300.0, RngStream(4))
    assert run.cascades.size.max() == c.n_firms
    assert run.mean_inflation() > 10 * c.I0 / 0.5
    assert dominant_period(run.inflation) is None or dominant_period(run.inflation) > 0


@pytest.mark.parametrize("J", [1.0, 1.05])
def test_marginal_and_weakly_supercritical(J):
    # at J >= 1 cascades reach the whole population and I(t) carries a dominant period
    c = RepricingConfig(2000, -0.5, 0.5, 1e-4, J, 0.01, 1.0, coupling="global")
    run = supercritical_run(c, 3000.0, RngStream(1))
    assert run.cascades.size.max() == c.n_firms
    per = dominant_period(run.inflation)
    assert per is not None and per > 1.0
