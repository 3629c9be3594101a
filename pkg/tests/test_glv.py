import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critlab.errors import DivergenceError, SingularMatrixError
from critlab.glv import (RESIDUAL_TOL, Ecology, feasible_equilibrium, integrate_glv, perturb_fitness,
                         random_ecology, stability_report)
from critlab.rng import RngStream


def test_logistic():
    eco = Ecology(1, [1.0], [[-1.0]])
    st_ = integrate_glv(eco, [0.3], 0.01, 100.0)
    assert st_.abundances[0] == pytest.approx(1.0, abs=1e-9)
    rep = stability_report(eco, st_)
    assert rep.spectrum.eigenvalues[0].real == pytest.approx(1.0)
    assert rep.spectrum.is_m_matrix


def test_decoupled():
    eco = Ecology(2, [2.0, 3.0], -np.eye(2))
    st_ = integrate_glv(eco, [1.0, 1.0], 0.01, 200.0)
    assert np.allclose(st_.abundances, [2.0, 3.0], atol=1e-9)


def test_feasible_equilibrium_cases():
    f = feasible_equilibrium(Ecology(2, [1.0, 1.0], -np.eye(2)))
    assert f.feasible and np.allclose(f.equilibrium, [1.0, 1.0])
    A = np.array([[-1.0, -3.0], [-3.0, -1.0]])
    f = feasible_equilibrium(Ecology(2, [1.0, 1.0], A))
    assert np.allclose(f.equilibrium, np.linalg.solve(A, [-1.0, -1.0]))
    assert np.allclose(f.equilibrium, [0.25, 0.25]) and f.feasible
    f = feasible_equilibrium(Ecology(2, [1.0, 0.1], np.array([[-1.0, 0.0], [-1.0, -1.0]])))
    assert not f.feasible and f.equilibrium[1] < 0
    with pytest.raises(SingularMatrixError):
        feasible_equilibrium(Ecology(2, [1.0, 1.0], np.ones((2, 2))))


def test_validation_and_json():
    with pytest.raises(ValueError):
        Ecology(2, [1.0], -np.eye(2))
    with pytest.raises(ValueError):
        Ecology(2, [1.0, 1.0], [[-1.0, 0.5], [0.2, -1.0]], symmetric=True)
    eco = random_ecology(5, 0.5, RngStream(0))
    back = Ecology.from_json(eco.to_json())
    assert np.array_equal(back.A, eco.A) and back.symmetric
    with pytest.raises(ValueError):
        Ecology.from_json('{"n": 1, "mu": [1], "A": [[-1]], "colour": 2}')
    with pytest.raises(ValueError):
        integrate_glv(eco, -np.ones(5), 0.01, 1.0)


def test_divergence():
    eco = Ecology(2, [1.0, 1.0], np.array([[-1.0, 2.0], [2.0, -1.0]]))
    with pytest.raises(DivergenceError):
        integrate_glv(eco, [1.0, 1.0], 0.01, 100.0)


@given(st.integers(0, 10_000))
@settings(max_examples=8, deadline=None)
def test_random_equilibrium_properties(seed):
    eco = random_ecology(30, 0.5, RngStream(seed))
    x0 = RngStream(seed).child(1).generator().uniform(0.5, 1.5, 30)
    s = integrate_glv(eco, x0, 0.01, 2000.0)
    assert np.all(s.abundances >= 0)
    assert np.all(s.abundances[s.survivor_mask] > 0)
    g = eco.growth(s.abundances)
    assert np.all(np.abs(g[s.survivor_mask]) < RESIDUAL_TOL * np.maximum(1, np.abs(eco.mu[s.survivor_mask])))
    # uninvadable: no extinct species can grow back
    assert np.all(g[~s.survivor_mask] <= RESIDUAL_TOL)
    # survivors solve the block linear system
    sv = s.survivors
    direct = np.linalg.solve(eco.A[np.ix_(sv, sv)], -eco.mu[sv])
    assert np.allclose(direct, s.abundances[sv], rtol=1e-8)


def test_kappa_lambda_bound():
    for seed in range(10):
        eco = random_ecology(40, 0.5, RngStream(seed))
        s = integrate_glv(eco, np.ones(40), 0.01, 2000.0)
        rep = stability_report(eco, s)
        x = s.abundances[s.survivors]
        prod = rep.kappa_star * rep.lambda_star
        assert x.min() * (1 - 1e-9) <= prod <= x.max() * (1 + 1e-9)
        assert rep.kappa_star > 0


def test_fitness_response_decoupled():
    eco = Ecology(2, [1.0, 1.0], -np.eye(2))
    s = integrate_glv(eco, [1.0, 1.0], 0.01, 200.0)
    r = perturb_fitness(eco, s, 0, 1e-4)
    assert not r.composition_changed
    assert np.allclose(r.response, [1.0, 0.0], atol=1e-5)
    with pytest.raises(ValueError):
        perturb_fitness(eco, s, 0, 1e-3)


def test_fitness_response_matches_inverse():
    eco = random_ecology(30, 0.5, RngStream(3))
    s = integrate_glv(eco, np.ones(30), 0.01, 2000.0)
    rep = stability_report(eco, s)
    sv = s.survivors
    j = sv[0]
    r = perturb_fitness(eco, s, j, 1e-4)
    assert not r.composition_changed
    col = rep.sensitivity[:, 0]
    assert np.linalg.norm(r.response[sv] - col) < 0.05 * np.linalg.norm(col)


def test_near_marginal_amplification():
    rho = 0.95
    eco = Ecology(2, [1.0, 1.0], np.array([[-1.0, -rho], [-rho, -1.0]]), symmetric=True)
    s = integrate_glv(eco, [0.4, 0.6], 0.01, 5000.0)
    r = perturb_fitness(eco, s, 0, 1e-4)
    base = Ecology(2, [1.0, 1.0], -np.eye(2))
    r0 = perturb_fitness(base, integrate_glv(base, [1.0, 1.0], 0.01, 200.0), 0, 1e-4)
    assert np.linalg.norm(r.response) >= 10 * np.linalg.norm(r0.response)
    assert stability_report(eco, s).kappa_star < 0.05


def test_csv(tmp_path):
    eco = random_ecology(5, 0.3, RngStream(1))
    s = integrate_glv(eco, np.ones(5), 0.01, 500.0)
    s.to_csv(tmp_path / "eq.csv")
    lines = (tmp_path / "eq.csv").read_text().splitlines()
    assert lines[0] == "species,abundance,survivor" and len(lines) == 6
