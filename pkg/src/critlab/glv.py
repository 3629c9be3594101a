"""Generalised Lotka-Volterra communities.

``dx_i/dt = x_i (mu_i + sum_j A_ij x_j)``, integrated on log-abundances so that
abundances stay positive. Species that fall below an extinction floor are set to
zero and stay there, unless an invasion check finds they could regrow.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from critlab.errors import DivergenceError, SingularMatrixError
from critlab.rng import RngStream
from critlab.series import write_columns
from critlab.spectrum import SpectrumReport

DIVERGENCE_LEVEL = 1e12
RESIDUAL_TOL = 1e-6
# abundance a species must reach to be treated as part of the candidate support
_SUPPORT_LEVEL = 1e-7
_REINTRODUCE = 1e-3
_DECAY_RATE = 1e-5


@dataclass
class Ecology:
    n: int
    mu: np.ndarray
    A: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float).reshape(-1)
        self.A = np.asarray(self.A, dtype=float)
        if self.A.shape != (self.n, self.n) or self.mu.shape != (self.n,):
            raise ValueError("A must be n x n and mu of length n")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.mu))):
            raise ValueError("A and mu must be finite")
        if self.symmetric and np.any(self.A != self.A.T):
            raise ValueError("A flagged symmetric but is not")

    def growth(self, x: np.ndarray) -> np.ndarray:
        return self.mu + self.A @ x

    def with_mu(self, mu) -> Ecology:
        return Ecology(self.n, np.asarray(mu, dtype=float), self.A, self.symmetric)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "mu": self.mu.tolist(), "A": self.A.tolist(),
                           "symmetric": self.symmetric})

    @classmethod
    def from_json(cls, text: str) -> Ecology:
        d = json.loads(text)
        extra = set(d) - {"n", "mu", "A", "symmetric"}
        if extra:
            raise ValueError(f"unknown keys {sorted(extra)}")
        return cls(int(d["n"]), d["mu"], d["A"], bool(d.get("symmetric", False)))


def random_ecology(n: int, sigma_a: float, rng: RngStream, symmetric: bool = True,
                   mu: float | np.ndarray = 1.0, self_regulation: float = 1.0) -> Ecology:
    """``A = -d I + N(0, sigma_a**2 / n)`` off the diagonal, symmetrised if requested."""
    gen = rng.generator()
    g = gen.standard_normal((n, n)) * (sigma_a / math.sqrt(n))
    if symmetric:
        g = np.triu(g, 1)
        g = g + g.T
    else:
        np.fill_diagonal(g, 0.0)
    A = g - self_regulation * np.eye(n)
    return Ecology(n, np.broadcast_to(np.asarray(mu, dtype=float), (n,)).copy(), A, symmetric)


@dataclass
class CommunityState:
    abundances: np.ndarray
    survivor_mask: np.ndarray
    residuals: np.ndarray  # mu_i + (A x)_i on survivors

    @property
    def survivors(self) -> np.ndarray:
        return np.flatnonzero(self.survivor_mask)

    def to_csv(self, path: str | Path) -> None:
        idx = np.arange(len(self.abundances))
        write_columns(path, ["species", "abundance", "survivor"],
                      [idx, self.abundances, self.survivor_mask])


@numba.njit(cache=True)
def _log_euler(mu, A, y, alive, dt, n_steps, floor_log, tol):
    """Integrate ``d ln x/dt = mu + A x`` on alive species; returns steps taken or -1 on divergence."""
    n = mu.shape[0]
    x = np.zeros(n)
    for i in range(n):
        if alive[i]:
            x[i] = math.exp(y[i])
    log_cap = math.log(1e12)
    for step in range(n_steps):
        g = mu + A @ x
        worst = 0.0
        for i in range(n):
            if not alive[i]:
                continue
            rate = abs(g[i])
            if g[i] < 0 and x[i] < 1e-6:
                # decaying towards extinction: judge it by its absolute speed
                rate = rate * x[i]
            if rate > worst:
                worst = rate
            y[i] += dt * g[i]
            if y[i] < floor_log:
                alive[i] = False
                x[i] = 0.0
            elif y[i] > log_cap:
                return -1
            else:
                x[i] = math.exp(y[i])
        if worst < tol:
            return step + 1
    return n_steps


def _solve_block(eco: Ecology, support: np.ndarray) -> np.ndarray | None:
    if support.size == 0:
        return np.zeros(eco.n)
    sub = eco.A[np.ix_(support, support)]
    try:
        xs = np.linalg.solve(sub, -eco.mu[support])
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(xs)) or np.any(xs <= 0):
        return None
    x = np.zeros(eco.n)
    x[support] = xs
    return x


def integrate_glv(eco: Ecology, x0, dt: float, t_max: float, extinction_floor: float = 1e-10,
                  tol: float = 1e-12, max_rounds: int = 20) -> CommunityState:
    """Relax to an uninvadable equilibrium.

    The log-Euler scheme ``ln x += dt (mu + A x)`` has exactly the GLV fixed
    points. Once the trajectory has settled, the survivor block equation
    ``A_SS x_S = -mu_S`` is solved directly to remove the remaining slow
    transient, provided the solution is positive. Extinct species with positive
    invasion rate are reintroduced at a small abundance and the integration
    restarts, so the returned state is an equilibrium in the full sense.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (eco.n,) or np.any(x0 <= 0):
        raise ValueError("x0 must be a positive vector of length n")
    if not (dt > 0 and t_max > 0 and extinction_floor > 0):
        raise ValueError("dt, t_max and extinction_floor must be positive")
    y = np.log(x0)
    alive = np.ones(eco.n, dtype=bool)
    n_steps = max(1, int(math.ceil(t_max / dt)))
    floor_log = math.log(extinction_floor)
    x = x0
    for _ in range(max_rounds):
        taken = _log_euler(eco.mu, eco.A, y, alive, dt, n_steps, floor_log, tol)
        if taken < 0:
            raise DivergenceError("abundance exceeded 1e12: interactions do not bound growth")
        x = np.where(alive, np.exp(np.where(alive, y, 0.0)), 0.0)
        # species still shrinking at a visible rate are on their way out
        support = np.flatnonzero((x > _SUPPORT_LEVEL) & (eco.growth(x) > -_DECAY_RATE))
        polished = _solve_block(eco, support)
        if polished is not None:
            x = polished
            alive = x > 0
            y = np.where(alive, np.log(np.where(alive, x, 1.0)), floor_log)
        invasion = eco.growth(x)
        invaders = (~alive | (x <= _SUPPORT_LEVEL)) & (invasion > RESIDUAL_TOL * np.maximum(1.0, np.abs(eco.mu)))
        if not invaders.any():
            break
        alive = alive | invaders
        y = np.where(invaders, math.log(_REINTRODUCE), y)
    if np.any(x > DIVERGENCE_LEVEL):
        raise DivergenceError("abundance exceeded 1e12")
    mask = x > _SUPPORT_LEVEL
    x = np.where(mask, x, 0.0)
    residuals = eco.growth(x)[mask]
    return CommunityState(x, mask, residuals)


@dataclass
class Feasibility:
    equilibrium: np.ndarray
    feasible: bool


def feasible_equilibrium(eco: Ecology) -> Feasibility:
    """Interior fixed point ``-A^-1 mu``; feasible iff every entry is positive."""
    try:
        if np.linalg.cond(eco.A) > 1e14:
            raise np.linalg.LinAlgError
        x = np.linalg.solve(eco.A, -eco.mu)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("interaction matrix is singular") from None
    return Feasibility(x, bool(np.all(x > 0)))


@dataclass
class StabilityReport:
    spectrum: SpectrumReport  # of K = -diag(x*) A on the survivor block
    kappa_star: float
    lambda_star: float  # largest eigenvalue (real part) of -(A_SS)^-1
    sensitivity: np.ndarray  # -(A_SS)^-1


def stability_report(eco: Ecology, state: CommunityState) -> StabilityReport:
    s = state.survivors
    if s.size == 0:
        raise ValueError("no survivors")
    sub = eco.A[np.ix_(s, s)]
    if np.linalg.cond(sub) > 1e14:
        raise SingularMatrixError("surviving block of A is singular")
    K = -state.abundances[s][:, None] * sub
    spec = SpectrumReport.of(K)
    sens = -np.linalg.inv(sub)
    lam = float(np.linalg.eigvals(sens).real.max())
    return StabilityReport(spec, spec.min_real_part, lam, sens)


@dataclass
class FitnessResponse:
    response: np.ndarray  # (x'* - x*) / delta, full length
    composition_changed: bool
    perturbed: CommunityState


def perturb_fitness(eco: Ecology, state: CommunityState, j: int, delta: float, dt: float = 0.01,
                    t_max: float = 2000.0) -> FitnessResponse:
    """Finite-difference response of the equilibrium to ``mu_j += delta``."""
    if not state.survivor_mask[j]:
        raise ValueError(f"species {j} is not a survivor")
    if delta == 0 or abs(delta) > 1e-4 * float(np.abs(eco.mu).max()):
        raise ValueError("delta must be non-zero and at most 1e-4 * max|mu|")
    mu = eco.mu.copy()
    mu[j] += delta
    moved = eco.with_mu(mu)
    # restart from the old equilibrium, extinct species reseeded below the support level
    x0 = np.where(state.survivor_mask, state.abundances, 1e-9)
    new = integrate_glv(moved, x0, dt, t_max)
    changed = bool(np.any(new.survivor_mask != state.survivor_mask))
    return FitnessResponse((new.abundances - state.abundances) / delta, changed, new)
