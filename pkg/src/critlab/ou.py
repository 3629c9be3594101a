"""Ornstein-Uhlenbeck fragility demonstrators.

``dx/dt = -kappa x + eta`` and its linear multidimensional version
``dx_i/dt = -sum_j K_ij x_j + eta_i``, integrated by Euler-Maruyama.
"""

from __future__ import annotations

import math

import numba
import numpy as np
from scipy import signal

from critlab.analysis import autocorrelation
from critlab.errors import DiscretizationError, FitError, UnstableMatrixError
from critlab.rng import RngStream
from critlab.series import NoiseSpec, TimeSeries

# Euler-Maruyama step guard: dt * rate must stay below this.
MAX_RATE_DT = 0.1


class StabilityMatrix:
    """Dense square matrix ``K`` entering ``dx/dt = -K x + eta``."""

    def __init__(self, entries):
        k = np.array(entries, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ValueError("stability matrix must be square")
        if not np.all(np.isfinite(k)):
            raise ValueError("stability matrix must be finite")
        self.entries = k

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.entries)

    def kappa_star(self) -> float:
        """Smallest real part of the spectrum (the slowest relaxation rate)."""
        return float(self.eigenvalues().real.min())


def simulate_ou(kappa: float, noise: NoiseSpec, x0: float, dt: float, n_steps: int,
                rng: RngStream) -> TimeSeries:
    """Euler-Maruyama path of length ``n_steps + 1`` starting at ``x0``."""
    if not dt > 0:
        raise DiscretizationError("dt must be positive")
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    if dt * kappa >= MAX_RATE_DT:
        raise DiscretizationError(f"dt*kappa = {dt * kappa:g} >= {MAX_RATE_DT}: step too coarse")
    a = 1.0 - kappa * dt
    kicks = noise.sigma * math.sqrt(dt) * rng.generator().standard_normal(n_steps)
    # x[n+1] = a x[n] + kick[n]
    path = signal.lfilter([1.0], [1.0, -a], kicks, zi=[a * x0])[0]
    return TimeSeries(dt, np.concatenate(([x0], path)))


@numba.njit(cache=True)
def _multiou_kernel(step, x0, kicks):
    n_steps, d = kicks.shape
    out = np.empty((n_steps + 1, d))
    out[0] = x0
    x = x0.copy()
    for t in range(n_steps):
        x = step @ x + kicks[t]
        out[t + 1] = x
    return out


def simulate_multiou(K, noise: NoiseSpec, dt: float, n_steps: int, rng: RngStream,
                     x0=None) -> TimeSeries:
    """Euler-Maruyama path of ``dx/dt = -K x + eta`` with independent unit-amplitude noises."""
    K = K if isinstance(K, StabilityMatrix) else StabilityMatrix(K)
    if not dt > 0:
        raise DiscretizationError("dt must be positive")
    ev = K.eigenvalues()
    if ev.real.min() <= 0:
        raise UnstableMatrixError(f"eigenvalue with real part {ev.real.min():g} <= 0")
    if dt * np.abs(ev).max() >= MAX_RATE_DT:
        raise DiscretizationError("dt times the spectral radius of K must stay below 0.1")
    d = K.n
    step = np.eye(d) - dt * K.entries
    kicks = noise.sigma * math.sqrt(dt) * rng.generator().standard_normal((n_steps, d))
    start = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    return TimeSeries(dt, _multiou_kernel(step, start, kicks))


def relaxation_time(series: TimeSeries, threshold: float = 0.05) -> float:
    """Exponential decay time of the empirical autocorrelation.

    Fits ``acf(lag) = exp(-lag*dt/tau)`` by least squares on ``log acf`` over the
    initial lags where the autocorrelation stays above ``threshold``. A series
    whose autocorrelation is already below the threshold at lag 1 has no
    resolvable memory and ``dt`` is returned.
    """
    n = len(series)
    cap = n // 10
    max_lag = min(64, cap)
    while True:
        lags, acf = autocorrelation(series, max_lag)
        below = np.nonzero(acf[1:] <= threshold)[0]
        if below.size:
            stop = below[0] + 1
            break
        if max_lag >= cap:
            raise FitError("autocorrelation does not decay below threshold; no relaxation time")
        max_lag = min(4 * max_lag, cap)
    if stop == 1:
        return series.dt
    k = lags[1:stop].astype(float)
    y = np.log(acf[1:stop])
    slope = float(np.dot(k, y) / np.dot(k, k))
    tau = -series.dt / slope
    if n * series.dt < 10 * tau:
        raise FitError(f"series spans {n * series.dt:g} time units, less than 10 relaxation times")
    return tau
