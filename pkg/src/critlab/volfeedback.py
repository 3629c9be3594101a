"""Self-exciting volatility: ARCH(infinity) returns and Hawkes event streams.

Both share a :class:`FeedbackKernel` with integral (or sum) ``g``. For ARCH the
kernel acts on integer lags, ``sigma_t^2 = sigma_0^2 + sum_{tau>=1} Phi(tau) r_{t-tau}^2``;
for Hawkes it is a density in continuous time,
``lambda(t) = lambda_0 + sum_{t_j<t} phi(t - t_j)``. In both cases ``g`` is the
branching ratio and ``1/(1-g)`` the amplification of the baseline activity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
from scipy.optimize import minimize

from critlab.analysis import autocorrelation, batch_means_se
from critlab.errors import DivergenceError, NonStationaryError, FitError
from critlab.rng import RngStream
from critlab.series import write_columns

KERNEL_KINDS = ("exponential", "power-law")


@dataclass(frozen=True)
class FeedbackKernel:
    """``exponential``: decay rate ``beta``. ``power-law``: exponent ``theta`` and cutoff ``tau_max``.

    Discrete weights (ARCH): ``g (1 - e^-beta) e^{-beta (tau - 1)}`` or
    ``c tau^{-1-theta}`` for ``tau = 1 .. tau_max``.
    Continuous density (Hawkes): ``g beta e^{-beta t}`` or
    ``c (1 + t)^{-1-theta}`` on ``[0, tau_max)``. Constants make the sum or
    integral equal to ``g``.
    """

    kind: str
    g: float
    beta: float | None = None
    theta: float | None = None
    tau_max: float | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"kind must be one of {KERNEL_KINDS}")
        if not (self.g >= 0 and math.isfinite(self.g)):
            raise ValueError("g must be finite and non-negative")
        if self.kind == "exponential":
            if self.beta is None or not self.beta > 0:
                raise ValueError("exponential kernel needs beta > 0")
        else:
            if self.theta is None or not self.theta > 0:
                raise ValueError("power-law kernel needs theta > 0")
            if self.tau_max is None or not math.isfinite(self.tau_max):
                if self.theta <= 1:
                    raise ValueError("power-law kernel with theta <= 1 needs a finite tau_max")
                raise ValueError("power-law kernel needs a finite tau_max")
            if not self.tau_max >= 1:
                raise ValueError("tau_max must be >= 1")

    @property
    def memory(self) -> float:
        """Characteristic memory in time units: ``1/beta`` or ``tau_max``."""
        return 1.0 / self.beta if self.kind == "exponential" else float(self.tau_max)

    # -- discrete time (ARCH) --
    def weights(self, n_lags: int | None = None) -> np.ndarray:
        """``Phi(1), Phi(2), ...``; all ``tau_max`` lags for power-law, ``n_lags`` for exponential."""
        if self.kind == "exponential":
            n_lags = n_lags or int(math.ceil(40 / self.beta))
            tau = np.arange(1, n_lags + 1)
            return self.g * -math.expm1(-self.beta) * np.exp(-self.beta * (tau - 1))
        tau = np.arange(1, int(self.tau_max) + 1, dtype=float)
        w = tau ** (-1.0 - self.theta)
        return self.g * w / w.sum()

    # -- continuous time (Hawkes) --
    def _pl_norm(self) -> float:
        return self.theta / -math.expm1(-self.theta * math.log1p(self.tau_max))

    def density(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "exponential":
            val = self.g * self.beta * np.exp(-self.beta * t)
            return np.where(t >= 0, val, 0.0)
        val = self.g * self._pl_norm() * (1.0 + np.maximum(t, 0.0)) ** (-1.0 - self.theta)
        return np.where((t >= 0) & (t < self.tau_max), val, 0.0)

    def integral(self, t) -> np.ndarray:
        """``int_0^t phi``."""
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        if self.kind == "exponential":
            return self.g * -np.expm1(-self.beta * t)
        t = np.minimum(t, self.tau_max)
        return self.g * self._pl_norm() * -np.expm1(-self.theta * np.log1p(t)) / self.theta


# -- ARCH ------------------------------------------------------------------------------------


@dataclass
class ReturnSeries:
    returns: np.ndarray
    sigma2: np.ndarray
    sigma0: float

    def mean_variance(self) -> tuple[float, float]:
        """Sample mean of ``sigma_t^2`` and its batch-means standard error."""
        return float(self.sigma2.mean()), batch_means_se(self.sigma2, 100)

    def amplification(self) -> float:
        return float(self.sigma2.mean() / self.sigma0**2)

    def to_csv(self, path: str | Path) -> None:
        write_columns(path, ["t", "r"], [np.arange(len(self.returns)), self.returns])


@numba.njit(cache=True)
def _arch_exponential(s0, a, b, xi, out_r, out_s):
    # sigma^2_t - s0 = a * S_t with S_{t+1} = b S_t + r_t^2
    S = 0.0
    for t in range(xi.shape[0]):
        s2 = s0 + a * S
        r = math.sqrt(s2) * xi[t]
        out_r[t] = r
        out_s[t] = s2
        S = b * S + r * r


@numba.njit(cache=True)
def _arch_convolution(s0, w, xi, out_r, out_s):
    L = w.shape[0]
    n = xi.shape[0]
    r2 = np.zeros(n)
    for t in range(n):
        acc = s0
        m = min(L, t)
        for k in range(m):
            acc += w[k] * r2[t - 1 - k]
        r = math.sqrt(acc) * xi[t]
        out_r[t] = r
        out_s[t] = acc
        r2[t] = r * r


def simulate_arch(sigma0: float, kernel: FeedbackKernel, n_steps: int, rng: RngStream,
                  burn_in: int | None = None) -> ReturnSeries:
    """Gaussian ARCH(infinity) returns ``r_t = sigma_t xi_t``; the first ``burn_in`` steps are dropped.

    ``burn_in`` defaults to ten kernel memories and may not be shorter.
    """
    if kernel.g >= 1:
        raise NonStationaryError("ARCH needs g < 1: no finite stationary variance")
    if not sigma0 > 0 or n_steps < 1:
        raise ValueError("sigma0 must be positive and n_steps >= 1")
    min_burn = int(math.ceil(10 * kernel.memory))
    burn_in = min_burn if burn_in is None else burn_in
    if burn_in < min_burn:
        raise ValueError(f"burn_in must be at least 10 kernel memories ({min_burn} steps)")
    total = n_steps + burn_in
    xi = rng.generator().standard_normal(total)
    r = np.empty(total)
    s = np.empty(total)
    s0 = sigma0 * sigma0
    if kernel.kind == "exponential":
        b = math.exp(-kernel.beta)
        _arch_exponential(s0, kernel.g * (1.0 - b), b, xi, r, s)
    else:
        _arch_convolution(s0, kernel.weights(), xi, r, s)
    return ReturnSeries(r[burn_in:], s[burn_in:], sigma0)


def correlation_time(x, max_lag: int) -> float:
    """Integrated autocorrelation time, summed up to the first non-positive lag."""
    _, acf = autocorrelation(np.asarray(x, dtype=float), max_lag)
    neg = np.flatnonzero(acf[1:] <= 0)
    stop = neg[0] + 1 if neg.size else len(acf)
    return float(0.5 + acf[1:stop].sum())


# -- Hawkes ----------------------------------------------------------------------------------


@dataclass
class EventSeries:
    times: np.ndarray
    t_max: float
    parents: np.ndarray = field(default=None)  # index of the parent event, -1 for immigrants

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("event times must be strictly increasing")
        if self.times.size and (self.times[0] < 0 or self.times[-1] > self.t_max):
            raise ValueError("event times must lie in [0, t_max]")
        if self.parents is not None:
            self.parents = np.asarray(self.parents, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.times)

    def rate(self, n_batches: int = 100) -> tuple[float, float]:
        """Mean event rate with a batch-means standard error over equal time windows."""
        counts, _ = np.histogram(self.times, bins=n_batches, range=(0.0, self.t_max))
        width = self.t_max / n_batches
        x = counts / width
        return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n_batches))

    def fano_factor(self, window: float) -> float:
        n_win = int(self.t_max // window)
        counts, _ = np.histogram(self.times, bins=n_win, range=(0.0, n_win * window))
        return float(counts.var(ddof=1) / counts.mean())

    def offspring_counts(self, horizon: float) -> np.ndarray:
        """Children per event, for events at least ``horizon`` before the end of the window."""
        if self.parents is None:
            raise ValueError("no parent attribution stored")
        kids = np.bincount(self.parents[self.parents >= 0], minlength=len(self.times))
        return kids[self.times <= self.t_max - horizon]

    def to_csv(self, path: str | Path) -> None:
        write_columns(path, ["t"], [self.times])


@numba.njit(cache=True)
def _grow(a, n):
    b = np.empty(2 * a.shape[0] + 16, dtype=a.dtype)
    b[:n] = a[:n]
    return b


@numba.njit(cache=True)
def _hawkes_kernel(kind, lam0, g, beta, theta, tau_max, norm, t_max, gen, max_events):
    """Ogata thinning. Between events the intensity only decreases, so the
    intensity just after the current time bounds it until the next event."""
    times = np.empty(1024)
    parents = np.empty(1024, dtype=np.int64)
    n = 0
    lo = 0  # first event still inside the power-law window
    t = 0.0
    S = 0.0  # exponential: sum of exp(-beta (t - t_j))
    while True:
        # intensity at t (right limit)
        if kind == 0:
            lam_bar = lam0 + g * beta * S
        else:
            while lo < n and t - times[lo] >= tau_max:
                lo += 1
            acc = 0.0
            for j in range(lo, n):
                acc += (1.0 + t - times[j]) ** (-1.0 - theta)
            lam_bar = lam0 + g * norm * acc
        w = gen.exponential(1.0 / lam_bar)
        t_new = t + w
        if t_new > t_max:
            break
        if kind == 0:
            S *= math.exp(-beta * w)
            lam = lam0 + g * beta * S
        else:
            while lo < n and t_new - times[lo] >= tau_max:
                lo += 1
            acc = 0.0
            for j in range(lo, n):
                acc += (1.0 + t_new - times[j]) ** (-1.0 - theta)
            lam = lam0 + g * norm * acc
        t = t_new
        if gen.random() * lam_bar > lam:
            continue
        # accepted: attribute to the baseline or to a past event
        u = gen.random() * lam - lam0
        parent = -1
        if u > 0:
            j = n - 1
            while j >= 0:
                d = t - times[j]
                if kind == 0:
                    c = g * beta * math.exp(-beta * d)
                elif d < tau_max:
                    c = g * norm * (1.0 + d) ** (-1.0 - theta)
                else:
                    break
                u -= c
                if u <= 0:
                    parent = j
                    break
                j -= 1
            if parent < 0:
                parent = n - 1  # round-off left u marginally positive
        if n == times.shape[0]:
            times = _grow(times, n)
            parents = _grow(parents, n)
        times[n] = t
        parents[n] = parent
        n += 1
        if kind == 0:
            S += 1.0
        if n >= max_events:
            return times[:n], parents[:n], 1
    return times[:n], parents[:n], 0


def _kernel_args(kernel: FeedbackKernel):
    if kernel.kind == "exponential":
        return 0, kernel.beta, 0.0, math.inf, 0.0
    return 1, 0.0, kernel.theta, float(kernel.tau_max), kernel._pl_norm()


def simulate_hawkes(lambda0: float, kernel: FeedbackKernel, t_max: float, rng: RngStream,
                    burn_in: float | None = None, max_events: int = 50_000_000) -> EventSeries:
    """Exact Hawkes path on ``[0, t_max]`` after discarding ``burn_in`` (default ten kernel memories).

    Parent indices refer to the returned events; parents that fell in the
    burn-in are reported as -1.
    """
    if kernel.g > 1:
        raise NonStationaryError("Hawkes process with g > 1 explodes")
    if kernel.g == 1 and kernel.kind == "exponential":
        raise NonStationaryError("critical Hawkes process needs a power-law kernel")
    if not (lambda0 > 0 and t_max > 0):
        raise ValueError("lambda0 and t_max must be positive")
    burn_in = 10 * kernel.memory if burn_in is None else float(burn_in)
    kind, beta, theta, tau_max, norm = _kernel_args(kernel)
    times, parents, status = _hawkes_kernel(kind, lambda0, kernel.g, beta, theta, tau_max, norm,
                                            t_max + burn_in, rng.generator(), max_events)
    if status:
        raise DivergenceError(f"more than {max_events} events")
    keep = times >= burn_in
    offset = int(np.argmax(keep)) if keep.any() else len(times)
    p = parents[keep] - offset
    p[p < 0] = -1
    return EventSeries(times[keep] - burn_in, t_max, p)


# -- estimation -----------------------------------------------------------------------------


@numba.njit(cache=True)
def _loglik_exponential(times, T, lam0, g, beta):
    A = 0.0
    ll = 0.0
    prev = 0.0
    comp = 0.0
    for i in range(times.shape[0]):
        t = times[i]
        if i > 0:
            A = math.exp(-beta * (t - prev)) * (1.0 + A)
        lam = lam0 + g * beta * A
        if lam <= 0:
            return -np.inf
        ll += math.log(lam)
        comp += -math.expm1(-beta * (T - t))
        prev = t
    return ll - lam0 * T - g * comp


@numba.njit(cache=True)
def _loglik_powerlaw(times, T, lam0, g, theta, tau_max):
    norm = theta / -math.expm1(-theta * math.log1p(tau_max))
    ll = 0.0
    comp = 0.0
    lo = 0
    for i in range(times.shape[0]):
        t = times[i]
        while t - times[lo] >= tau_max:
            lo += 1
        acc = 0.0
        for j in range(lo, i):
            acc += (1.0 + t - times[j]) ** (-1.0 - theta)
        lam = lam0 + g * norm * acc
        if lam <= 0:
            return -np.inf
        ll += math.log(lam)
        x = min(T - t, tau_max)
        comp += -math.expm1(-theta * math.log1p(x)) / theta
    return ll - lam0 * T - g * norm * comp


@dataclass
class HawkesFit:
    family: str
    g: float
    lambda0: float
    params: dict  # kernel shape: {"beta": ...} or {"theta": ..., "tau_max": ...}
    loglik: float
    n_events: int

    @property
    def aic(self) -> float:
        return 2 * 3 - 2 * self.loglik  # lambda0, g and one shape parameter

    def kernel(self) -> FeedbackKernel:
        return FeedbackKernel(self.family, self.g, **self.params)


MIN_EVENTS = 10_000


def estimate_branching_ratio(events: EventSeries, kernel_family: str, tau_max: float | None = None,
                             n_starts: int = 4, min_events: int = MIN_EVENTS) -> HawkesFit:
    """Maximum-likelihood fit of ``(lambda0, g, shape)`` with multi-start L-BFGS-B.

    Shape is ``beta`` (exponential) or ``theta`` (power-law; ``tau_max`` fixed,
    default ``100``). Returns the best of the starts.
    """
    if kernel_family not in KERNEL_KINDS:
        raise ValueError(f"kernel_family must be one of {KERNEL_KINDS}")
    t = events.times
    if len(t) < min_events:
        raise ValueError(f"need at least {min_events} events, got {len(t)}")
    T = events.t_max
    rate = len(t) / T
    gaps = np.diff(t)
    if kernel_family == "exponential":
        scale = 1.0 / float(np.median(gaps))

        def nll(x):
            return -_loglik_exponential(t, T, x[0], x[1], x[2])

        shapes = [scale * f for f in (0.01, 0.1, 1.0)]
        bounds = [(1e-10, None), (0.0, 0.9999), (1e-6, 1e6)]
    else:
        tau_max = 100.0 if tau_max is None else float(tau_max)

        def nll(x):
            return -_loglik_powerlaw(t, T, x[0], x[1], x[2], tau_max)

        shapes = [0.3, 1.0, 2.0]
        bounds = [(1e-10, None), (0.0, 0.9999), (0.05, 10.0)]
    starts = []
    for k in range(n_starts):
        g0 = (0.2, 0.5, 0.8, 0.95)[k % 4]
        starts.append([rate * (1 - g0), g0, shapes[k % len(shapes)]])
    best = None
    for x0 in starts:
        res = minimize(nll, np.array(x0), method="L-BFGS-B", bounds=bounds)
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise FitError("log-likelihood was not finite at any start")
    lam0, g, shape = (float(v) for v in best.x)
    params = {"beta": shape} if kernel_family == "exponential" else {"theta": shape, "tau_max": tau_max}
    return HawkesFit(kernel_family, g, lam0, params, float(-best.fun), len(t))
