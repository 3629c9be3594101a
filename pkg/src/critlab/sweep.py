"""Slope-sweeping sandpile.

The branching ratio R0 of a pile grows deterministically at rate ``mu``. Single
grains start rolling at Poisson rate ``gamma``; each one triggers a branching
avalanche with offspring mean equal to the current R0. An avalanche that reaches
``system_size`` is a landslide and resets R0 to 0. Smaller avalanches leave R0
untouched.

The default offspring law is ``linear-fractional``, whose survival probability is
exactly ``(R0 - 1)+`` up to R0 = 2, so landslides arrive at rate
``gamma (R0 - 1)+`` as in the slope equation. Beyond R0 = 2 the landslide
probability saturates at 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from scipy import special

from critlab.branching import (Avalanches, OffspringDistribution, grow_avalanche)
from critlab.rng import RngStream
from critlab.series import TimeSeries, write_columns

_SWEEP_KINDS = ("linear-fractional", "poisson", "bernoulli-pair")


@dataclass(frozen=True)
class SweepConfig:
    mu: float
    gamma: float
    dt: float
    system_size: int
    offspring: str = "linear-fractional"

    def __post_init__(self):
        # gamma = 0 is accepted as the trigger-free limit (R0 grows forever)
        if not (self.mu > 0 and self.gamma >= 0 and self.dt > 0):
            raise ValueError("mu and dt must be positive, gamma non-negative")
        if self.mu * self.dt >= 0.01:
            raise ValueError("mu*dt must stay below 0.01")
        if self.system_size < 1000:
            raise ValueError("system_size must be at least 1000")
        if self.offspring not in _SWEEP_KINDS:
            raise ValueError(f"offspring kind must be one of {_SWEEP_KINDS}")

    @property
    def z(self) -> float:
        """Normalisation ``1 + sqrt(pi mu / (2 gamma))`` of the stationary slope law."""
        if self.gamma == 0:
            return math.inf
        return 1.0 + math.sqrt(math.pi * self.mu / (2.0 * self.gamma))


def _need_triggers(cfg):
    if cfg.gamma == 0:
        raise ValueError("no stationary slope law without triggers (gamma = 0)")


def stationary_slope_density(cfg: SweepConfig):
    """Closed-form stationary density of R0: flat on [0, 1], Gaussian decay above."""
    _need_triggers(cfg)
    z = cfg.z
    k = cfg.gamma / (2.0 * cfg.mu)

    def density(r0):
        r = np.asarray(r0, dtype=float)
        out = np.where(r > 1.0, np.exp(-k * (r - 1.0) ** 2), 1.0) / z
        return np.where(r < 0, 0.0, out)

    return density


def stationary_slope_cdf(cfg: SweepConfig):
    _need_triggers(cfg)
    z = cfg.z
    s = math.sqrt(math.pi * cfg.mu / (2.0 * cfg.gamma))
    k = math.sqrt(cfg.gamma / (2.0 * cfg.mu))

    def cdf(r0):
        r = np.asarray(r0, dtype=float)
        above = (1.0 + s * special.erf((r - 1.0) * k)) / z
        return np.clip(np.where(r <= 1.0, r / z, above), 0.0, 1.0)

    return cdf


def sample_stationary_slope(cfg: SweepConfig, n: int, gen: np.random.Generator) -> np.ndarray:
    _need_triggers(cfg)
    flat = gen.random(n) < 1.0 / cfg.z
    out = np.where(flat, gen.random(n), 1.0 + np.abs(gen.standard_normal(n)) * math.sqrt(cfg.mu / cfg.gamma))
    return out


@numba.njit(cache=True, nogil=True)
def _grow(a, n):
    b = np.empty(max(2 * a.shape[0], n), dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@numba.njit(cache=True, nogil=True)
def _sweep_kernel(code, mu, gamma, cap, t_max, gen, cdf, c, alpha, norm, guess):
    times = np.empty(guess, dtype=np.float64)
    r0s = np.empty(guess, dtype=np.float64)
    sizes = np.empty(guess, dtype=np.int64)
    durs = np.empty(guess, dtype=np.int64)
    slide = np.empty(guess, dtype=np.bool_)
    n = 0
    t = 0.0
    t_reset = 0.0
    while True:
        t += gen.exponential(1.0 / gamma)
        if t > t_max:
            break
        r0 = mu * (t - t_reset)
        mean = r0
        if code == 1 and mean > 2.0:
            mean = 2.0
        s, d, k = grow_avalanche(code, mean, cap, gen, cdf, c, alpha, norm)
        if n == times.shape[0]:
            times = _grow(times, n + 1)
            r0s = _grow(r0s, n + 1)
            sizes = _grow(sizes, n + 1)
            durs = _grow(durs, n + 1)
            slide = _grow(slide, n + 1)
        times[n] = t
        r0s[n] = r0
        sizes[n] = s
        durs[n] = d
        slide[n] = k
        n += 1
        if k:
            t_reset = t
    return times[:n], r0s[:n], sizes[:n], durs[:n], slide[:n]


@dataclass
class SweepRun:
    """Trajectory of one pile: triggers with the R0 they saw, and their avalanches."""

    cfg: SweepConfig
    t_max: float
    trigger_time: np.ndarray
    r0_at_trigger: np.ndarray
    avalanches: Avalanches

    @property
    def landslide(self) -> np.ndarray:
        return self.avalanches.capped

    @property
    def reset_times(self) -> np.ndarray:
        return self.trigger_time[self.landslide]

    def segment_lengths(self) -> np.ndarray:
        edges = np.concatenate(([0.0], self.reset_times, [self.t_max]))
        return np.diff(edges)

    def r0_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        resets = self.reset_times
        if resets.size == 0:
            return self.cfg.mu * t
        idx = np.searchsorted(resets, t, side="right")
        last = np.where(idx > 0, resets[np.maximum(idx - 1, 0)], 0.0)
        return self.cfg.mu * (t - last)

    def path(self, dt: float | None = None) -> TimeSeries:
        """R0 sampled every ``dt`` (defaults to the config step)."""
        dt = self.cfg.dt if dt is None else dt
        t = np.arange(int(math.floor(self.t_max / dt)) + 1) * dt
        return TimeSeries(dt, self.r0_at(t), labels=["r0"])

    def occupation_cdf(self, x) -> np.ndarray:
        """Exact fraction of time with R0 <= x over [0, t_max]."""
        lengths = np.sort(self.segment_lengths())
        csum = np.concatenate(([0.0], np.cumsum(lengths)))
        a = np.asarray(x, dtype=float) / self.cfg.mu
        k = np.searchsorted(lengths, a, side="left")
        below = csum[k] + a * (len(lengths) - k)
        return np.clip(below / self.t_max, 0.0, 1.0)

    def ks_to_stationary(self, n_grid: int = 20000) -> float:
        """Sup distance between the time-averaged R0 law and the closed form."""
        cdf = stationary_slope_cdf(self.cfg)
        ends = self.cfg.mu * self.segment_lengths()
        hi = max(float(ends.max()), 1.0)
        x = np.unique(np.concatenate((np.linspace(0.0, hi, n_grid), ends)))
        return float(np.max(np.abs(self.occupation_cdf(x) - cdf(x))))

    def write_csv(self, outdir: str | Path, path_dt: float | None = None) -> None:
        outdir = Path(outdir)
        p = self.path(path_dt)
        write_columns(outdir / "r0_path.csv", ["t", "r0"], [p.times, p.component(0)])
        av = self.avalanches
        write_columns(outdir / "avalanches.csv", ["t", "r0_at_trigger", "size", "duration", "landslide"],
                      [self.trigger_time, self.r0_at_trigger, av.size, av.duration, av.capped])


def simulate_sweep(cfg: SweepConfig, t_max: float, rng: RngStream) -> SweepRun:
    """Event-driven pile: exponential waiting times between triggers, R0 linear in between."""
    if cfg.gamma == 0:
        empty_i = np.empty(0, dtype=np.int64)
        return SweepRun(cfg, float(t_max), np.empty(0), np.empty(0), Avalanches(empty_i, empty_i.copy(), np.empty(0, bool)))
    dist = OffspringDistribution(cfg.offspring, 0.0)
    code, _, cdf, c, alpha, norm = dist.kernel_args()
    guess = int(cfg.gamma * t_max + 10 * math.sqrt(cfg.gamma * t_max) + 16)
    times, r0s, sizes, durs, slide = _sweep_kernel(code, cfg.mu, cfg.gamma, int(cfg.system_size), float(t_max),
                                                  rng.generator(), cdf, c, alpha, norm, guess)
    return SweepRun(cfg, float(t_max), times, r0s, Avalanches(sizes, durs, slide))


@dataclass
class MixtureSample:
    r0: np.ndarray
    avalanches: Avalanches


@numba.njit(cache=True, nogil=True)
def _mixture_kernel(code, r0s, cap, gen, cdf, c, alpha, norm):
    n = r0s.shape[0]
    sizes = np.empty(n, dtype=np.int64)
    durs = np.empty(n, dtype=np.int64)
    capped = np.empty(n, dtype=np.bool_)
    for i in range(n):
        m = r0s[i]
        if code == 1 and m > 2.0:
            m = 2.0
        s, d, k = grow_avalanche(code, m, cap, gen, cdf, c, alpha, norm)
        sizes[i] = s
        durs[i] = d
        capped[i] = k
    return sizes, durs, capped


def mixture_avalanche_law(cfg: SweepConfig, n_samples: int, rng: RngStream,
                          r0_max: float | None = None) -> MixtureSample:
    """One avalanche per R0 drawn from the stationary slope law.

    ``r0_max`` truncates the slope law (rejection sampling), e.g. to a strictly
    subcritical range.
    """
    gen = rng.generator()
    if r0_max is None:
        r0 = sample_stationary_slope(cfg, n_samples, gen)
    else:
        chunks, got = [], 0
        while got < n_samples:
            draw = sample_stationary_slope(cfg, max(1024, 2 * (n_samples - got)), gen)
            draw = draw[draw <= r0_max]
            chunks.append(draw)
            got += len(draw)
        r0 = np.concatenate(chunks)[:n_samples]
    dist = OffspringDistribution(cfg.offspring, 0.0)
    code, _, cdf, c, alpha, norm = dist.kernel_args()
    sizes, durs, capped = _mixture_kernel(code, r0, int(cfg.system_size), gen, cdf, c, alpha, norm)
    return MixtureSample(r0, Avalanches(sizes, durs, capped))


def dragon_king_excess(sample: MixtureSample, system_size: int, exponent: float, x_min: float) -> float:
    """Observed P(S > S_max/2) over the power-law extrapolation of the finite-size tail.

    The power law ``c S**(-exponent)`` is normalised on the uncapped tail above
    ``x_min``; capped avalanches count as size ``S_max``.
    """
    s = sample.avalanches.size
    n = len(s)
    uncapped = s[~sample.avalanches.capped]
    tail_frac = np.count_nonzero(uncapped >= x_min) / n
    b = exponent - 1.0
    # density c S^-a with integral tail_frac above x_min
    c = tail_frac * b * x_min ** b
    lo, hi = system_size / 2.0, float(system_size)
    extrapolated = c * (lo ** -b - hi ** -b) / b
    observed = np.count_nonzero(s > lo) / n
    return float(observed / extrapolated)
