"""Galton-Watson avalanches.

One rolling grain dislodges ``n`` others, ``n`` drawn IID from an offspring law
with mean ``R0``. Trees are grown generation by generation, keeping only the
number of live grains, so memory is O(1) per avalanche. The avalanche size
counts the initiating grain, which makes ``E[S] = 1/(1 - R0)`` below criticality.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numba
import numpy as np
from scipy import optimize, special

from critlab.rng import RngStream
from critlab.series import write_columns

DEFAULT_SIZE_CAP = 10**7
BLOCK_RUNS = 1 << 16
_ZETA_TABLE = 1 << 14

KINDS = ("poisson", "bernoulli-pair", "zeta-tail", "linear-fractional")
_CODE = {k: i for i, k in enumerate(KINDS)}


@dataclass(frozen=True)
class OffspringDistribution:
    """Offspring law with mean ``mean`` (the branching ratio R0).

    kinds:
      poisson            Poisson(R0).
      bernoulli-pair     0 or 2 grains, P(2) = R0/2; needs R0 <= 2.
      zeta-tail          P(n) ~ (n + c)**(-1 - alpha), n >= 0, c tuned so the mean is R0.
      linear-fractional  0 with probability 1 - R0/2, otherwise a geometric count
                         n >= 1 with P(n) = 2**-n. Its survival probability is
                         exactly (R0 - 1)+ for R0 <= 2. For R0 > 2 every grain has
                         a geometric number (mean R0) of offspring and survival is certain.
    """

    kind: str
    mean: float
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown offspring kind {self.kind!r}")
        if not self.mean >= 0:
            raise ValueError("mean must be non-negative")
        if self.kind == "bernoulli-pair" and self.mean > 2:
            raise ValueError("bernoulli-pair needs R0 <= 2")
        if self.kind == "zeta-tail":
            if self.alpha is None or not 1 < self.alpha <= 2:
                raise ValueError("zeta-tail needs 1 < alpha <= 2")

    @property
    def code(self) -> int:
        return _CODE[self.kind]

    @cached_property
    def shift(self) -> float:
        """Offset ``c`` of the zeta-tail law (0 for the other kinds)."""
        if self.kind != "zeta-tail" or self.mean == 0:
            return 0.0
        a = self.alpha

        def excess(c):
            return special.zeta(a, c) / special.zeta(1 + a, c) - c - self.mean

        hi = 1.0
        while excess(hi) < 0:
            hi *= 2
        return optimize.brentq(excess, 1e-12, hi, xtol=1e-14, rtol=1e-14)

    @cached_property
    def _zeta_tables(self):
        if self.kind != "zeta-tail" or self.mean == 0:
            return np.zeros(1), 0.0
        c, a = self.shift, self.alpha
        norm = 1.0 / special.zeta(1 + a, c)
        n = np.arange(_ZETA_TABLE)
        pmf = norm * (n + c) ** (-1.0 - a)
        return np.cumsum(pmf), norm

    def pmf(self, n) -> np.ndarray:
        n = np.asarray(n)
        m = self.mean
        if self.kind == "poisson":
            return np.exp(n * math.log(m) - m - special.gammaln(n + 1)) if m > 0 else (n == 0) * 1.0
        if self.kind == "bernoulli-pair":
            return np.where(n == 0, 1 - m / 2, np.where(n == 2, m / 2, 0.0))
        if self.kind == "linear-fractional":
            if m <= 2:
                return np.where(n == 0, 1 - m / 2, (m / 2) * 0.5 ** np.maximum(n, 1))
            p = 1 / m
            return np.where(n >= 1, p * (1 - p) ** (np.maximum(n, 1) - 1), 0.0)
        if m == 0:
            return (n == 0) * 1.0
        return (n + self.shift) ** (-1.0 - self.alpha) / special.zeta(1 + self.alpha, self.shift)

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        """Per-grain offspring counts."""
        m = self.mean
        if self.kind == "poisson":
            return gen.poisson(m, size)
        if self.kind == "bernoulli-pair":
            return 2 * gen.binomial(1, m / 2, size)
        if self.kind == "linear-fractional":
            if m <= 2:
                return (gen.random(size) < m / 2) * gen.geometric(0.5, size)
            return gen.geometric(1 / m, size)
        if m == 0:
            return np.zeros(size, dtype=np.int64)
        cdf, norm = self._zeta_tables
        u = gen.random(size)
        return _zeta_invert(u, cdf, self.shift, self.alpha, norm)

    def kernel_args(self):
        cdf, norm = self._zeta_tables
        return self.code, float(self.mean), cdf, float(self.shift), float(self.alpha or 0.0), float(norm)


@numba.njit(cache=True)
def _zeta_one(u, cdf, c, alpha, norm):
    if u < cdf[-1]:
        return np.searchsorted(cdf, u, side="right")
    # P(N >= n) ~ norm * (n + c - 1/2)**(-alpha) / alpha beyond the table
    t = 1.0 - u
    y = (t * alpha / norm) ** (-1.0 / alpha) - c + 0.5
    n = np.int64(math.floor(y))
    return max(n, cdf.shape[0])


@numba.njit(cache=True)
def _zeta_invert(u, cdf, c, alpha, norm):
    out = np.empty(u.shape[0], dtype=np.int64)
    for i in range(u.shape[0]):
        out[i] = _zeta_one(u[i], cdf, c, alpha, norm)
    return out


@numba.njit(cache=True, nogil=True)
def total_offspring(code, mean, live, gen, cdf, c, alpha, norm):
    """Summed offspring of ``live`` grains."""
    if mean == 0.0:
        return 0
    if code == 0:
        return gen.poisson(mean * live)
    if code == 1:
        return 2 * gen.binomial(live, min(mean / 2.0, 1.0))
    if code == 3:
        if mean <= 2.0:
            active = gen.binomial(live, mean / 2.0)
            if active == 0:
                return 0
            return active + gen.negative_binomial(active, 0.5)
        return live + gen.negative_binomial(live, 1.0 / mean)
    total = 0
    for _ in range(live):
        total += _zeta_one(gen.random(), cdf, c, alpha, norm)
    return total


@numba.njit(cache=True, nogil=True)
def grow_avalanche(code, mean, cap, gen, cdf, c, alpha, norm):
    """One tree from a single ancestor: (size, duration, capped)."""
    size = 1
    duration = 1
    live = 1
    while True:
        k = total_offspring(code, mean, live, gen, cdf, c, alpha, norm)
        if k == 0:
            return size, duration, False
        if size + k >= cap:
            return cap, duration + 1, True
        size += k
        duration += 1
        live = k


@numba.njit(cache=True, nogil=True)
def _ensemble_kernel(code, mean, cap, n, gen, cdf, c, alpha, norm):
    sizes = np.empty(n, dtype=np.int64)
    durations = np.empty(n, dtype=np.int64)
    capped = np.empty(n, dtype=np.bool_)
    for i in range(n):
        s, d, k = grow_avalanche(code, mean, cap, gen, cdf, c, alpha, norm)
        sizes[i] = s
        durations[i] = d
        capped[i] = k
    return sizes, durations, capped


@dataclass(frozen=True)
class AvalancheRecord:
    size: int
    duration: int
    capped: bool

    def __post_init__(self):
        if self.size < 1 or self.duration < 1:
            raise ValueError("size and duration are at least 1")


@dataclass
class Avalanches:
    """Column store of avalanche records."""

    size: np.ndarray
    duration: np.ndarray
    capped: np.ndarray

    def __len__(self):
        return len(self.size)

    def __getitem__(self, i) -> AvalancheRecord:
        return AvalancheRecord(int(self.size[i]), int(self.duration[i]), bool(self.capped[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def uncapped_sizes(self) -> np.ndarray:
        return self.size[~self.capped]

    def to_csv(self, path: str | Path) -> None:
        write_columns(path, ["size", "duration", "capped"], [self.size, self.duration, self.capped])

    @classmethod
    def concat(cls, parts) -> Avalanches:
        parts = list(parts)
        return cls(np.concatenate([p.size for p in parts]),
                   np.concatenate([p.duration for p in parts]),
                   np.concatenate([p.capped for p in parts]))


def run_avalanche(dist: OffspringDistribution, size_cap: int, rng: RngStream) -> AvalancheRecord:
    if size_cap < 1:
        raise ValueError("size_cap must be at least 1")
    s, d, k = grow_avalanche(*_prefix(dist, size_cap), rng.generator(), *_suffix(dist))
    return AvalancheRecord(int(s), int(d), bool(k))


def _prefix(dist, cap):
    code, mean, *_ = dist.kernel_args()
    return code, mean, int(cap)


def _suffix(dist):
    _, _, cdf, c, alpha, norm = dist.kernel_args()
    return cdf, c, alpha, norm


def avalanche_ensemble(dist: OffspringDistribution, n_runs: int, size_cap: int = DEFAULT_SIZE_CAP,
                       rng: RngStream = RngStream(0), threads: int = 1) -> Avalanches:
    """``n_runs`` independent avalanches.

    Work is split into fixed blocks of runs, each with its own sub-stream, so the
    result does not depend on ``threads``.
    """
    if size_cap < 1:
        raise ValueError("size_cap must be at least 1")
    code, mean, cap = _prefix(dist, size_cap)
    tail = _suffix(dist)
    blocks = [(b, min(BLOCK_RUNS, n_runs - b * BLOCK_RUNS))
              for b in range(math.ceil(n_runs / BLOCK_RUNS))]

    def work(block):
        b, n = block
        out = _ensemble_kernel(code, mean, cap, n, rng.child(b).generator(), *tail)
        return Avalanches(*out)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    if not parts:
        return Avalanches(np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, bool))
    return Avalanches.concat(parts)


def survival_probability(dist: OffspringDistribution, n_runs: int, size_cap: int,
                         rng: RngStream, threads: int = 1) -> float:
    """Fraction of avalanches that reach ``size_cap`` while still alive."""
    if n_runs < 1000:
        raise ValueError("n_runs must be at least 1000")
    return float(avalanche_ensemble(dist, n_runs, size_cap, rng, threads).capped.mean())


def median_size_by_duration(av: Avalanches, min_count: int = 20):
    """Median size of uncapped avalanches for each duration seen at least ``min_count`` times."""
    keep = ~av.capped
    d = av.duration[keep]
    s = av.size[keep]
    order = np.argsort(d, kind="stable")
    d, s = d[order], s[order]
    uniq, start, counts = np.unique(d, return_index=True, return_counts=True)
    sel = counts >= min_count
    med = np.array([np.median(s[a:a + n]) for a, n in zip(start[sel], counts[sel])])
    return uniq[sel], med
