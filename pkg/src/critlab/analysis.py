"""Shared statistics: power-law tails, autocorrelation, log-binned histograms.

Exponent convention: every exponent reported here refers to the probability
*density*, ``p(x) ~ x**(-exponent)``. A density exponent of 3/2 corresponds to a
complementary CDF decaying as ``x**(-1/2)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize

from critlab.series import TimeSeries

MIN_TAIL = 100


@dataclass
class TailFit:
    exponent: float
    x_min: float
    n_tail: int
    ks_distance: float
    verdict: str  # "power-law" | "exponential" | "insufficient"
    x_max: float | None = None
    ks_exponential: float | None = None

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps({k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                           for k, v in d.items()})

    @classmethod
    def from_json(cls, text: str) -> TailFit:
        d = json.loads(text)
        d["exponent"] = float("nan") if d["exponent"] is None else d["exponent"]
        d["ks_distance"] = float("nan") if d["ks_distance"] is None else d["ks_distance"]
        return cls(**d)


def _pareto_mle(logs: np.ndarray, log_ratio_max: float | None) -> float:
    """MLE of the density exponent given ``logs = ln(x / x_min)``."""
    n = len(logs)
    s = float(logs.sum())
    if s <= 0:
        return float("inf")
    alpha = 1.0 + n / s
    if log_ratio_max is None:
        return alpha

    # Truncated Pareto on [x_min, x_max]: maximise the exact log-likelihood.
    def negll(a):
        b = a - 1.0
        if abs(b) < 1e-10:
            norm = log_ratio_max
        else:
            norm = -math.expm1(-b * log_ratio_max) / b
        return -(-n * math.log(norm) - a * s)

    res = optimize.minimize_scalar(negll, bounds=(0.0, max(20.0, 2 * alpha)), method="bounded",
                                   options={"xatol": 1e-10})
    return float(res.x)


def _pareto_cdf(x, x_min, alpha, x_max=None):
    b = alpha - 1.0
    u = np.log(x / x_min)
    if x_max is None:
        return -np.expm1(-b * u)
    L = math.log(x_max / x_min)
    if abs(b) < 1e-12:
        return u / L
    return np.expm1(-b * u) / math.expm1(-b * L)


def _ks(sorted_x: np.ndarray, cdf: np.ndarray) -> float:
    n = len(sorted_x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def _fit_at(x: np.ndarray, x_min: float, x_max: float | None):
    tail = np.sort(x[(x >= x_min) & (x <= x_max if x_max is not None else True)])
    if len(tail) < MIN_TAIL:
        return None
    logs = np.log(tail / x_min)
    lr = None if x_max is None else math.log(x_max / x_min)
    alpha = _pareto_mle(logs, lr)
    ks = _ks(tail, _pareto_cdf(tail, x_min, alpha, x_max))
    return alpha, tail, ks


def fit_power_law(samples, x_min: float | str | None = "auto", x_max: float | None = None,
                  n_candidates: int = 60) -> TailFit:
    """Continuous maximum-likelihood fit of a power-law tail.

    With a fixed ``x_min`` the estimate is ``1 + n / sum(ln(x/x_min))``; when
    ``x_max`` is given the samples are restricted to ``[x_min, x_max]`` and the
    truncated-Pareto likelihood is maximised instead. ``x_min="auto"`` scans a
    log-spaced grid of candidate cutoffs (keeping at least 10% of the data and
    100 points) and keeps the one with the smallest KS distance.

    The verdict is ``"exponential"`` when the power-law KS distance exceeds three
    times that of a shifted exponential fitted to the same tail.
    """
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x) & (x > 0)]
    if x_min is None or (isinstance(x_min, str) and x_min == "auto"):
        if len(x) < MIN_TAIL:
            return TailFit(float("nan"), float("nan"), int(len(x)), float("nan"), "insufficient", x_max)
        lo = float(x.min())
        upper = np.quantile(x, 0.9)
        if len(x) * 0.1 < MIN_TAIL:
            upper = np.sort(x)[-MIN_TAIL]
        if x_max is not None:
            upper = min(upper, x_max / 10)
        cands = np.unique(np.geomspace(lo, max(upper, lo), n_candidates))
        best = None
        for c in cands:
            r = _fit_at(x, c, x_max)
            if r is None:
                continue
            if best is None or r[2] < best[3]:
                best = (c, r[0], r[1], r[2])
        if best is None:
            return TailFit(float("nan"), lo, 0, float("nan"), "insufficient", x_max)
        xm, alpha, tail, ks = best
    else:
        xm = float(x_min)
        r = _fit_at(x, xm, x_max)
        if r is None:
            n_tail = int(np.count_nonzero(x >= xm))
            return TailFit(float("nan"), xm, n_tail, float("nan"), "insufficient", x_max)
        alpha, tail, ks = r

    # Competing model: exponential tail above the same cutoff.
    excess = tail - xm
    scale = excess.mean()
    if scale > 0:
        ks_exp = _ks(tail, -np.expm1(-excess / scale))
    else:
        ks_exp = 1.0
    verdict = "exponential" if ks > 3 * ks_exp or alpha <= 1 else "power-law"
    return TailFit(float(alpha), float(xm), int(len(tail)), float(ks), verdict, x_max, float(ks_exp))


def autocorrelation(series, max_lag: int) -> tuple[np.ndarray, np.ndarray]:
    """Unbiased lag-product autocorrelation, normalised to 1 at lag 0.

    ``series`` is a :class:`TimeSeries` (first component) or a 1-D array. A constant
    series has autocorrelation identically 1.
    """
    x = series.component(0) if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    n = len(x)
    if n < 10 * max_lag:
        raise ValueError(f"series of length {n} too short for max_lag={max_lag}")
    lags = np.arange(max_lag + 1)
    y = x - x.mean()
    c0 = float(np.dot(y, y)) / n
    if c0 <= 1e-300 * max(1.0, float(np.abs(x).max()) ** 2):
        return lags, np.ones(max_lag + 1)
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(np.dot(y[:-k], y[k:])) / (n - k) / c0
    return lags, out


def log_binned_histogram(samples, bins_per_decade: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Density on logarithmic bins; returns geometric bin centres and densities.

    Bins with zero count are kept (density 0). The densities integrate to one over
    the bin widths.
    """
    x = np.asarray(samples, dtype=float)
    if np.any(x <= 0):
        raise ValueError("samples must be positive")
    lo = math.floor(math.log10(x.min()) * bins_per_decade) / bins_per_decade
    hi = math.floor(math.log10(x.max()) * bins_per_decade) / bins_per_decade + 1.0 / bins_per_decade
    n_bins = max(1, int(round((hi - lo) * bins_per_decade)))
    edges = 10.0 ** (lo + np.arange(n_bins + 1) / bins_per_decade)
    edges[0] = min(edges[0], x.min())
    edges[-1] = max(edges[-1], x.max() * (1 + 1e-12))
    counts, _ = np.histogram(x, bins=edges)
    widths = np.diff(edges)
    density = counts / (len(x) * widths)
    centres = np.sqrt(edges[:-1] * edges[1:])
    return centres, density


def batch_means_se(x, n_batches: int = 100) -> float:
    """Standard error of the mean of a correlated sequence by non-overlapping batches."""
    x = np.asarray(x, dtype=float)
    m = len(x) // n_batches
    if m < 1:
        raise ValueError("not enough samples for the requested batches")
    means = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def ks_distance_to_cdf(samples, cdf) -> float:
    """One-sample KS distance between ``samples`` and a callable CDF."""
    s = np.sort(np.asarray(samples, dtype=float))
    return _ks(s, np.asarray(cdf(s), dtype=float))


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x`` over positive entries."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = (x > 0) & (y > 0)
    return float(np.polyfit(np.log(x[m]), np.log(y[m]), 1)[0])
