"""Mean-field repricing avalanches.

Firms hold real log-prices in ``[p_minus, p_plus]`` that erode at the inflation
rate. A firm reprices to ``p_plus`` spontaneously at rate ``gamma``, or at once
when its price reaches ``p_minus``. A repricing by ``Delta`` raises the price
index by ``J * Delta / n_firms`` and lowers the real prices of other firms.
Firms pushed below ``p_minus`` reprice in turn, within the same instant: this
is a repricing cascade.

Two couplings spread the impulse:

``"global"``
    every other real price drops by ``J * Delta / n_firms``. Deterministic
    resets to ``p_plus`` then preserve the gaps between queued firms from one
    cycle to the next, and once the queue is regular almost no impulse tips a
    neighbour: cascades die out although mean inflation is right.
``"random"`` (default)
    ``exposure`` randomly chosen firms (the repricer's customers, redrawn
    every time) each drop by ``J * Delta / exposure``. The mean shift per firm
    is the same, but firms receive kicks at random phases, so a fraction ``J``
    of the crossings of ``p_minus`` happen through kicks and the cascade
    branching ratio is ``J * P(p_minus) (p_plus - p_minus)``.

In both cases the inflation is measured on the index
``I0 t + J sum(Delta) / n_firms``, whose stationary mean is exactly
``I0 / (1 - J)`` by the balance of the mean price.

Implementation: event driven. Prices are stored as ``q_i = p_i + X`` with
``X`` the cumulative drift (and, for global coupling, the impulses). Global
coupling keeps firms in a FIFO queue; random coupling uses a binary heap on
``q`` since kicks reorder firms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from critlab.errors import DivergenceError, NonStationaryError
from critlab.rng import RngStream
from critlab.series import TimeSeries, write_columns


COUPLINGS = ("random", "global")


@dataclass(frozen=True)
class RepricingConfig:
    n_firms: int
    p_minus: float
    p_plus: float
    gamma: float
    J: float
    I0: float
    dt: float
    coupling: str = "random"  # "random": K random customers per repricing; "global": everyone
    exposure: int = 64  # K

    def __post_init__(self):
        if self.n_firms < 1:
            raise ValueError("n_firms must be positive")
        if not (self.p_minus < self.p_plus and self.p_plus > 0):
            raise ValueError("need p_minus < p_plus and p_plus > 0")
        if not (self.gamma > 0 and self.I0 > 0 and self.dt > 0):
            raise ValueError("gamma, I0 and dt must be positive")
        if not self.J >= 0:
            raise ValueError("J must be non-negative")
        if self.coupling not in COUPLINGS:
            raise ValueError(f"coupling must be one of {COUPLINGS}")
        if self.exposure < 1 or self.exposure >= self.n_firms:
            raise ValueError("exposure must be in [1, n_firms)")

    @property
    def width(self) -> float:
        return self.p_plus - self.p_minus

    def small_gamma_ratio(self) -> float:
        """``gamma (p_plus - p_minus) / I_st``; the closed forms assume it is small (J < 1 only)."""
        if self.J >= 1:
            return math.inf
        return self.gamma * self.width * (1.0 - self.J) / self.I0


@dataclass
class RepricingState:
    prices: np.ndarray
    inflation: float
    time: float = 0.0

    def __post_init__(self):
        self.prices = np.asarray(self.prices, dtype=float)


def initial_state(cfg: RepricingConfig, rng: RngStream) -> RepricingState:
    """Prices uniform on the band (the small-gamma stationary law)."""
    gen = rng.generator()
    p = cfg.p_minus + cfg.width * gen.random(cfg.n_firms)
    p = np.maximum(p, np.nextafter(cfg.p_minus, cfg.p_plus))
    return RepricingState(p, cfg.I0, 0.0)


# -- closed forms -----------------------------------------------------------------------------


def _density(cfg: RepricingConfig, I: float):
    k = cfg.gamma / I
    lo, hi = cfg.p_minus, cfg.p_plus

    def pdf(p):
        p = np.asarray(p, dtype=float)
        # exp(k p) / Z, normalised stably
        val = k * np.exp(k * (p - hi)) / -np.expm1(-k * (hi - lo))
        return np.where((p >= lo) & (p <= hi), val, 0.0)

    return pdf


def stationary_cdf(cfg: RepricingConfig, I: float):
    k = cfg.gamma / I
    lo, hi = cfg.p_minus, cfg.p_plus

    def cdf(p):
        p = np.clip(np.asarray(p, dtype=float), lo, hi)
        return np.expm1(k * (p - lo)) / np.expm1(k * (hi - lo))

    return cdf


def _bracket_terms(cfg: RepricingConfig, I: float) -> tuple[float, float]:
    """(p_plus - mean price, density at p_minus) under the exponential law at inflation I."""
    k = cfg.gamma / I
    w = cfg.width
    x = k * w
    if x < 1e-8:
        return w / 2.0, 1.0 / w
    mean_gap = 1.0 / k - w / math.expm1(x)  # p_plus - pbar: mean of an exponential truncated to [0, w]
    dens_lo = k * math.exp(-x) / -math.expm1(-x)
    return mean_gap, dens_lo


def stationary_density(cfg: RepricingConfig, tol: float = 1e-13, max_iter: int = 100_000):
    """Stationary price density and inflation.

    Iterates ``I <- I0 + J [gamma (p_plus - pbar(I)) + I P(p_minus; I) (p_plus - p_minus)]``
    with the exponential stationary law evaluated at the current ``I``.
    Returns ``(pdf, I_st)``.
    """
    if cfg.J >= 1:
        raise NonStationaryError("no stationary state for J >= 1")
    I = cfg.I0
    for _ in range(max_iter):
        gap, dens = _bracket_terms(cfg, I)
        new = cfg.I0 + cfg.J * (cfg.gamma * gap + I * dens * cfg.width)
        if not math.isfinite(new):
            break
        if abs(new - I) <= tol * new:
            return _density(cfg, new), new
        I = new
    raise NonStationaryError("inflation fixed point did not converge")


def predicted_branching_ratio(cfg: RepricingConfig) -> float:
    """Stationary probability mass within ``J (p_plus - p_minus)`` of ``p_minus``."""
    _, I = stationary_density(cfg)
    cdf = stationary_cdf(cfg, I)
    return float(cdf(cfg.p_minus + cfg.J * cfg.width))


def predicted_flux(cfg: RepricingConfig) -> float:
    """Stationary reinjection flux at ``p_plus``: ``gamma + I_st P_st(p_minus)``."""
    _, I = stationary_density(cfg)
    _, dens = _bracket_terms(cfg, I)
    return cfg.gamma + I * dens


def evolve_density(cfg: RepricingConfig, t_max: float, n_cells: int = 400, P0=None):
    """Upwind finite-volume solution of the price-density equation with reinjection at ``p_plus``.

    The inflation at each step solves the mean-field relation for ``I`` given
    the current density. Returns ``(cell_centres, density, inflation_path)``.
    Serves as an independent check of the agent-based engine and of
    :func:`stationary_density`.
    """
    w = cfg.width
    h = w / n_cells
    centres = cfg.p_minus + h * (np.arange(n_cells) + 0.5)
    P = np.full(n_cells, 1.0 / w) if P0 is None else np.asarray(P0, dtype=float).copy()
    path = []
    t = 0.0
    while t < t_max:
        pbar = float(np.sum(centres * P) * h)
        denom = 1.0 - cfg.J * P[0] * w
        if denom <= 0:
            raise NonStationaryError("mean-field inflation diverges")
        I = (cfg.I0 + cfg.J * cfg.gamma * (cfg.p_plus - pbar)) / denom
        dt = min(0.5 * h / I, 0.1 / cfg.gamma, t_max - t)
        out_flux = I * P[0]  # leaving through p_minus
        inflow = cfg.gamma * np.sum(P) * h + out_flux  # reinjected at p_plus
        newP = P.copy()
        newP[:-1] += dt * I * (P[1:] - P[:-1]) / h
        newP[-1] += dt * (inflow - I * P[-1]) / h
        newP -= dt * cfg.gamma * P
        P = newP
        t += dt
        path.append((t, I))
    return centres, P, np.array(path)


# -- agent-based engine ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _compact(qf, qs, stamp, head, size, cap):
    nf = np.empty_like(qf)
    ns = np.empty_like(qs)
    m = 0
    for j in range(size):
        idx = (head + j) % cap
        if qs[idx] == stamp[qf[idx]]:
            nf[m] = qf[idx]
            ns[m] = qs[idx]
            m += 1
    qf[:] = nf
    qs[:] = ns
    return 0, m


@numba.njit(cache=True)
def _grow_f(a):
    b = np.empty(2 * a.shape[0], dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@numba.njit(cache=True)
def _engine(q, X, t0, n_steps, dt, p_lo, p_hi, gamma, J, I0, gen, capped, runaway_limit,
            burn_steps, snap_every, hist_edges_lo, hist_width, n_bins):
    n = q.shape[0]
    cap = 4 * n + 16
    qf = np.empty(cap, dtype=np.int64)
    qs = np.zeros(cap, dtype=np.int64)
    stamp = np.zeros(n, dtype=np.int64)
    order = np.argsort(q)
    for j in range(n):
        qf[j] = order[j]
    head = 0
    size = n
    last_forced = np.full(n, -1, dtype=np.int64)

    Xb = np.empty(n_steps + 1)
    Xb[0] = X
    n_spont = np.zeros(n_steps, dtype=np.int64)
    n_forced = np.zeros(n_steps, dtype=np.int64)
    hist = np.zeros(n_bins, dtype=np.int64)
    n_snaps = 0

    c_cap = 1024
    c_t = np.empty(c_cap)
    c_size = np.empty(c_cap, dtype=np.int64)
    c_kids = np.empty(c_cap, dtype=np.int64)  # children of forced repricers
    c_rootf = np.empty(c_cap, dtype=np.bool_)
    n_casc = 0

    pend_f = np.empty(n + 1, dtype=np.int64)
    pend_d = np.empty(n + 1)
    pend_forced = np.empty(n + 1, dtype=np.bool_)

    t = t0
    step = 0
    boundary = t0 + dt
    rate = gamma * n
    t_spont = t + gen.exponential(1.0 / rate)
    status = 0

    while step < n_steps:
        # drop stale entries at the head
        while size > 0 and qs[head] != stamp[qf[head]]:
            head = (head + 1) % cap
            size -= 1
        h = qf[head]
        gap = q[h] - X - p_lo
        t_hit = t + gap / I0 if gap > 0 else t
        if capped and last_forced[h] == step:
            t_hit = max(t_hit, boundary)
        t_ev = min(t_hit, t_spont)
        if t_ev >= boundary:
            X += I0 * (boundary - t)
            t = boundary
            Xb[step + 1] = X
            step += 1
            boundary = t0 + (step + 1) * dt
            if step > burn_steps and snap_every > 0 and step % snap_every == 0:
                for i in range(n):
                    p = q[i] - X
                    if p < p_lo:
                        p = p_lo
                    b = int((p - hist_edges_lo) / hist_width * n_bins)
                    if b >= n_bins:
                        b = n_bins - 1
                    if b < 0:
                        b = 0
                    hist[b] += 1
                n_snaps += 1
            continue
        X += I0 * (t_ev - t)
        t = t_ev

        npend = 0
        if t_spont <= t_hit:
            r = min(int(gen.random() * n), n - 1)
            p = q[r] - X
            if p < p_lo:
                p = p_lo
            stamp[r] += 1  # its queue entry is now stale
            pend_f[0] = r
            pend_d[0] = p_hi - p
            pend_forced[0] = False
            npend = 1
            t_spont = t + gen.exponential(1.0 / rate)
            csize = 0
            root_forced = False
        else:
            head = (head + 1) % cap
            size -= 1
            p = q[h] - X
            if p > p_lo:
                p = p_lo  # drift hit: exactly at the boundary up to rounding
            pend_f[0] = h
            pend_d[0] = p_hi - p
            pend_forced[0] = True
            npend = 1
            csize = 1
            root_forced = True
            n_forced[step] += 1
            if capped:
                last_forced[h] = step
        if not root_forced:
            n_spont[step] += 1

        kids = 0
        pos = 0
        while pos < npend:
            r = pend_f[pos % (n + 1)]
            d = pend_d[pos % (n + 1)]
            isf = pend_forced[pos % (n + 1)]
            pos += 1
            X += J * d / n
            q[r] = p_hi + X
            if size == cap:
                head, size = _compact(qf, qs, stamp, head, size, cap)
            tail = (head + size) % cap
            qf[tail] = r
            qs[tail] = stamp[r]
            size += 1
            k = 0
            while True:
                while size > 0 and qs[head] != stamp[qf[head]]:
                    head = (head + 1) % cap
                    size -= 1
                f = qf[head]
                pf = q[f] - X
                if pf >= p_lo:
                    break
                if capped and last_forced[f] == step:
                    break
                head = (head + 1) % cap
                size -= 1
                slot = npend % (n + 1)
                pend_f[slot] = f
                pend_d[slot] = p_hi - pf
                pend_forced[slot] = True
                npend += 1
                k += 1
                csize += 1
                n_forced[step] += 1
                if capped:
                    last_forced[f] = step
                if csize > runaway_limit:
                    status = 1
                    break
            if status:
                break
            if isf:
                kids += k
        if status:
            break
        if csize > 0:
            if n_casc == c_t.shape[0]:
                c_t = _grow_f(c_t)
                c_size = _grow_f(c_size)
                c_kids = _grow_f(c_kids)
                c_rootf = _grow_f(c_rootf)
            c_t[n_casc] = t
            c_size[n_casc] = csize
            c_kids[n_casc] = kids
            c_rootf[n_casc] = root_forced
            n_casc += 1

    return (status, X, t, Xb[: step + 1], n_spont[:step], n_forced[:step], hist, n_snaps,
            c_t[:n_casc], c_size[:n_casc], c_kids[:n_casc], c_rootf[:n_casc])


@numba.njit(cache=True)
def _sift_up(heap, pos, key, i):
    f = heap[i]
    k = key[f]
    while i > 0:
        parent = (i - 1) >> 1
        g = heap[parent]
        if key[g] <= k:
            break
        heap[i] = g
        pos[g] = i
        i = parent
    heap[i] = f
    pos[f] = i


@numba.njit(cache=True)
def _sift_down(heap, pos, key, i, size):
    f = heap[i]
    k = key[f]
    while True:
        c = 2 * i + 1
        if c >= size:
            break
        if c + 1 < size and key[heap[c + 1]] < key[heap[c]]:
            c += 1
        g = heap[c]
        if key[g] >= k:
            break
        heap[i] = g
        pos[g] = i
        i = c
    heap[i] = f
    pos[f] = i


@numba.njit(cache=True)
def _heap_remove(heap, pos, key, f, size):
    i = pos[f]
    size -= 1
    pos[f] = -1
    if i != size:
        g = heap[size]
        heap[i] = g
        pos[g] = i
        _sift_down(heap, pos, key, i, size)
        _sift_up(heap, pos, key, pos[g])
    return size


@numba.njit(cache=True)
def _heap_push(heap, pos, key, f, size):
    heap[size] = f
    pos[f] = size
    _sift_up(heap, pos, key, size)
    return size + 1


@numba.njit(cache=True)
def _engine_random(q, X, t0, n_steps, dt, p_lo, p_hi, gamma, J, I0, gen, capped, runaway_limit,
                   burn_steps, snap_every, hist_edges_lo, hist_width, n_bins, K):
    """Random-exposure coupling: a repricing by ``d`` lowers ``K`` random other prices by ``J d / K``.

    ``q_i - X`` is the price of firm ``i``; ``X`` carries the common drift ``I0``
    and kicks lower individual ``q_i``. ``Y`` tracks the price index (drift plus
    ``J d / n`` per repricing) from which inflation is measured.
    """
    n = q.shape[0]
    heap = np.empty(n, dtype=np.int64)
    pos = np.full(n, -1, dtype=np.int64)
    size = 0
    for i in range(n):
        size = _heap_push(heap, pos, q, i, size)
    last_forced = np.full(n, -1, dtype=np.int64)

    Y = 0.0
    Yb = np.empty(n_steps + 1)
    Yb[0] = Y
    n_spont = np.zeros(n_steps, dtype=np.int64)
    n_forced = np.zeros(n_steps, dtype=np.int64)
    hist = np.zeros(n_bins, dtype=np.int64)
    n_snaps = 0

    c_cap = 1024
    c_t = np.empty(c_cap)
    c_size = np.empty(c_cap, dtype=np.int64)
    c_kids = np.empty(c_cap, dtype=np.int64)
    c_rootf = np.empty(c_cap, dtype=np.bool_)
    n_casc = 0

    pend_f = np.empty(n + 1, dtype=np.int64)
    pend_d = np.empty(n + 1)
    pend_forced = np.empty(n + 1, dtype=np.bool_)

    t = t0
    step = 0
    boundary = t0 + dt
    rate = gamma * n
    t_spont = t + gen.exponential(1.0 / rate)
    status = 0
    inf = np.inf

    while step < n_steps:
        t_hit = inf
        h = -1
        if size > 0:
            h = heap[0]
            gap = q[h] - X - p_lo
            t_hit = t + gap / I0 if gap > 0 else t
            if capped and last_forced[h] == step:
                t_hit = max(t_hit, boundary)
        t_ev = min(t_hit, t_spont)
        if t_ev >= boundary:
            X += I0 * (boundary - t)
            Y += I0 * (boundary - t)
            t = boundary
            Yb[step + 1] = Y
            step += 1
            boundary = t0 + (step + 1) * dt
            if step > burn_steps and snap_every > 0 and step % snap_every == 0:
                for i in range(n):
                    p = q[i] - X
                    if p < p_lo:
                        p = p_lo
                    b = int((p - hist_edges_lo) / hist_width * n_bins)
                    if b >= n_bins:
                        b = n_bins - 1
                    if b < 0:
                        b = 0
                    hist[b] += 1
                n_snaps += 1
            continue
        X += I0 * (t_ev - t)
        Y += I0 * (t_ev - t)
        t = t_ev

        if t_spont <= t_hit:
            r = min(int(gen.random() * n), n - 1)
            p = q[r] - X
            if p < p_lo:
                p = p_lo
            size = _heap_remove(heap, pos, q, r, size)
            pend_f[0] = r
            pend_d[0] = p_hi - p
            pend_forced[0] = False
            t_spont = t + gen.exponential(1.0 / rate)
            csize = 0
            root_forced = False
            n_spont[step] += 1
        else:
            size = _heap_remove(heap, pos, q, h, size)
            p = q[h] - X
            if p > p_lo:
                p = p_lo
            pend_f[0] = h
            pend_d[0] = p_hi - p
            pend_forced[0] = True
            csize = 1
            root_forced = True
            n_forced[step] += 1
            if capped:
                last_forced[h] = step
        npend = 1

        kids = 0
        pos_p = 0
        while pos_p < npend:
            slot = pos_p % (n + 1)
            r = pend_f[slot]
            d = pend_d[slot]
            isf = pend_forced[slot]
            pos_p += 1
            Y += J * d / n
            q[r] = p_hi + X
            size = _heap_push(heap, pos, q, r, size)
            kick = J * d / K
            k = 0
            for _ in range(K):
                f = min(int(gen.random() * n), n - 1)
                while f == r:
                    f = min(int(gen.random() * n), n - 1)
                if pos[f] < 0:
                    continue  # already repricing in this cascade
                q[f] -= kick
                if q[f] - X < p_lo and not (capped and last_forced[f] == step):
                    size = _heap_remove(heap, pos, q, f, size)
                    ns = npend % (n + 1)
                    pend_f[ns] = f
                    pend_d[ns] = p_hi - (q[f] - X)
                    pend_forced[ns] = True
                    npend += 1
                    k += 1
                    csize += 1
                    n_forced[step] += 1
                    if capped:
                        last_forced[f] = step
                    if csize > runaway_limit:
                        status = 1
                        break
                else:
                    _sift_up(heap, pos, q, pos[f])
            if status:
                break
            if isf:
                kids += k
        if status:
            break
        if csize > 0:
            if n_casc == c_t.shape[0]:
                c_t = _grow_f(c_t)
                c_size = _grow_f(c_size)
                c_kids = _grow_f(c_kids)
                c_rootf = _grow_f(c_rootf)
            c_t[n_casc] = t
            c_size[n_casc] = csize
            c_kids[n_casc] = kids
            c_rootf[n_casc] = root_forced
            n_casc += 1

    return (status, X, t, Yb[: step + 1], n_spont[:step], n_forced[:step], hist, n_snaps,
            c_t[:n_casc], c_size[:n_casc], c_kids[:n_casc], c_rootf[:n_casc])


@dataclass
class Cascades:
    time: np.ndarray
    size: np.ndarray  # forced repricings
    children: np.ndarray  # firms tipped directly by forced repricers
    root_forced: np.ndarray

    def branching_ratio(self) -> float:
        """Mean number of firms tipped per forced repricer."""
        total = self.size.sum()
        return float(self.children.sum() / total) if total else float("nan")

    def select(self, mask) -> Cascades:
        return Cascades(self.time[mask], self.size[mask], self.children[mask], self.root_forced[mask])


@dataclass
class InflationRun:
    cfg: RepricingConfig
    inflation: TimeSeries  # index increase over each step / dt, t = 0 .. t_max - dt
    spontaneous: np.ndarray  # repricings per step
    forced: np.ndarray
    cascades: Cascades
    hist_edges: np.ndarray
    hist_counts: np.ndarray  # time-accumulated price histogram after burn-in
    state: RepricingState
    burn_in: float

    def _after(self) -> np.ndarray:
        return self.inflation.times >= self.burn_in

    def mean_inflation(self) -> float:
        return float(self.inflation.component(0)[self._after()].mean())

    def repricing_flux(self) -> tuple[float, float]:
        """Repricings per firm per unit time after burn-in, with a batch-means standard error."""
        from critlab.analysis import batch_means_se

        mask = self._after()
        per_step = (self.spontaneous + self.forced)[mask] / (self.cfg.n_firms * self.cfg.dt)
        return float(per_step.mean()), batch_means_se(per_step, min(100, max(2, len(per_step) // 10)))

    def stationary_cascades(self) -> Cascades:
        return self.cascades.select(self.cascades.time >= self.burn_in)

    def price_cdf(self):
        c = np.concatenate(([0.0], np.cumsum(self.hist_counts)))
        c /= c[-1]
        return self.hist_edges, c

    def ks_to_stationary(self) -> float:
        _, I = stationary_density(self.cfg)
        edges, emp = self.price_cdf()
        return float(np.max(np.abs(emp - stationary_cdf(self.cfg, I)(edges))))

    def write_csv(self, outdir: str | Path) -> None:
        outdir = Path(outdir)
        ts = self.inflation
        write_columns(outdir / "inflation.csv", ["t", "I"], [ts.times, ts.component(0)])
        write_columns(outdir / "cascades.csv", ["t", "size"], [self.cascades.time, self.cascades.size])
        e = self.hist_edges
        write_columns(outdir / "price_hist.csv", ["p_lo", "p_hi", "count"], [e[:-1], e[1:], self.hist_counts])


def _run(cfg: RepricingConfig, state: RepricingState, n_steps: int, rng: RngStream, capped: bool,
         burn_in: float, n_bins: int, snap_every: int) -> InflationRun:
    p = state.prices
    if p.shape != (cfg.n_firms,) or np.any(p < cfg.p_minus) or np.any(p > cfg.p_plus):
        raise ValueError("state prices must lie in the band, one per firm")
    q = p.copy()  # reference X = 0
    runaway = 2 * cfg.n_firms if not capped else 10 * cfg.n_firms
    burn_steps = int(round(burn_in / cfg.dt))
    args = (q, 0.0, state.time, n_steps, cfg.dt, cfg.p_minus, cfg.p_plus, cfg.gamma, cfg.J, cfg.I0,
            rng.generator(), capped, runaway, burn_steps, snap_every, cfg.p_minus, cfg.width, n_bins)
    if cfg.coupling == "global":
        out = _engine(*args)
    else:
        out = _engine_random(*args, cfg.exposure)
    status, X, t, Xb, ns, nf, hist, _, ct, cs, ck, cr = out
    if status:
        raise DivergenceError("runaway cascade: more than twice the population repriced at once")
    I = np.diff(Xb) / cfg.dt
    prices = np.clip(q - X, cfg.p_minus, cfg.p_plus)
    new = RepricingState(prices, float(I[-1]) if len(I) else state.inflation, float(t))
    edges = cfg.p_minus + cfg.width * np.arange(n_bins + 1) / n_bins
    return InflationRun(cfg, TimeSeries(cfg.dt, I, labels=["I"]), ns, nf, Cascades(ct, cs, ck, cr),
                        edges, hist, new, state.time + burn_in)


def run_abm(cfg: RepricingConfig, t_max: float, rng: RngStream, state: RepricingState | None = None,
            burn_in: float = 0.0, n_bins: int = 1000, snapshot_every: float | None = None) -> InflationRun:
    """Agent-based run over ``[0, t_max]``. Requires ``J < 1``.

    Statistics (mean inflation, cascade sample, price histogram) exclude the
    first ``burn_in`` time units.
    """
    if cfg.J >= 1:
        raise NonStationaryError("run_abm needs J < 1; use supercritical_run")
    state = initial_state(cfg, rng.child(0)) if state is None else state
    n_steps = int(round(t_max / cfg.dt))
    snap = max(1, int(round((snapshot_every or cfg.width / cfg.I0 / 50) / cfg.dt)))
    return _run(cfg, state, n_steps, rng.child(1), False, burn_in, n_bins, snap)


def step_abm(cfg: RepricingConfig, state: RepricingState, rng: RngStream):
    """Advance by one ``dt``; returns the new state and the cascades completed in that step."""
    run = _run(cfg, state, 1, rng, cfg.J >= 1, 0.0, 1, 0)
    return run.state, run.cascades


def supercritical_run(cfg: RepricingConfig, t_max: float, rng: RngStream,
                      state: RepricingState | None = None) -> InflationRun:
    """Diagnostic run for ``J >= 1``; each firm is forced to reprice at most once per step."""
    if cfg.J < 1:
        raise ValueError("supercritical_run needs J >= 1")
    state = initial_state(cfg, rng.child(0)) if state is None else state
    n_steps = int(round(t_max / cfg.dt))
    return _run(cfg, state, n_steps, rng.child(1), True, 0.0, 100, 0)


def dominant_period(series: TimeSeries, max_lag: int | None = None) -> float | None:
    """Lag (in time units) of the highest autocorrelation peak after the first zero crossing."""
    from critlab.analysis import autocorrelation

    x = series.component(0)
    max_lag = max_lag or len(x) // 10
    _, acf = autocorrelation(x, max_lag)
    neg = np.flatnonzero(acf < 0)
    if neg.size == 0:
        return None
    start = neg[0]
    k = start + int(np.argmax(acf[start:]))
    if acf[k] <= 0:
        return None
    return float(k * series.dt)
