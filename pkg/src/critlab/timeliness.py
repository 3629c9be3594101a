"""Delay propagation through a task network with time buffers.

    tau_i(n+1) = [max_{j in pred(i)} tau_j(n) - B]+ + eps_i(n+1)

Source nodes (no predecessors) receive ``tau = eps``. Noise for step ``n`` is
read from a Philox counter block keyed by the run's stream and indexed by ``n``,
so any step can be replayed on its own and runs at different ``B`` share their
noise exactly (common random numbers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from critlab.errors import BracketError
from critlab.rng import RngStream
from critlab.series import write_columns

NETWORK_KINDS = ("chain", "ring", "random-regular", "dag-layered", "custom")


@dataclass
class TaskNetwork:
    """Predecessor lists in CSR form: the predecessors of ``i`` are ``indices[indptr[i]:indptr[i+1]]``."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        self.indptr = np.asarray(self.indptr, dtype=np.int64)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.indptr.shape != (self.n + 1,) or self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise ValueError("malformed predecessor arrays")
        if np.any(np.diff(self.indptr) < 0) or np.any((self.indices < 0) | (self.indices >= self.n)):
            raise ValueError("malformed predecessor arrays")
        owner = np.repeat(np.arange(self.n), np.diff(self.indptr))
        if np.any(owner == self.indices):
            raise ValueError("self-loops are not allowed")
        if self.kind not in NETWORK_KINDS:
            raise ValueError(f"unknown network kind {self.kind!r}")

    def predecessors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @property
    def in_degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def sources(self) -> np.ndarray:
        return np.flatnonzero(self.in_degree == 0)

    def edges(self) -> np.ndarray:
        """(src, dst) pairs, src being a predecessor of dst."""
        dst = np.repeat(np.arange(self.n), self.in_degree)
        return np.column_stack((self.indices, dst))

    @classmethod
    def from_edges(cls, n: int, edges, kind: str = "custom") -> TaskNetwork:
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        order = np.lexsort((e[:, 0], e[:, 1]))
        e = e[order]
        counts = np.bincount(e[:, 1], minlength=n)
        indptr = np.concatenate(([0], np.cumsum(counts)))
        return cls(n, indptr, e[:, 0], kind)

    @classmethod
    def from_csv(cls, path: str | Path, n: int | None = None) -> TaskNetwork:
        """Edge list with header ``src,dst``."""
        with open(path) as fh:
            header = fh.readline().strip()
            if header.replace(" ", "") != "src,dst":
                raise ValueError(f"{path}: expected header 'src,dst', got {header!r}")
        e = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
        n = int(e.max()) + 1 if n is None else n
        return cls.from_edges(n, e)

    def to_csv(self, path: str | Path) -> None:
        e = self.edges()
        write_columns(path, ["src", "dst"], [e[:, 0], e[:, 1]])


def chain(length: int) -> TaskNetwork:
    """Node 0 is a source; node i waits for node i-1."""
    edges = [(i - 1, i) for i in range(1, length)]
    return TaskNetwork.from_edges(length, edges, "chain")


def ring(length: int) -> TaskNetwork:
    """Periodic chain: node i waits for node i-1 (mod length). No sources."""
    if length < 2:
        raise ValueError("a ring needs at least two nodes")
    edges = [((i - 1) % length, i) for i in range(length)]
    return TaskNetwork.from_edges(length, edges, "ring")


def random_regular(n: int, k: int, rng: RngStream, max_tries: int = 1000) -> TaskNetwork:
    """Every node has exactly ``k`` distinct predecessors and ``k`` successors.

    Built as the union of ``k`` random permutations; each one is redrawn until it
    has no fixed point and shares no edge with the ones already accepted.
    """
    if not 1 <= k < n:
        raise ValueError("need 1 <= k < n")
    gen = rng.generator()
    ident = np.arange(n)
    perms = []  # perms[r][i] is a predecessor of i
    for _ in range(k):
        for _ in range(max_tries):
            p = gen.permutation(n)
            if np.any(p == ident) or any(np.any(p == q) for q in perms):
                continue
            perms.append(p)
            break
        else:
            raise RuntimeError("could not draw a simple random-regular network")
    edges = np.column_stack((np.array(perms).T.reshape(-1), np.repeat(ident, k)))
    return TaskNetwork.from_edges(n, edges, "random-regular")


def dag_layered(layers: int, width: int, k: int, rng: RngStream) -> TaskNetwork:
    """Layer 0 are sources; each later node waits for ``k`` distinct nodes of the previous layer."""
    if k > width:
        raise ValueError("k cannot exceed the layer width")
    gen = rng.generator()
    edges = []
    for layer in range(1, layers):
        for c in range(width):
            for p in gen.choice(width, size=k, replace=False):
                edges.append(((layer - 1) * width + int(p), layer * width + c))
    return TaskNetwork.from_edges(layers * width, edges, "dag-layered")


@dataclass(frozen=True)
class DelayNoise:
    """Strictly positive task-duration noise: ``mean * E`` with ``E`` a standard exponential."""

    mean: float = 1.0
    kind: str = "exponential"

    def __post_init__(self):
        if not self.mean > 0:
            raise ValueError("noise mean must be positive")
        if self.kind != "exponential":
            raise ValueError("only exponential noise is supported")

    def scaled(self, c: float) -> DelayNoise:
        return DelayNoise(self.mean * c, self.kind)


def _key(rng: RngStream) -> np.ndarray:
    return np.random.SeedSequence(rng.master_seed, spawn_key=(rng.stream_index, 0x7D)).generate_state(2, np.uint64)


def _unit_exp(key, step: int, n: int) -> np.ndarray:
    raw = np.random.Philox(key=key, counter=[0, step, 0, 0]).random_raw(n)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return -np.log1p(-u)


def standard_exponentials(rng: RngStream, step: int, n: int) -> np.ndarray:
    """Unit-mean exponentials for step ``step``, one per node, from a counter-indexed block."""
    return _unit_exp(_key(rng), step, n)


@dataclass
class DelayField:
    tau: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        if np.any(self.tau < 0):
            raise ValueError("delays must be non-negative")


@numba.njit(cache=True)
def _step(indptr, indices, tau, B, eps, out):
    n = tau.shape[0]
    for i in range(n):
        a, b = indptr[i], indptr[i + 1]
        if a == b:
            out[i] = eps[i]
            continue
        m = tau[indices[a]]
        for p in range(a + 1, b):
            v = tau[indices[p]]
            if v > m:
                m = v
        m -= B
        out[i] = (m if m > 0.0 else 0.0) + eps[i]


@numba.njit(cache=True)
def _run(indptr, indices, tau, B, eps_block, mean_out, field_out, offset):
    n_steps = eps_block.shape[0]
    nxt = np.empty_like(tau)
    for s in range(n_steps):
        _step(indptr, indices, tau, B, eps_block[s], nxt)
        tau, nxt = nxt, tau
        mean_out[offset + s] = tau.mean()
        if field_out.shape[0] > 0:
            field_out[offset + s] = tau
    return tau


def step_delays(net: TaskNetwork, field: DelayField, B: float, noise: DelayNoise,
                rng: RngStream) -> DelayField:
    """One synchronous application of the buffered delay map."""
    if B < 0:
        raise ValueError("buffer must be non-negative")
    eps = noise.mean * standard_exponentials(rng, field.iteration, net.n)
    out = np.empty(net.n)
    _step(net.indptr, net.indices, field.tau, float(B), eps, out)
    return DelayField(out, field.iteration + 1)


@dataclass
class DelayRun:
    B: float
    mean_delay: np.ndarray  # spatial mean, index = iteration (0 .. n_steps)
    final: DelayField
    field: np.ndarray | None = None  # (n_steps + 1, n) when recorded

    def drift(self) -> float:
        """Slope of the spatial-mean delay over the second half of the run."""
        m = self.mean_delay
        h = len(m) // 2
        t = np.arange(h, len(m), dtype=float)
        return float(np.polyfit(t, m[h:], 1)[0])

    def write_csv(self, path: str | Path) -> None:
        if self.field is None:
            raise ValueError("field was not recorded")
        steps, n = self.field.shape
        write_columns(path, ["n", "node", "tau"],
                      [np.repeat(np.arange(steps), n), np.tile(np.arange(n), steps), self.field.reshape(-1)])


_CHUNK_CELLS = 1 << 22


def simulate_delays(net: TaskNetwork, B: float, noise: DelayNoise, n_steps: int, rng: RngStream,
                    tau0=None, record: bool = False) -> DelayRun:
    """Iterate the delay map ``n_steps`` times from ``tau0`` (zeros by default).

    Equivalent to ``n_steps`` calls of :func:`step_delays`.
    """
    if B < 0:
        raise ValueError("buffer must be non-negative")
    tau = np.zeros(net.n) if tau0 is None else np.array(tau0, dtype=float)
    if tau.shape != (net.n,) or np.any(tau < 0):
        raise ValueError("tau0 must be a non-negative vector of length n")
    mean = np.empty(n_steps + 1)
    mean[0] = tau.mean()
    field = np.empty((n_steps + 1, net.n)) if record else np.empty((0, net.n))
    if record:
        field[0] = tau
    chunk = max(1, _CHUNK_CELLS // max(net.n, 1))
    key = _key(rng)
    for start in range(0, n_steps, chunk):
        stop = min(n_steps, start + chunk)
        block = np.empty((stop - start, net.n))
        for s in range(start, stop):
            block[s - start] = _unit_exp(key, s, net.n)
        block *= noise.mean
        out_field = field[1:] if record else field
        tau = _run(net.indptr, net.indices, tau, float(B), block, mean[1:], out_field, start)
    return DelayRun(float(B), mean, DelayField(tau, n_steps), field if record else None)


def drift_threshold(noise: DelayNoise) -> float:
    return 0.01 * noise.mean


def is_supercritical(net, B, noise, n_steps, rng, threshold=None) -> bool:
    thr = drift_threshold(noise) if threshold is None else threshold
    return simulate_delays(net, B, noise, n_steps, rng).drift() > thr


def find_critical_buffer(net: TaskNetwork, noise: DelayNoise, B_range: tuple[float, float], rng: RngStream,
                         n_steps: int = 10_000, tol: float | None = None,
                         threshold: float | None = None) -> float:
    """Bisection on the drift statistic; returns B_c to within ``tol`` (default 0.01 m_eps).

    Every probe reuses the same noise (same ``rng``), so the probes differ only in B.
    """
    lo, hi = map(float, B_range)
    tol = 0.01 * noise.mean if tol is None else tol
    if not is_supercritical(net, lo, noise, n_steps, rng, threshold):
        raise BracketError(f"delays do not drift at B={lo:g}: range does not bracket B_c")
    if is_supercritical(net, hi, noise, n_steps, rng, threshold):
        raise BracketError(f"delays still drift at B={hi:g}: range does not bracket B_c")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if is_supercritical(net, mid, noise, n_steps, rng, threshold):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def scan_critical_buffer(net: TaskNetwork, noise: DelayNoise, grid, rng: RngStream,
                         n_steps: int = 10_000, threshold: float | None = None) -> float:
    """Smallest grid value above the last drifting one, scanning upward."""
    grid = np.sort(np.asarray(grid, dtype=float))
    drifting = [is_supercritical(net, b, noise, n_steps, rng, threshold) for b in grid]
    if not drifting[0] or drifting[-1]:
        raise BracketError("grid does not bracket B_c")
    last = max(i for i, d in enumerate(drifting) if d)
    return float(0.5 * (grid[last] + grid[last + 1]))


def max_plus_growth_rate(net: TaskNetwork, noise: DelayNoise, n_steps: int, rng: RngStream) -> float:
    """Asymptotic growth rate of delays without buffer (B = 0), per step.

    Stationarity requires the buffer to absorb this growth, so it estimates B_c
    independently of the drift statistic.
    """
    run = simulate_delays(net, 0.0, noise, n_steps, rng)
    h = n_steps // 2
    return float((run.mean_delay[-1] - run.mean_delay[h]) / (n_steps - h))


@dataclass
class DelayEpisode:
    size: float  # summed excess delay above the threshold
    duration: int  # steps spanned
    cells: int  # (node, step) cells involved
    start: int


@numba.njit(cache=True)
def _find(parent, a):
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


@numba.njit(cache=True)
def _episodes(indptr, indices, field, thr, B):
    steps, n = field.shape
    ncell = steps * n
    parent = np.arange(ncell)
    hot = field > thr
    for t in range(1, steps):
        for i in range(n):
            if not hot[t, i]:
                continue
            c = t * n + i
            if hot[t - 1, i]:
                ra, rb = _find(parent, c), _find(parent, c - n)
                if ra != rb:
                    parent[ra] = rb
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                # the upstream delay only reaches i if it overflowed the buffer
                if hot[t - 1, j] and field[t - 1, j] > B:
                    ra, rb = _find(parent, c), _find(parent, (t - 1) * n + j)
                    if ra != rb:
                        parent[ra] = rb
    size = np.zeros(ncell)
    first = np.full(ncell, steps, dtype=np.int64)
    last = np.full(ncell, -1, dtype=np.int64)
    count = np.zeros(ncell, dtype=np.int64)
    for t in range(steps):
        for i in range(n):
            if hot[t, i]:
                r = _find(parent, t * n + i)
                size[r] += field[t, i] - thr
                count[r] += 1
                if t < first[r]:
                    first[r] = t
                if t > last[r]:
                    last[r] = t
    roots = np.flatnonzero(count)
    return size[roots], last[roots] - first[roots] + 1, count[roots], first[roots]


@dataclass
class EpisodeSet:
    episodes: list[DelayEpisode]
    threshold: float
    run: DelayRun

    @property
    def sizes(self) -> np.ndarray:
        return np.array([e.size for e in self.episodes])

    def to_csv(self, path: str | Path) -> None:
        e = self.episodes
        write_columns(path, ["start", "duration", "cells", "size"],
                      [np.array([x.start for x in e], dtype=np.int64), np.array([x.duration for x in e], dtype=np.int64),
                       np.array([x.cells for x in e], dtype=np.int64), self.sizes])


def delay_avalanches(net: TaskNetwork, B: float, noise: DelayNoise, t_max: int, rng: RngStream,
                     q: float = 3.0, burn_in: float = 0.1, calibration: float = 0.1) -> EpisodeSet:
    """Threshold episodes of excess delay.

    A cell ``(step, node)`` is hot when its delay exceeds ``q`` times the median
    delay of the calibration window (the fraction ``calibration`` of the run
    following ``burn_in``). A hot cell is linked to the same node one step
    earlier, and to a predecessor one step earlier when that predecessor's delay
    exceeded the buffer (so it was passed on). Each connected component of hot
    cells in the post-burn-in record is one episode.
    """
    run = simulate_delays(net, B, noise, t_max, rng, record=True)
    b0 = int(burn_in * t_max) + 1
    b1 = max(b0 + 1, b0 + int(calibration * t_max))
    thr = q * float(np.median(run.field[b0:b1]))
    size, dur, cells, first = _episodes(net.indptr, net.indices, run.field[b0:], thr, float(B))
    order = np.argsort(first, kind="stable")
    eps = [DelayEpisode(float(size[i]), int(dur[i]), int(cells[i]), int(first[i]) + b0) for i in order]
    return EpisodeSet(eps, thr, run)
