"""CES production networks: price equilibrium and its M-matrix feasibility.

With ``zeta = 1/(1+q)`` and ``u_i = p_i**zeta`` the zero-profit price equations

    (z_i p_i)^zeta - sum_j a_ij^(q zeta) (J_ij p_j)^zeta = a_i0^(q zeta) (J_i0 w_i)^zeta

are linear, ``M u = b`` with ``M = diag(z^zeta) - a^(q zeta) * J^zeta``. A
positive solution for every positive ``b`` exists iff ``M`` is an M-matrix.
``q = 0`` is the Leontief limit (``M = diag(z) - J``); ``q -> inf`` is the
Cobb-Douglas limit, handled separately in log-prices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize

from critlab.errors import BracketError, InfeasibleError
from critlab.rng import RngStream
from critlab.series import TimeSeries
from critlab.spectrum import M_MATRIX_TOL, SpectrumReport

_SHARE_TOL = 1e-9


@dataclass
class FirmNetwork:
    """``a``/``J`` are n x n (firm inputs); ``a0``/``J0`` are the labour column."""

    n: int
    q: float
    z: np.ndarray
    w: np.ndarray
    a: np.ndarray
    a0: np.ndarray
    J: np.ndarray
    J0: np.ndarray

    def __post_init__(self):
        for name in ("z", "w", "a0", "J0"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        self.a = np.asarray(self.a, dtype=float).reshape(self.n, self.n)
        self.J = np.asarray(self.J, dtype=float).reshape(self.n, self.n)
        if any(len(getattr(self, k)) != self.n for k in ("z", "w", "a0", "J0")):
            raise ValueError("z, w, a0, J0 must have length n")
        if not self.q >= 0:
            raise ValueError("q must be non-negative")
        if np.any(self.z <= 0) or np.any(self.w <= 0):
            raise ValueError("productivities and wages must be positive")
        if np.any(self.a < 0) or np.any(self.a0 <= 0):
            raise ValueError("shares must be non-negative, labour share positive")
        if np.any(self.J < 0) or np.any(self.J0 <= 0):
            raise ValueError("technology coefficients must be non-negative, labour coefficient positive")
        if np.any(np.abs(self.a.sum(axis=1) + self.a0 - 1.0) > _SHARE_TOL):
            raise ValueError("shares (including labour) must sum to 1 in every row")

    @property
    def zeta(self) -> float:
        return 1.0 / (1.0 + self.q)

    def with_z(self, z) -> FirmNetwork:
        return replace(self, z=np.asarray(z, dtype=float).copy())

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "q": self.q, "z": self.z.tolist(), "w": self.w.tolist(),
                           "a": self.a.tolist(), "a0": self.a0.tolist(), "J": self.J.tolist(),
                           "J0": self.J0.tolist()})

    @classmethod
    def from_json(cls, text: str) -> FirmNetwork:
        d = json.loads(text)
        keys = {"n", "q", "z", "w", "a", "a0", "J", "J0"}
        if set(d) != keys:
            raise ValueError(f"expected keys {sorted(keys)}, got {sorted(d)}")
        return cls(int(d["n"]), float(d["q"]), d["z"], d["w"], d["a"], d["a0"], d["J"], d["J0"])


def build_m_matrix(net: FirmNetwork) -> np.ndarray:
    zeta = net.zeta
    return np.diag(net.z ** zeta) - net.a ** (net.q * zeta) * net.J ** zeta


def _rhs(net: FirmNetwork) -> np.ndarray:
    zeta = net.zeta
    return net.a0 ** (net.q * zeta) * (net.J0 * net.w) ** zeta


@dataclass
class FeasibilityReport(SpectrumReport):
    prices: np.ndarray | None = None

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["prices"] = None if self.prices is None else self.prices.tolist()
        return d


def solve_prices(net: FirmNetwork) -> np.ndarray:
    """Equilibrium prices from the linear system in ``u = p**zeta``."""
    M = build_m_matrix(net)
    try:
        u = np.linalg.solve(M, _rhs(net))
    except np.linalg.LinAlgError:
        raise InfeasibleError("M is singular: no equilibrium prices") from None
    if not np.all(np.isfinite(u)) or np.any(u <= 0):
        raise InfeasibleError("equilibrium would need non-positive prices")
    return u ** (1.0 / net.zeta)


def feasibility(net: FirmNetwork) -> FeasibilityReport:
    """Spectrum of M, M-matrix verdict and, when feasible, the positive prices."""
    spec = SpectrumReport.of(build_m_matrix(net))
    prices = None
    if spec.is_m_matrix:
        try:
            prices = solve_prices(net)
        except InfeasibleError:
            prices = None  # singular at the boundary
    return FeasibilityReport(spec.eigenvalues, spec.min_real_part, spec.is_m_matrix, prices)


def min_real_part(net: FirmNetwork) -> float:
    return float(np.linalg.eigvals(build_m_matrix(net)).real.min())


@dataclass
class CobbDouglasReport(SpectrumReport):
    log_prices: np.ndarray | None = None

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["log_prices"] = None if self.log_prices is None else self.log_prices.tolist()
        return d


def cobb_douglas_feasibility(net: FirmNetwork) -> CobbDouglasReport:
    """The ``q -> inf`` limit.

    To first order in ``zeta`` the price equations become log-linear,
    ``(I - A) ln p = a0 ln(J0 w / a0) + sum_j a_ij ln(J_ij / a_ij) - ln z``, the
    log of the unit cost of ``z prod_j (Q_j / J_j)^a_j``. Since every row
    of ``A`` sums to ``1 - a0 < 1``, ``I - A`` is always an M-matrix.
    """
    A = np.where(net.J > 0, net.a, 0.0)
    M = np.eye(net.n) - A
    spec = SpectrumReport.of(M)
    pos = A > 0
    logJa = np.where(pos, np.log(np.where(pos, net.J, 1.0) / np.where(pos, A, 1.0)), 0.0)
    rhs = net.a0 * np.log(net.J0 * net.w / net.a0) + (A * logJa).sum(axis=1) - np.log(net.z)
    logp = np.linalg.solve(M, rhs)
    return CobbDouglasReport(spec.eigenvalues, spec.min_real_part, spec.is_m_matrix, logp)


def random_firm_network(n: int, q: float, rng: RngStream, k: int = 3, z: float = 1.0,
                        weight: float = 0.5, labour_share: float = 0.3) -> FirmNetwork:
    """Each firm buys from ``k`` distinct other firms.

    Technology coefficients are ``U(0, weight)``; shares split ``1 - labour_share``
    in proportion to the technology coefficients. Unit wages and labour
    coefficients.
    """
    gen = rng.generator()
    J = np.zeros((n, n))
    for i in range(n):
        others = np.delete(np.arange(n), i)
        sup = gen.choice(others, size=min(k, n - 1), replace=False)
        J[i, sup] = gen.uniform(0.0, weight, size=len(sup))
    tot = J.sum(axis=1, keepdims=True)
    a = np.where(tot > 0, (1.0 - labour_share) * J / np.where(tot > 0, tot, 1.0), 0.0)
    a0 = 1.0 - a.sum(axis=1)
    return FirmNetwork(n, q, np.full(n, z), np.ones(n), a, a0, J, np.ones(n))


def critical_productivity(net: FirmNetwork, i: int, z_range: tuple[float, float], xtol: float = 1e-12) -> float:
    """Productivity of firm ``i`` at which ``min_real_part`` crosses zero (Brent's method)."""

    def f(zi):
        z = net.z.copy()
        z[i] = zi
        return min_real_part(net.with_z(z))

    lo, hi = z_range
    if f(lo) * f(hi) > 0:
        raise BracketError("productivity range does not bracket the feasibility boundary")
    return float(optimize.brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps))


def markup_experiment(net: FirmNetwork, phi) -> FeasibilityReport:
    """Feasibility with profit shares ``phi``: Leontief productivities become ``z (1 - phi)``."""
    if net.q != 0:
        raise ValueError("the markup experiment is defined for q = 0")
    phi = np.broadcast_to(np.asarray(phi, dtype=float), (net.n,))
    if np.any(phi < 0) or np.any(phi >= 1):
        raise ValueError("profit shares must lie in [0, 1)")
    return feasibility(net.with_z(net.z * (1.0 - phi)))


def critical_markup(net: FirmNetwork, tol: float = 1e-10) -> float:
    """Uniform profit share at which the network stops being feasible (bisection)."""
    if not markup_experiment(net, 0.0).is_m_matrix:
        raise BracketError("network is infeasible without markups")
    lo, hi = 0.0, 1.0 - 1e-12
    if markup_experiment(net, hi).is_m_matrix:
        raise BracketError("network stays feasible for every markup")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if markup_experiment(net, mid).is_m_matrix:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class EntrantSpec:
    """How an entering firm links to the incumbents.

    The entrant buys from ``n_suppliers`` firms and sells to ``n_customers`` firms,
    all with technology coefficients ``U(0, weight)``. Productivity is
    ``z_mean * (1 + z_spread * U(-1, 1))``. ``preferential`` picks partners with
    probability proportional to 1 + their current degree instead of uniformly.
    Customers fund the new input share ``customer_share`` by scaling their
    existing shares down, so every row still sums to one.
    """

    z_mean: float = 1.0
    z_spread: float = 0.0
    n_suppliers: int = 3
    n_customers: int = 3
    weight: float = 0.5
    labour_share: float = 0.3
    customer_share: float = 0.05
    preferential: bool = False


def _pick(gen, n, k, degree, preferential):
    k = min(k, n)
    if k == 0:
        return np.empty(0, dtype=np.int64)
    if preferential:
        p = 1.0 + degree
        return gen.choice(n, size=k, replace=False, p=p / p.sum())
    return gen.choice(n, size=k, replace=False)


def add_entrant(net: FirmNetwork, spec: EntrantSpec, gen: np.random.Generator) -> FirmNetwork:
    n = net.n
    degree = (net.J > 0).sum(axis=0) + (net.J > 0).sum(axis=1)
    sup = _pick(gen, n, spec.n_suppliers, degree, spec.preferential)
    cus = _pick(gen, n, spec.n_customers, degree, spec.preferential)
    J = np.zeros((n + 1, n + 1))
    J[:n, :n] = net.J
    a = np.zeros((n + 1, n + 1))
    a[:n, :n] = net.a
    a0 = np.append(net.a0, 0.0)
    J[n, sup] = gen.uniform(0.0, spec.weight, size=len(sup))
    J[cus, n] = gen.uniform(0.0, spec.weight, size=len(cus))
    if len(sup):
        a[n, sup] = (1.0 - spec.labour_share) * J[n, sup] / J[n, sup].sum()
    a0[n] = 1.0 - a[n].sum()
    if len(cus):
        s = spec.customer_share
        a[cus, :n] *= 1.0 - s
        a0[cus] *= 1.0 - s
        a[cus, n] = s
    z_new = spec.z_mean * (1.0 + spec.z_spread * gen.uniform(-1.0, 1.0))
    return FirmNetwork(n + 1, net.q, np.append(net.z, z_new), np.append(net.w, 1.0), a, a0, J,
                       np.append(net.J0, 1.0))


@dataclass
class EntryRun:
    min_real_part: TimeSeries  # index 0 is the starting network
    network: FirmNetwork

    def crossing(self) -> int | None:
        """Number of entries after which the network first became infeasible."""
        v = self.min_real_part.component(0)
        idx = np.flatnonzero(v < -M_MATRIX_TOL)
        return int(idx[0]) if idx.size else None


def firm_entry_experiment(net: FirmNetwork, spec: EntrantSpec, n_entries: int, rng: RngStream) -> EntryRun:
    """Add firms one at a time, recording ``min_real_part`` of the whole network after each entry."""
    if not feasibility(net).is_m_matrix:
        raise InfeasibleError("starting network is not feasible")
    gen = rng.generator()
    values = [min_real_part(net)]
    for _ in range(n_entries):
        net = add_entrant(net, spec, gen)
        values.append(min_real_part(net))
    return EntryRun(TimeSeries(1.0, np.array(values), labels=["min_real_part"]), net)
