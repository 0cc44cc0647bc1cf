"""Saturation throughput model for R-DCF.

Populations come in three shapes: homogeneous (every station draws rates
from the same distribution), fixed-rate groups (station sizes per rate,
each station pinned to one rate), and general (one distribution per
station). The first two reduce to the third and are solved with their own
closed forms.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .phy_timing import MacTiming, RateSet, BackoffParams, check_mode


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class RateDistribution:
    probs: tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("rate distribution must be a non-empty vector")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", tuple(float(x) for x in p))

    @classmethod
    def normalized(cls, weights: Sequence[float]) -> "RateDistribution":
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be non-negative with positive sum")
        return cls(tuple(w / w.sum()))

    @classmethod
    def one_hot(cls, m: int, M: int) -> "RateDistribution":
        check_mode(m, M)
        p = np.zeros(M)
        p[m - 1] = 1.0
        return cls(tuple(p))

    @property
    def M(self) -> int:
        return len(self.probs)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs)


class DistributionKind(str, enum.Enum):
    EQUAL = "equal"
    PROPORTIONAL = "proportional"
    INVERSE = "inverse"


def canonical_distribution(kind: DistributionKind | str, rate_set: RateSet) -> RateDistribution:
    """Equal, rate-proportional or inversely rate-proportional distribution."""
    kind = DistributionKind(kind)
    rates = rate_set.as_array()
    if kind is DistributionKind.EQUAL:
        w = np.ones_like(rates)
    elif kind is DistributionKind.PROPORTIONAL:
        w = rates
    else:
        w = 1.0 / rates
    return RateDistribution.normalized(w)


@dataclass(frozen=True)
class Homogeneous:
    n_stations: int
    dist: RateDistribution

    def __post_init__(self):
        if self.n_stations < 1:
            raise ValueError("need at least one station")

    @property
    def N(self) -> int:
        return self.n_stations

    def to_general(self) -> "General":
        return General((self.dist,) * self.n_stations)


@dataclass(frozen=True)
class FixedRateGroups:
    group_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.group_sizes)
        if any(n < 0 for n in sizes):
            raise ValueError("group sizes must be non-negative")
        if sum(sizes) < 1:
            raise ValueError("need at least one station")
        object.__setattr__(self, "group_sizes", sizes)

    @property
    def N(self) -> int:
        return sum(self.group_sizes)

    @property
    def M(self) -> int:
        return len(self.group_sizes)

    def to_general(self) -> "General":
        rows = []
        for m, n in enumerate(self.group_sizes, start=1):
            rows.extend([RateDistribution.one_hot(m, self.M)] * n)
        return General(tuple(rows))


@dataclass(frozen=True)
class General:
    per_station_dists: tuple[RateDistribution, ...]

    def __post_init__(self):
        rows = tuple(self.per_station_dists)
        if not rows:
            raise ValueError("need at least one station")
        if len({d.M for d in rows}) != 1:
            raise ValueError("all stations must share the same rate set size")
        object.__setattr__(self, "per_station_dists", rows)

    @property
    def N(self) -> int:
        return len(self.per_station_dists)

    def matrix(self) -> np.ndarray:
        return np.array([d.probs for d in self.per_station_dists])


Population = Union[Homogeneous, FixedRateGroups, General]


def population_M(pop: Population) -> int:
    if isinstance(pop, Homogeneous):
        return pop.dist.M
    if isinstance(pop, FixedRateGroups):
        return pop.M
    return pop.per_station_dists[0].M


@dataclass
class FixedPointSolution:
    """Zero-backoff-counter and contention-failure probabilities.

    One entry per station (general), per rate group (fixed-rate), or a single
    entry shared by every station (homogeneous).
    """

    tau: np.ndarray
    f: np.ndarray
    iterations: int
    residual: float


@dataclass
class SlotProbabilities:
    p_idle: float
    p_succ: np.ndarray
    p_coll: np.ndarray

    def total(self) -> float:
        return self.p_idle + float(self.p_succ.sum()) + float(self.p_coll.sum())


@dataclass
class ThroughputReport:
    throughput_bps: float
    p_idle: float
    p_succ: np.ndarray
    p_coll: np.ndarray
    collision_probability: float
    collision_cost: float
    mean_slot_duration: float
    scenario: dict = field(default_factory=dict)


# --- backoff chain -------------------------------------------------------

def tau_from_f(f: float, bp: BackoffParams) -> float:
    """Zero-backoff-counter probability for contention-failure probability ``f``."""
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"f={f} outside [0, 1]")
    W, r, B = bp.cw_min, bp.r, bp.b_max
    rf = r * f
    if abs(1.0 - rf) < 1e-12:
        # removable singularity: (1 - (rf)^B) / (1 - rf) -> B
        tau = 2.0 / ((W + 1) + W * f * (r - 1) * B)
    else:
        tau = 2.0 * (1 - rf) / ((1 - rf) * (W + 1) + W * f * (r - 1) * (1 - rf**B))
    return min(max(tau, 0.0), 1.0)


def chain_stationary(f: float, bp: BackoffParams) -> list[np.ndarray]:
    """Stationary probabilities b[i][k] of the (stage, counter) backoff chain.

    Needs integer windows; with real-valued windows use ``chain_mass``.
    """
    if not 0.0 <= f < 1.0:
        raise ValueError("f must lie in [0, 1)")
    rows = []
    for i, inflow in enumerate(_stage_inflows(f, bp)):
        cw = bp.window(i)
        if abs(cw - round(cw)) > 1e-9:
            raise ValueError("chain_stationary needs integer contention windows")
        k = np.arange(int(round(cw)))
        rows.append((cw - k) / cw * inflow)
    return rows


def chain_mass(f: float, bp: BackoffParams) -> float:
    """Total stationary mass, summing each stage's linear counter profile in closed form."""
    return float(sum(inflow * (bp.window(i) + 1) / 2
                     for i, inflow in enumerate(_stage_inflows(f, bp))))


def _stage_inflows(f: float, bp: BackoffParams) -> list[float]:
    B = bp.b_max
    if B == 0:
        return [tau_from_f(f, bp)]
    b00 = tau_from_f(f, bp) * (1 - f)
    heads = [f**i * b00 for i in range(B)] + [f**B / (1 - f) * b00]
    inflows = [(1 - f) * sum(heads)]
    inflows += [f * heads[i - 1] for i in range(1, B)]
    inflows.append(f * (heads[B - 1] + heads[B]))
    return inflows


# --- contention failure ---------------------------------------------------

def threat_probability(dist: RateDistribution, m: int) -> float:
    """Probability the station draws mode ``m`` or above."""
    check_mode(m, dist.M)
    return float(sum(dist.probs[m - 1:]))


def _threat_matrix(P: np.ndarray) -> np.ndarray:
    # q[i, m] = sum_{l >= m} P[i, l]
    return np.cumsum(P[:, ::-1], axis=1)[:, ::-1]


def failure_prob_general(n: int, m: int, taus: Sequence[float],
                         dists: Sequence[RateDistribution]) -> float:
    """Failure probability of station ``n`` (0-based) when it contends at mode ``m``."""
    taus = np.asarray(taus, dtype=float)
    if len(taus) != len(dists) or len(taus) == 0:
        raise ValueError("taus and dists must have equal, non-zero length")
    if not 0 <= n < len(taus):
        raise IndexError(f"station {n} outside 0..{len(taus) - 1}")
    check_mode(m, dists[0].M)
    others = [i for i in range(len(taus)) if i != n]
    return 1.0 - float(np.prod([1.0 - taus[i] * threat_probability(dists[i], m) for i in others]))


def failure_prob_average(n: int, taus: Sequence[float],
                         dists: Sequence[RateDistribution]) -> float:
    p = dists[n].probs
    return float(sum(p[m - 1] * failure_prob_general(n, m, taus, dists)
                     for m in range(1, len(p) + 1) if p[m - 1] > 0))


def _general_failures(tau: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Average failure probability of every station, vectorized."""
    N = len(tau)
    factors = 1.0 - tau[:, None] * _threat_matrix(P)           # (N, M)
    f = np.empty(N)
    for n in range(N):
        rest = np.prod(np.delete(factors, n, axis=0), axis=0)  # (M,)
        f[n] = float(P[n] @ (1.0 - rest))
    return f


def homogeneous_failure(tau: float, N: int, dist: RateDistribution) -> float:
    P = dist.as_array()
    q = np.cumsum(P[::-1])[::-1]
    return float(P @ (1.0 - (1.0 - tau * q) ** (N - 1)))


def _fixed_failures(tau: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    M = len(sizes)
    idle = (1.0 - tau) ** sizes
    f = np.empty(M)
    for m in range(M):
        above = np.prod(idle[m + 1:])
        f[m] = 1.0 - (1.0 - tau[m]) ** max(sizes[m] - 1, 0) * above
    return f


# --- fixed point ----------------------------------------------------------

def solve_fixed_point(pop: Population, bp: BackoffParams, alpha: float = 0.5,
                      tol: float = 1e-10, max_iter: int = 100_000) -> FixedPointSolution:
    if isinstance(pop, Homogeneous):
        return _solve_homogeneous(pop, bp)
    if isinstance(pop, FixedRateGroups):
        sizes = np.asarray(pop.group_sizes)
        phi = lambda tau: _fixed_failures(tau, sizes)  # noqa: E731
        size = pop.M
    else:
        P = pop.matrix()
        phi = lambda tau: _general_failures(tau, P)  # noqa: E731
        size = pop.N
    return _damped_iteration(phi, size, bp, alpha, tol, max_iter)


def _solve_homogeneous(pop: Homogeneous, bp: BackoffParams) -> FixedPointSolution:
    def g(f):
        return homogeneous_failure(tau_from_f(f, bp), pop.N, pop.dist) - f

    lo, hi = 0.0, 1.0
    it = 0
    if g(lo) > 0:
        while hi - lo > 1e-16 and it < 200:
            it += 1
            mid = 0.5 * (lo + hi)
            if g(mid) > 0:
                lo = mid
            else:
                hi = mid
    f = 0.5 * (lo + hi) if it else lo
    tau = tau_from_f(f, bp)
    return FixedPointSolution(np.array([tau]), np.array([f]), it, abs(g(f)))


def _damped_iteration(phi, size, bp, alpha, tol, max_iter) -> FixedPointSolution:
    f = np.zeros(size)
    taus = lambda fv: np.array([tau_from_f(x, bp) for x in fv])  # noqa: E731
    residual = np.inf
    for it in range(1, max_iter + 1):
        target = np.clip(phi(taus(f)), 0.0, 1.0)
        residual = float(np.max(np.abs(target - f)))
        if residual <= tol:
            f = target
            break
        f = (1 - alpha) * f + alpha * target
    else:
        raise ConvergenceError("damped fixed-point iteration did not converge", residual, max_iter)
    return FixedPointSolution(taus(f), f, it, residual)


# --- slot partition -------------------------------------------------------

def homogeneous_slot_probabilities(tau: float, N: int, dist: RateDistribution) -> SlotProbabilities:
    P = dist.as_array()
    q = np.cumsum(P[::-1])[::-1]
    q_above = np.append(q[1:], 0.0)
    ok = (1.0 - tau * q) ** (N - 1)
    p_succ = N * tau * P * ok
    p_coll = (1.0 - tau * q_above) ** N - (1.0 - tau * q) ** N - p_succ
    return SlotProbabilities((1.0 - tau) ** N, p_succ, np.clip(p_coll, 0.0, None))


def fixed_slot_probabilities(tau: np.ndarray, sizes: Sequence[int]) -> SlotProbabilities:
    sizes = np.asarray(sizes)
    M = len(sizes)
    idle = (1.0 - tau) ** sizes
    p_succ = np.zeros(M)
    p_coll = np.zeros(M)
    for m in range(M):
        n = sizes[m]
        if n == 0:
            continue
        above = np.prod(idle[m + 1:])
        one = n * tau[m] * (1.0 - tau[m]) ** (n - 1)
        p_succ[m] = one * above
        p_coll[m] = max(1.0 - idle[m] - one, 0.0) * above
    return SlotProbabilities(float(np.prod(idle)), p_succ, p_coll)


def general_slot_probabilities(tau: np.ndarray, P: np.ndarray) -> SlotProbabilities:
    tau = np.asarray(tau, dtype=float)
    if P.shape[0] != len(tau):
        raise ValueError("one tau per station required")
    q = _threat_matrix(P)
    a = tau[:, None] * P                                       # candidate exactly at m
    b = tau[:, None] * (q - P)                                 # candidate above m
    clear = 1.0 - a - b
    N, M = P.shape
    p_succ = np.zeros(M)
    for n in range(N):
        p_succ += a[n] * np.prod(np.delete(clear, n, axis=0), axis=0)
    p_coll = np.prod(1.0 - b, axis=0) - np.prod(clear, axis=0) - p_succ
    return SlotProbabilities(float(np.prod(1.0 - tau)), p_succ, np.clip(p_coll, 0.0, None))


def slot_probabilities(sol: FixedPointSolution, pop: Population) -> SlotProbabilities:
    if isinstance(pop, Homogeneous):
        if len(sol.tau) != 1:
            raise ValueError("homogeneous solution must hold a single tau")
        return homogeneous_slot_probabilities(float(sol.tau[0]), pop.N, pop.dist)
    if isinstance(pop, FixedRateGroups):
        if len(sol.tau) != pop.M:
            raise ValueError("fixed-rate solution must hold one tau per group")
        return fixed_slot_probabilities(sol.tau, pop.group_sizes)
    if len(sol.tau) != pop.N:
        raise ValueError("general solution must hold one tau per station")
    return general_slot_probabilities(sol.tau, pop.matrix())


# --- throughput -----------------------------------------------------------

def throughput(sp: SlotProbabilities, timing: MacTiming) -> ThroughputReport:
    if len(sp.p_succ) != timing.M:
        raise ValueError("slot probabilities and rate set disagree on M")
    t_succ, t_coll = timing.t_succ(), timing.t_coll()
    payload = float(sp.p_succ @ timing.payloads())
    coll_time = float(sp.p_coll @ t_coll)
    mean_slot = float(sp.p_succ @ t_succ) + sp.p_idle * timing.sigma + coll_time
    assert mean_slot > 0, "mean generic slot must be positive"
    return ThroughputReport(
        throughput_bps=payload / mean_slot,
        p_idle=sp.p_idle,
        p_succ=sp.p_succ,
        p_coll=sp.p_coll,
        collision_probability=float(sp.p_coll.sum()),
        collision_cost=coll_time / timing.sigma,
        mean_slot_duration=mean_slot,
    )


def analyze(pop: Population, bp: BackoffParams, timing: MacTiming, **solver) -> ThroughputReport:
    """Solve the fixed point and evaluate throughput in one call."""
    if population_M(pop) != timing.M:
        raise ValueError("population and rate set disagree on M")
    sol = solve_fixed_point(pop, bp, **solver)
    report = throughput(slot_probabilities(sol, pop), timing)
    report.scenario = {"tau": sol.tau, "f": sol.f}
    return report
