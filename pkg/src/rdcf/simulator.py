"""Slotted simulator of saturated stations under R-DCF and DCF-family baselines.

Time is a sequence of generic slots. In each generic slot the stations
whose backoff counter is zero contend; everybody else counts down by one.
Runs of idle slots are skipped in one step, so the cost of a run scales
with the number of busy slots.
"""
from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .analytic_model import (FixedRateGroups, General, Homogeneous, Population, ThroughputReport,
                             population_M)
from .phy_timing import (AccessMode, BackoffParams, BurstPolicy, MiniSlotConvention, PhyParams,
                         RateSet, collision_duration, default_sigma, exchange_success,
                         success_duration)

MIN_REPORT_SLOTS = 10_000
MAX_HORIZON = 10**12


class MacStrategy(str, enum.Enum):
    RDCF = "rdcf"
    DCF = "dcf"
    OAR_TXOP = "oar_txop"
    REMEDY = "remedy"


# CW_min per rate for the remedy scheme, keyed by Mbps
REMEDY_CW_BY_MBPS = {54: 8, 48: 8, 36: 16, 24: 16, 18: 32, 12: 32, 9: 64, 6: 64}


def remedy_cw_map(rate_set: RateSet) -> dict[int, int]:
    """Default mode -> CW_min map for the 802.11a rates."""
    out = {}
    for m, rate in enumerate(rate_set.rates, start=1):
        key = round(rate / 1e6)
        if key not in REMEDY_CW_BY_MBPS or abs(rate / 1e6 - key) > 1e-9:
            raise ValueError(f"no default remedy window for {rate / 1e6:g} Mbps; pass cw_map")
        out[m] = REMEDY_CW_BY_MBPS[key]
    return out


class InsufficientSamples(ValueError):
    pass


class ScenarioMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    population: Population
    strategy: MacStrategy = MacStrategy.RDCF
    mode: AccessMode = AccessMode.BASIC
    backoff: BackoffParams = field(default_factory=BackoffParams)
    burst: BurstPolicy = field(default_factory=BurstPolicy)
    phy: PhyParams = field(default_factory=PhyParams)
    rate_set: RateSet = field(default_factory=RateSet.ieee80211a)
    seed: int = 0
    horizon: int = 1_000_000
    convention: MiniSlotConvention = MiniSlotConvention.HIGH_RATE_FIRST
    cw_map: Mapping[int, int] | None = None
    busy_slot_decrement: bool = True

    def __post_init__(self):
        object.__setattr__(self, "strategy", MacStrategy(self.strategy))
        object.__setattr__(self, "mode", AccessMode(self.mode))
        object.__setattr__(self, "convention", MiniSlotConvention(self.convention))
        if population_M(self.population) != self.rate_set.M:
            raise ValueError("population and rate set disagree on M")
        if not 1 <= self.horizon <= MAX_HORIZON:
            raise ValueError(f"horizon must lie in 1..{MAX_HORIZON}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.strategy is MacStrategy.REMEDY and self.cw_map is not None:
            if set(self.cw_map) != set(range(1, self.rate_set.M + 1)):
                raise ValueError("cw_map must give a window for every mode")

    def scenario_key(self) -> dict:
        return {"N": self.population.N, "mode": self.mode.value,
                "population": _population_key(self.population)}


def _population_key(pop: Population):
    if isinstance(pop, Homogeneous):
        return ("homogeneous", pop.dist.probs)
    if isinstance(pop, FixedRateGroups):
        return ("fixed", pop.group_sizes)
    return ("general", tuple(d.probs for d in pop.per_station_dists))


@dataclass
class StationState:
    station: int
    backoff_stage: int
    counter: int
    current_mode: int
    fixed_mode: int | None
    payload_bits: float
    attempts: int
    successes: int
    collisions: int


@dataclass
class SimResult:
    throughput_bps: float
    p_idle: float
    p_succ: np.ndarray
    p_coll: np.ndarray
    collision_probability: float
    collision_cost: float
    station_bits: np.ndarray
    slots: int
    sim_time: float
    virtual_collisions: int
    scenario: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Outcome:
    """Result of one contention round.

    ``mode`` is the success mode, or the mode whose airtime a collision
    occupies. ``failed`` lists every candidate that must back off again,
    virtual losers included.
    """

    kind: str
    mode: int | None = None
    winner: int | None = None
    failed: tuple[int, ...] = ()
    virtual: tuple[int, ...] = ()


IDLE = Outcome("idle")


def contention_resolve(candidates: Sequence[tuple[int, int]], strategy: MacStrategy) -> Outcome:
    """Decide what a set of (station, mode) candidates produces on the channel."""
    if not candidates:
        return IDLE
    if MacStrategy(strategy) is MacStrategy.RDCF:
        top = max(m for _, m in candidates)
        leaders = tuple(s for s, m in candidates if m == top)
        deferred = tuple(s for s, m in candidates if m != top)
        if len(leaders) == 1:
            return Outcome("success", top, leaders[0], deferred, deferred)
        return Outcome("collision", top, None, leaders + deferred, deferred)
    if len(candidates) == 1:
        s, m = candidates[0]
        return Outcome("success", m, s)
    return Outcome("collision", min(m for _, m in candidates), None,
                   tuple(s for s, _ in candidates))


def next_stage(stage: int, failed: bool, b_max: int) -> int:
    return min(stage + 1, b_max) if failed else 0


class _Stream:
    """Buffered uniform draws from one station's generator."""

    __slots__ = ("rng", "buf", "pos")

    def __init__(self, seed_seq: np.random.SeedSequence, block: int = 2048):
        self.rng = np.random.Generator(np.random.PCG64(seed_seq))
        self.buf = self.rng.random(block).tolist()
        self.pos = 0

    def next(self) -> float:
        if self.pos == len(self.buf):
            self.buf = self.rng.random(len(self.buf)).tolist()
            self.pos = 0
        u = self.buf[self.pos]
        self.pos += 1
        return u


class Simulator:
    def __init__(self, config: SimConfig):
        self.config = c = config
        pop, M = c.population, c.rate_set.M
        N = pop.N
        self.N, self.M = N, M

        if isinstance(pop, FixedRateGroups):
            self.fixed = [m for m, n in enumerate(pop.group_sizes, start=1) for _ in range(n)]
            self.cdfs = None
        else:
            rows = pop.to_general().per_station_dists if isinstance(pop, Homogeneous) else pop.per_station_dists
            self.fixed = None
            self.cdfs = [np.cumsum(d.probs).tolist() for d in rows]
            for cdf in self.cdfs:
                cdf[-1] = 1.0 + 1e-12

        self.windows = self._windows()
        self._timing()

        streams = np.random.SeedSequence(c.seed).spawn(N)
        self.streams = [_Stream(s) for s in streams]
        self.stage = [0] * N
        self.mode = [0] * N
        self.counter = np.zeros(N, dtype=np.int64)
        self.bits = np.zeros(N)
        self.attempts = [0] * N
        self.successes = [0] * N
        self.collisions = [0] * N
        for i in range(N):
            self._redraw(i)

    def _windows(self) -> dict[int, list[int]]:
        c = self.config
        bp = c.backoff
        if c.strategy is MacStrategy.REMEDY:
            cw_map = dict(c.cw_map) if c.cw_map is not None else remedy_cw_map(c.rate_set)
            return {m: BackoffParams(cw_map[m], bp.r, bp.b_max).integer_windows()
                    for m in range(1, self.M + 1)}
        w = bp.integer_windows()
        return {m: w for m in range(1, self.M + 1)}

    def _timing(self):
        c = self.config
        rs, phy, mode = c.rate_set, c.phy, c.mode
        modes = range(1, self.M + 1)
        if c.strategy is MacStrategy.RDCF:
            self.sigma = default_sigma(rs, phy)
            self.t_succ = [success_duration(mode, m, c.burst, phy, rs, self.sigma, c.convention) for m in modes]
            self.t_coll = [collision_duration(mode, m, c.burst, phy, rs, self.sigma, c.convention) for m in modes]
            burst = c.burst
        else:
            self.sigma = phy.slot_base
            bursting = c.strategy is MacStrategy.OAR_TXOP
            burst = BurstPolicy(c.burst.base_payload_bits, c.burst.base_rate_index,
                                c.burst.accounting, enabled=bursting and c.burst.enabled)
            single = BurstPolicy(c.burst.base_payload_bits, c.burst.base_rate_index,
                                 c.burst.accounting, enabled=False)
            self.t_succ = [exchange_success(mode, m, burst, phy, rs) for m in modes]
            # a collision carries one base frame at the lowest rate involved
            if mode is AccessMode.RTS_CTS:
                self.t_coll = [phy.rts_time + phy.difs for _ in modes]
            else:
                self.t_coll = [phy.header_time(rs.rate(m)) + single.base_payload_bits / rs.rate(m) + phy.difs
                               for m in modes]
        self.payload = [burst.payload_bits(m, rs) for m in modes]

    def _redraw(self, i: int) -> None:
        s = self.streams[i]
        if self.fixed is not None:
            m = self.fixed[i]
        else:
            m = bisect.bisect_right(self.cdfs[i], s.next()) + 1
        self.mode[i] = m
        cw = self.windows[m][self.stage[i]]
        self.counter[i] = int(s.next() * cw)

    def station_states(self) -> list[StationState]:
        return [StationState(i, self.stage[i], int(self.counter[i]), self.mode[i],
                             self.fixed[i] if self.fixed else None, float(self.bits[i]),
                             self.attempts[i], self.successes[i], self.collisions[i])
                for i in range(self.N)]

    def resolve_busy(self, cand: Sequence[int]) -> Outcome:
        """Resolve one busy slot among stations ``cand`` and update their state."""
        strategy = self.config.strategy
        out = contention_resolve([(i, self.mode[i]) for i in cand], strategy)
        b_max = self.config.backoff.b_max
        for i in cand:
            self.attempts[i] += 1
        if out.winner is not None:
            w = out.winner
            self.stage[w] = 0
            self.successes[w] += 1
            self.bits[w] += self.payload[out.mode - 1]
            self._redraw(w)
        for i in out.failed:
            self.stage[i] = next_stage(self.stage[i], True, b_max)
            if i not in out.virtual:
                self.collisions[i] += 1
            self._redraw(i)
        return out

    def run(self) -> SimResult:
        c = self.config
        M = self.M
        horizon = c.horizon
        counter = self.counter
        sigma = self.sigma
        slots = idle = virtual = 0
        elapsed = coll_time = 0.0
        n_succ = [0] * M
        n_coll = [0] * M
        dec = 1 if c.busy_slot_decrement else 0

        while slots < horizon:
            k = int(counter.min())
            if k:
                k = min(k, horizon - slots)
                counter -= k
                idle += k
                slots += k
                elapsed += k * sigma
                continue
            cand = np.flatnonzero(counter == 0).tolist()
            # every candidate is redrawn below, so the blanket decrement only sticks for the rest
            if dec:
                counter -= dec
            out = self.resolve_busy(cand)
            m = out.mode - 1
            if out.kind == "success":
                n_succ[m] += 1
                elapsed += self.t_succ[m]
            else:
                n_coll[m] += 1
                elapsed += self.t_coll[m]
                coll_time += self.t_coll[m]
            virtual += len(out.virtual)
            slots += 1

        p_succ = np.array(n_succ) / slots
        p_coll = np.array(n_coll) / slots
        return SimResult(
            throughput_bps=float(self.bits.sum() / elapsed) if elapsed > 0 else 0.0,
            p_idle=idle / slots,
            p_succ=p_succ,
            p_coll=p_coll,
            collision_probability=sum(n_coll) / slots,
            collision_cost=coll_time / (sigma * slots),
            station_bits=self.bits.copy(),
            slots=slots,
            sim_time=elapsed,
            virtual_collisions=virtual,
            scenario=c.scenario_key(),
        )


def run(config: SimConfig) -> SimResult:
    return Simulator(config).run()


@dataclass
class Comparison:
    simulated_bps: float
    analytic_bps: float
    relative_error: float
    delta_p_idle: float
    delta_p_succ: float
    delta_p_coll: float


def empirical_report(result: SimResult, analytic: ThroughputReport,
                     scenario: Mapping | None = None) -> Comparison:
    """Relative error between a simulated run and the analytic prediction."""
    if result.slots < MIN_REPORT_SLOTS:
        raise InsufficientSamples(f"{result.slots} generic slots; need at least {MIN_REPORT_SLOTS}")
    expected = scenario if scenario is not None else analytic.scenario.get("key")
    if expected is not None and dict(expected) != result.scenario:
        raise ScenarioMismatch(f"simulated {result.scenario} vs analytic {dict(expected)}")
    if len(result.p_succ) != len(analytic.p_succ):
        raise ScenarioMismatch("rate set sizes differ")
    a = analytic.throughput_bps
    return Comparison(
        simulated_bps=result.throughput_bps,
        analytic_bps=a,
        relative_error=abs(result.throughput_bps - a) / a,
        delta_p_idle=result.p_idle - analytic.p_idle,
        delta_p_succ=float(result.p_succ.sum() - analytic.p_succ.sum()),
        delta_p_coll=float(result.p_coll.sum() - analytic.p_coll.sum()),
    )
