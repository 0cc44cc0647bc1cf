"""Rate set, 802.11a timing constants and frame-exchange durations.

All durations are in seconds and all rates in bits/second.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

US = 1e-6
MBPS = 1e6

IEEE80211A_RATES_MBPS = (6, 9, 12, 18, 24, 36, 48, 54)


class AccessMode(str, enum.Enum):
    BASIC = "basic"
    RTS_CTS = "rts_cts"


class MiniSlotConvention(str, enum.Enum):
    """Which end of the rate ladder waits the fewest mini slots.

    ``eq1`` makes mode ``m`` wait ``M - m`` mini slots, so the highest rate
    goes first. ``eq11`` is the ``m - 1`` variant, kept for comparison.
    """

    HIGH_RATE_FIRST = "eq1"
    LOW_RATE_FIRST = "eq11"


class BurstAccounting(str, enum.Enum):
    """How a rate-proportional burst is charged on the air.

    ``per_frame``: each of the ``n_m`` frames carries its own header and ACK,
    frames separated by SIFS; a basic-mode collision costs one base frame.
    ``block``: one header and one ACK for the whole burst, and a basic-mode
    collision costs the full burst.
    """

    PER_FRAME = "per_frame"
    BLOCK = "block"


@dataclass(frozen=True)
class RateSet:
    rates: tuple[float, ...]

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        object.__setattr__(self, "rates", rates)
        if not rates:
            raise ValueError("rate set must contain at least one rate")
        if any(r <= 0 for r in rates):
            raise ValueError("rates must be positive")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ValueError("rates must be strictly increasing")

    @classmethod
    def from_mbps(cls, rates_mbps: Sequence[float]) -> "RateSet":
        return cls(tuple(r * MBPS for r in rates_mbps))

    @classmethod
    def ieee80211a(cls) -> "RateSet":
        return cls.from_mbps(IEEE80211A_RATES_MBPS)

    @property
    def M(self) -> int:
        return len(self.rates)

    def __len__(self) -> int:
        return len(self.rates)

    def rate(self, m: int) -> float:
        """Rate of mode ``m`` (1-based)."""
        check_mode(m, self.M)
        return self.rates[m - 1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.rates)


def check_mode(m: int, M: int) -> None:
    if not 1 <= m <= M:
        raise IndexError(f"rate index {m} outside 1..{M}")


@dataclass(frozen=True)
class PhyParams:
    """802.11a PHY/MAC constants.

    Control frames (RTS, CTS, ACK) and the PLCP service/tail bits go at
    ``control_rate``; the MAC header goes at the data rate unless
    ``mac_header_at_control_rate`` is set.
    """

    slot_base: float = 9 * US
    sifs: float = 16 * US
    difs: float = 34 * US
    plcp_time: float = 20 * US
    plcp_service_bits: int = 22
    mac_header_bits: int = 224
    rts_bits: int = 160
    cts_bits: int = 112
    ack_bits: int = 112
    control_rate: float = 6 * MBPS
    mac_header_at_control_rate: bool = False

    def __post_init__(self):
        for name in ("slot_base", "sifs", "difs", "plcp_time", "control_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("plcp_service_bits", "mac_header_bits", "rts_bits", "cts_bits", "ack_bits"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.difs <= self.sifs:
            raise ValueError("DIFS must exceed SIFS")

    @property
    def phy_header_time(self) -> float:
        return self.plcp_time + self.plcp_service_bits / self.control_rate

    @property
    def rts_time(self) -> float:
        return self.rts_bits / self.control_rate + self.phy_header_time

    @property
    def cts_time(self) -> float:
        return self.cts_bits / self.control_rate + self.phy_header_time

    @property
    def ack_time(self) -> float:
        return self.ack_bits / self.control_rate + self.phy_header_time

    def header_time(self, rate: float) -> float:
        """Packet header time T_H for a frame sent at ``rate``."""
        mac_rate = self.control_rate if self.mac_header_at_control_rate else rate
        return self.phy_header_time + self.mac_header_bits / mac_rate


@dataclass(frozen=True)
class BackoffParams:
    cw_min: int = 16
    r: float = 2.0
    b_max: int = 6

    def __post_init__(self):
        if int(self.cw_min) != self.cw_min or self.cw_min < 1:
            raise ValueError("cw_min must be a positive integer")
        if self.r < 1:
            raise ValueError("backoff exponent r must be >= 1")
        if int(self.b_max) != self.b_max or self.b_max < 0:
            raise ValueError("b_max must be a non-negative integer")

    @property
    def cw_max(self) -> float:
        return self.cw_min * self.r**self.b_max

    def window(self, stage: int) -> float:
        """Real-valued contention window used by the analytic chain."""
        return self.cw_min * self.r ** min(stage, self.b_max)

    def integer_windows(self) -> list[int]:
        """Per-stage windows rounded up, as used by the simulator."""
        return [math.ceil(self.cw_min * self.r**i - 1e-9) for i in range(self.b_max + 1)]


@dataclass(frozen=True)
class BurstPolicy:
    """Rate-proportional burst: mode ``m`` sends ``R_m / R_0`` base frames.

    ``base_rate_index`` is 1-based. ``enabled=False`` gives one base frame
    per transmission regardless of rate (plain DCF).
    """

    base_payload_bits: float = 2312 * 8
    base_rate_index: int = 1
    accounting: BurstAccounting = BurstAccounting.PER_FRAME
    enabled: bool = True

    def __post_init__(self):
        if self.base_payload_bits <= 0:
            raise ValueError("base payload must be positive")
        object.__setattr__(self, "accounting", BurstAccounting(self.accounting))

    def frames(self, m: int, rate_set: RateSet) -> float:
        if not self.enabled:
            return 1.0
        return rate_set.rate(m) / rate_set.rate(self.base_rate_index)

    def payload_bits(self, m: int, rate_set: RateSet) -> float:
        return self.base_payload_bits * self.frames(m, rate_set)

    def airtime(self, m: int, rate_set: RateSet) -> float:
        """Pure payload airtime L_m / R_m."""
        return self.payload_bits(m, rate_set) / rate_set.rate(m)


def default_sigma(rate_set: RateSet, phy: PhyParams) -> float:
    """R-DCF idle slot: M ordinary slots, so one mini slot equals one slot."""
    return rate_set.M * phy.slot_base


def mini_slot_wait(m: int, rate_set: RateSet, sigma: float,
                   convention: MiniSlotConvention = MiniSlotConvention.HIGH_RATE_FIRST) -> float:
    check_mode(m, rate_set.M)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    M = rate_set.M
    steps = (M - m) if MiniSlotConvention(convention) is MiniSlotConvention.HIGH_RATE_FIRST else (m - 1)
    return steps * (sigma / M)


def burst_exchange(m: int, burst: BurstPolicy, phy: PhyParams, rate_set: RateSet) -> float:
    """Data frames plus their acknowledgements, without inter-frame prefix/suffix."""
    rate = rate_set.rate(m)
    th = phy.header_time(rate)
    n = burst.frames(m, rate_set)
    if burst.accounting is BurstAccounting.BLOCK:
        return th + burst.airtime(m, rate_set) + phy.sifs + phy.ack_time
    frame = th + burst.base_payload_bits / rate + phy.sifs + phy.ack_time
    return n * frame + (n - 1) * phy.sifs


def collided_data(m: int, burst: BurstPolicy, phy: PhyParams, rate_set: RateSet) -> float:
    """Airtime of the data that goes out in a basic-mode collision at mode ``m``."""
    rate = rate_set.rate(m)
    if burst.accounting is BurstAccounting.BLOCK:
        return phy.header_time(rate) + burst.airtime(m, rate_set)
    return phy.header_time(rate) + burst.base_payload_bits / rate


def exchange_success(mode: AccessMode, m: int, burst: BurstPolicy, phy: PhyParams,
                     rate_set: RateSet) -> float:
    """Successful exchange duration excluding any mini-slot wait."""
    t = burst_exchange(m, burst, phy, rate_set) + phy.difs
    if AccessMode(mode) is AccessMode.RTS_CTS:
        t += phy.rts_time + phy.sifs + phy.cts_time + phy.sifs
    return t


def exchange_collision(mode: AccessMode, m: int, burst: BurstPolicy, phy: PhyParams,
                       rate_set: RateSet) -> float:
    """Collision duration excluding any mini-slot wait."""
    if AccessMode(mode) is AccessMode.RTS_CTS:
        return phy.rts_time + phy.difs
    return collided_data(m, burst, phy, rate_set) + phy.difs


def success_duration(mode: AccessMode, m: int, burst: BurstPolicy, phy: PhyParams,
                     rate_set: RateSet, sigma: float | None = None,
                     convention: MiniSlotConvention = MiniSlotConvention.HIGH_RATE_FIRST) -> float:
    sigma = default_sigma(rate_set, phy) if sigma is None else sigma
    return (mini_slot_wait(m, rate_set, sigma, convention)
            + exchange_success(mode, m, burst, phy, rate_set))


def collision_duration(mode: AccessMode, m: int, burst: BurstPolicy, phy: PhyParams,
                       rate_set: RateSet, sigma: float | None = None,
                       convention: MiniSlotConvention = MiniSlotConvention.HIGH_RATE_FIRST) -> float:
    sigma = default_sigma(rate_set, phy) if sigma is None else sigma
    return (mini_slot_wait(m, rate_set, sigma, convention)
            + exchange_collision(mode, m, burst, phy, rate_set))


@dataclass(frozen=True)
class MacTiming:
    """Everything needed to turn slot probabilities into seconds and bits."""

    rate_set: RateSet = field(default_factory=RateSet.ieee80211a)
    phy: PhyParams = field(default_factory=PhyParams)
    burst: BurstPolicy = field(default_factory=BurstPolicy)
    mode: AccessMode = AccessMode.BASIC
    convention: MiniSlotConvention = MiniSlotConvention.HIGH_RATE_FIRST
    sigma: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", AccessMode(self.mode))
        object.__setattr__(self, "convention", MiniSlotConvention(self.convention))
        if self.sigma is None:
            object.__setattr__(self, "sigma", default_sigma(self.rate_set, self.phy))

    @property
    def M(self) -> int:
        return self.rate_set.M

    def t_succ(self) -> np.ndarray:
        return np.array([success_duration(self.mode, m, self.burst, self.phy, self.rate_set,
                                          self.sigma, self.convention)
                         for m in range(1, self.M + 1)])

    def t_coll(self) -> np.ndarray:
        return np.array([collision_duration(self.mode, m, self.burst, self.phy, self.rate_set,
                                            self.sigma, self.convention)
                         for m in range(1, self.M + 1)])

    def payloads(self) -> np.ndarray:
        return np.array([self.burst.payload_bits(m, self.rate_set) for m in range(1, self.M + 1)])


def rate_distribution_from_snr(thresholds: Sequence[float], pdf: Callable[[float], float],
                               tol: float = 1e-10) -> np.ndarray:
    """Probability of each rate mode from SNR thresholds and an SNR density.

    ``thresholds`` runs from 0 to ``inf``; mode ``m`` covers
    ``[thresholds[m-1], thresholds[m])``.
    """
    th = [float(t) for t in thresholds]
    if len(th) < 2:
        raise ValueError("need at least two thresholds")
    if th[0] != 0.0 or not math.isinf(th[-1]):
        raise ValueError("thresholds must start at 0 and end at +inf")
    if any(b <= a for a, b in zip(th, th[1:])):
        raise ValueError("thresholds must be strictly increasing")

    def mass(lo: float, hi: float) -> float:
        if math.isinf(hi):
            # gamma = lo + t / (1 - t) maps [0, 1) onto [lo, inf)
            def g(t):
                return pdf(lo + t / (1.0 - t)) / (1.0 - t) ** 2
            return _adaptive_simpson(g, 0.0, 1.0 - 1e-12, tol)
        return _adaptive_simpson(pdf, lo, hi, tol)

    probs = np.array([mass(lo, hi) for lo, hi in zip(th, th[1:])])
    total = probs.sum()
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"pdf integrates to {total:.9g}, not 1")
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def _adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float,
                      max_depth: int = 60) -> float:
    fa, fm, fb = f(a), f((a + b) / 2), f(b)
    whole = (b - a) / 6 * (fa + 4 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = (a + b) / 2
        lm, rm = (a + m) / 2, (m + b) / 2
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6 * (fa + 4 * flm + fm)
        right = (b - m) / 6 * (fm + 4 * frm + fb)
        if depth <= 0 or abs(left + right - whole) <= 15 * tol:
            return left + right + (left + right - whole) / 15
        return (rec(a, m, fa, flm, fm, left, tol / 2, depth - 1)
                + rec(m, b, fm, frm, fb, right, tol / 2, depth - 1))

    return rec(a, b, fa, fm, fb, whole, tol, max_depth)


def table_one(phy: PhyParams | None = None, backoff: BackoffParams | None = None) -> list[tuple[str, str]]:
    """The 802.11a parameter table as (parameter, value) rows."""
    phy = phy or PhyParams()
    backoff = backoff or BackoffParams()
    ctrl = _fmt(phy.control_rate / MBPS)

    def us(x):
        return f"{_fmt(x / US)} μs"

    return [
        ("tSlotTime", us(phy.slot_base)),
        ("tSIFSTime", us(phy.sifs)),
        ("tDIFSTime", us(phy.difs)),
        ("MAC Header", f"{phy.mac_header_bits} bits"),
        ("PHY Header", f"{us(phy.plcp_time)} + {phy.plcp_service_bits}/{ctrl} μs"),
        ("RTS", f"{phy.rts_bits}/{ctrl} μs + PHY Header"),
        ("CTS", f"{phy.cts_bits}/{ctrl} μs + PHY Header"),
        ("ACK", f"{phy.ack_bits}/{ctrl} μs + PHY Header"),
        ("CWmin", f"{backoff.cw_min}"),
        ("CWmax", _fmt(backoff.cw_max)),
    ]


def _fmt(x: float) -> str:
    r = round(x)
    return str(int(r)) if abs(x - r) < 1e-9 else f"{x:g}"
