"""Throughput-maximizing operating point and the offline backoff table."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .analytic_model import (Homogeneous, RateDistribution, homogeneous_failure,
                             homogeneous_slot_probabilities, tau_from_f, throughput)
from .phy_timing import AccessMode, BackoffParams, MacTiming

GOLDEN = (np.sqrt(5) - 1) / 2
TABLE_HEADER = ("n", "mode", "tau_star", "r_opt", "r_app", "cw_min", "b")

# Below this tau* the table switches from "transmit at once" (cw_min=1, r=1) to cw_min=2.
FULL_ACCESS_THRESHOLD = 0.5


@dataclass
class OptimalOperatingPoint:
    tau_star: float
    f_star: float
    s_max: float
    mode: AccessMode
    n_stations: int
    dist: RateDistribution
    payload_bits: float


@dataclass
class BackoffTableRow:
    n: int
    mode: AccessMode
    tau_star: float
    r_opt: float
    r_app: float
    cw_min: int
    b: int = 6
    clamped: bool = False


def throughput_at_tau(tau: float, n: int, dist: RateDistribution, timing: MacTiming) -> float:
    return throughput(homogeneous_slot_probabilities(tau, n, dist), timing).throughput_bps


def optimal_tau(pop: Homogeneous, timing: MacTiming, grid: int = 1000,
                xtol: float = 1e-6) -> OptimalOperatingPoint:
    """Maximize homogeneous throughput over tau in (0, 1]."""
    if not isinstance(pop, Homogeneous):
        raise TypeError("optimal_tau needs a homogeneous population")

    def S(t):
        return throughput_at_tau(t, pop.N, pop.dist, timing)

    taus = np.linspace(1.0 / grid, 1.0, grid)
    values = np.array([S(t) for t in taus])
    i = int(np.argmax(values))
    if i == grid - 1:
        best = 1.0
        # the optimum may still sit just inside the last grid cell
        t = _golden(S, taus[i - 1], 1.0, xtol)
        if S(t) > values[i]:
            best = t
    else:
        best = _golden(S, taus[max(i - 1, 0)] if i > 0 else 0.0, taus[i + 1], xtol)
        if S(best) < values[i]:
            best = float(taus[i])
    f_star = homogeneous_failure(best, pop.N, pop.dist)
    return OptimalOperatingPoint(best, f_star, S(best), timing.mode, pop.N, pop.dist,
                                 timing.burst.base_payload_bits)


def _golden(S, a: float, b: float, xtol: float) -> float:
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = S(c), S(d)
    while b - a > xtol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = S(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = S(d)
    return 0.5 * (a + b)


def backoff_params_for_tau(tau_star: float, f_star: float, b: int = 6,
                           cw_min: int = 2) -> tuple[int, float, bool]:
    """Backoff (cw_min, r) that reproduces ``tau_star`` at failure probability ``f_star``.

    Returns ``(cw_min, r, clamped)``; ``clamped`` is set when no ``r >= 1``
    reaches ``tau_star`` with the fixed window.
    """
    if not 0.0 < tau_star <= 1.0:
        raise ValueError("tau_star must lie in (0, 1]")
    if tau_star >= FULL_ACCESS_THRESHOLD:
        return 1, 1.0, False

    def gap(r):
        return tau_from_f(f_star, BackoffParams(cw_min, r, b)) - tau_star

    lo, hi = 1.0, 4.0
    if abs(gap(lo)) <= 1e-8:
        return cw_min, 1.0, False
    if gap(lo) < 0:
        return cw_min, 1.0, True
    while gap(hi) > 0:
        hi *= 2
        if hi > 1e6:
            return cw_min, hi, True
    while True:
        mid = 0.5 * (lo + hi)
        g = gap(mid)
        if abs(g) <= 1e-8 or hi - lo < 1e-14:
            return cw_min, mid, False
        if g > 0:
            lo = mid
        else:
            hi = mid


def table_row(n: int, dist: RateDistribution, timing: MacTiming, b: int = 6) -> BackoffTableRow:
    op = optimal_tau(Homogeneous(n, dist), timing)
    cw, r, clamped = backoff_params_for_tau(op.tau_star, op.f_star, b)
    return BackoffTableRow(n, timing.mode, op.tau_star, r, round(r, 1), cw, b, clamped)


def build_offline_table(n_values: Sequence[int], dist: RateDistribution, timing: MacTiming,
                        modes: Iterable[AccessMode] | None = None, b: int = 6) -> list[BackoffTableRow]:
    if not n_values:
        raise ValueError("n_values must not be empty")
    modes = [timing.mode] if modes is None else [AccessMode(m) for m in modes]
    rows = []
    for mode in modes:
        t = replace(timing, mode=mode)
        rows.extend(table_row(int(n), dist, t, b) for n in n_values)
    return rows


def table_to_csv(rows: Sequence[BackoffTableRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_HEADER)
    for r in rows:
        w.writerow([r.n, r.mode.value, f"{r.tau_star:.6g}", f"{r.r_opt:.6g}", f"{r.r_app:.1f}",
                    r.cw_min, r.b])
    return buf.getvalue()


def table_from_csv(text: str) -> list[BackoffTableRow]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != TABLE_HEADER:
        raise ValueError(f"unexpected header {reader.fieldnames}")
    return [BackoffTableRow(int(d["n"]), AccessMode(d["mode"]), float(d["tau_star"]),
                            float(d["r_opt"]), float(d["r_app"]), int(d["cw_min"]), int(d["b"]))
            for d in reader]


def lookup(rows: Sequence[BackoffTableRow], n: int, mode: AccessMode) -> BackoffTableRow:
    """Row for the tabulated network size closest to ``n`` (ties go to the smaller N)."""
    mode = AccessMode(mode)
    candidates = [r for r in rows if r.mode is mode]
    if not candidates:
        raise KeyError(f"no rows for mode {mode.value}")
    return min(candidates, key=lambda r: (abs(r.n - n), r.n))
