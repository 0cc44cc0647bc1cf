"""Command-line runner: analyze, simulate, validate, optimize, sweep."""
from __future__ import annotations

import argparse
import csv
import io
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from typing import Callable, Iterable, Sequence

import numpy as np

from .analytic_model import ConvergenceError, Homogeneous, ThroughputReport, analyze
from .config import ConfigError, ScenarioConfig, load_config
from .optimizer import (BackoffTableRow, build_offline_table, lookup, optimal_tau, table_to_csv,
                        throughput_at_tau)
from .phy_timing import MBPS, AccessMode, BackoffParams
from .simulator import MacStrategy, SimResult, run as run_sim

EXIT_OK, EXIT_GATE, EXIT_INPUT, EXIT_CONVERGENCE = 0, 1, 2, 3
GATE = 0.015
SWEEP_AXES = ("n", "cw_min", "tau", "packet_bytes")
SWEEP_HEADER = ("scenario_id", "axis", "value", "strategy", "source", "throughput_mbps", "p_idle",
                "collision_probability", "collision_cost")
VALIDATE_HEADER = ("scenario_id", "n", "access_mode", "S_mbps", "A_mbps", "E", "gated", "pass",
                   "S_spread_mbps")
COMPARE_HEADER = ("scenario_id", "n", "access_mode", "s_max_mbps", "offline_sim_mbps",
                  "standard_sim_mbps", "dcf_sim_mbps", "offline_gain")


class ScenarioConvergenceError(RuntimeError):
    def __init__(self, scenario_id: str, err: ConvergenceError):
        super().__init__(f"scenario {scenario_id!r}: {err}")


def fmt(x) -> str:
    """Six significant digits; blanks for None."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float) or isinstance(x, np.floating):
        return f"{float(x):.6g}"
    return str(x)


@dataclass
class ReportRow:
    scenario_id: str
    source: str
    throughput_mbps: float
    p_idle: float
    collision_probability: float
    collision_cost: float
    relative_error: float | None = None

    @classmethod
    def header(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def values(self) -> list[str]:
        return [fmt(getattr(self, f.name)) for f in fields(self)]


def report_row(sid: str, source: str, r: ThroughputReport | SimResult,
               relative_error: float | None = None) -> ReportRow:
    return ReportRow(sid, source, r.throughput_bps / MBPS, r.p_idle, r.collision_probability,
                     r.collision_cost, relative_error)


def write_csv(header: Sequence[str], rows: Iterable[Sequence], out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])


def write_text(header: Sequence[str], rows: Iterable[Sequence], out) -> None:
    cells = [list(header)] + [[fmt(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    for r in cells:
        out.write("  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip() + "\n")


def fan_out(fn: Callable, items: Sequence, jobs: int) -> list:
    """Ordered map, concurrent up to ``jobs`` worker processes."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items))


# --- workers (module level so they pickle) --------------------------------

def analytic_report(sc: ScenarioConfig) -> ThroughputReport:
    if MacStrategy(sc.strategy) is not MacStrategy.RDCF:
        raise ConfigError(f"scenario {sc.id!r}.strategy: the analytic model covers rdcf only")
    try:
        return analyze(sc.build_population(), sc.backoff_params(), sc.timing())
    except ConvergenceError as e:
        raise ScenarioConvergenceError(sc.id, e) from None


def simulate_one(args) -> SimResult:
    sc, seed, overrides = args
    return run_sim(sc.sim_config(seed=seed, **overrides))


def _validate_one(args) -> tuple:
    sc, seeds = args
    a = analytic_report(sc).throughput_bps / MBPS
    sims = [simulate_one((sc, s, {})).throughput_bps / MBPS for s in seeds]
    return sc, float(np.mean(sims)), a, (max(sims) - min(sims)) if len(sims) > 1 else None


def _optimize_one(args) -> tuple:
    sc, n, table, horizon, simulate = args
    s = sc.with_(population={**sc.population, "n": n}, horizon_slots=horizon)
    pop = s.build_population()
    op = optimal_tau(pop, s.timing())
    if not simulate:
        return s.id, n, s.access_mode, op.s_max / MBPS, None, None, None, None
    row = lookup(table, n, AccessMode(s.access_mode))
    tuned = BackoffParams(row.cw_min, max(row.r_app, 1.0), row.b)
    offline = simulate_one((s, None, {"backoff": tuned})).throughput_bps / MBPS
    standard = simulate_one((s, None, {})).throughput_bps / MBPS
    dcf = simulate_one((s, None, {"strategy": "dcf"})).throughput_bps / MBPS
    return s.id, n, s.access_mode, op.s_max / MBPS, offline, standard, dcf, offline / standard - 1


def _sweep_one(args) -> list[tuple]:
    sc, axis, value, strategy, sources = args
    rows = []
    if axis == "tau":
        pop = sc.build_population()
        s = throughput_at_tau(value, pop.N, pop.dist, sc.timing())
        return [(sc.id, axis, value, strategy, "analytic", s / MBPS, None, None, None)]
    if axis == "n":
        s = sc.with_(population={**sc.population, "n": int(value)})
    elif axis == "cw_min":
        s = sc.with_(backoff={**sc.backoff, "cw_min": int(value)})
    else:
        s = sc.with_(packet_bytes=float(value))
    s = s.with_(strategy=strategy)
    if "analytic" in sources and strategy == "rdcf":
        r = analytic_report(s)
        rows.append((sc.id, axis, value, strategy, "analytic", r.throughput_bps / MBPS, r.p_idle,
                     r.collision_probability, r.collision_cost))
    if "simulated" in sources:
        r = simulate_one((s, None, {}))
        rows.append((sc.id, axis, value, strategy, "simulated", r.throughput_bps / MBPS, r.p_idle,
                     r.collision_probability, r.collision_cost))
    if "optimum" in sources and strategy == "rdcf":
        op = optimal_tau(s.build_population(), s.timing())
        rows.append((sc.id, axis, value, strategy, "optimum", op.s_max / MBPS, None, None, None))
    return rows


# --- commands ---------------------------------------------------------------

def cmd_analyze(scenarios: list[ScenarioConfig], args, out) -> int:
    reports = fan_out(analytic_report, scenarios, args.jobs)
    rows = [report_row(sc.id, "analytic", r) for sc, r in zip(scenarios, reports)]
    _emit(ReportRow.header(), [r.values() for r in rows], out, args.format)
    return EXIT_OK


def cmd_simulate(scenarios: list[ScenarioConfig], args, out) -> int:
    results = fan_out(simulate_one, [(sc, None, {}) for sc in scenarios], args.jobs)
    rows = [report_row(sc.id, "simulated", r) for sc, r in zip(scenarios, results)]
    _emit(ReportRow.header(), [r.values() for r in rows], out, args.format)
    return EXIT_OK


def cmd_validate(scenarios: list[ScenarioConfig], args, out) -> int:
    tasks = [(sc, [sc.seed + k for k in range(args.replicas)]) for sc in scenarios]
    rows, failed = [], False
    for sc, S, A, spread in fan_out(_validate_one, tasks, args.jobs):
        # E is derived from the printed S and A so the columns stay self-consistent
        S_txt, A_txt = fmt(S), fmt(A)
        E = abs(float(S_txt) - float(A_txt)) / float(A_txt)
        ok = E <= GATE
        failed |= sc.gate and not ok
        rows.append((sc.id, sc.build_population().N, sc.access_mode, S_txt, A_txt, E, sc.gate, ok,
                     spread))
    _emit(VALIDATE_HEADER, rows, out, args.format)
    for r in rows:
        if not r[7]:
            tag = "" if r[6] else " (not gated)"
            print(f"E > {GATE:.1%} for scenario {r[0]!r}{tag}", file=sys.stderr)
    return EXIT_GATE if failed else EXIT_OK


def parse_values(text: str) -> list[float]:
    """``a,b,c`` or ``start:stop:step`` (stop inclusive)."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0:
                raise ValueError
            vals = list(np.arange(start, stop + step / 2, step))
        else:
            vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse value list {text!r}") from None
    if not vals:
        raise ConfigError(f"empty value list {text!r}")
    return [int(v) if float(v).is_integer() else float(v) for v in vals]


def cmd_optimize(scenarios: list[ScenarioConfig], args, out) -> int:
    homog = [sc for sc in scenarios if sc.population["kind"] == "homogeneous"]
    if len(homog) != len(scenarios):
        raise ConfigError("optimize needs homogeneous scenarios")
    table: list[BackoffTableRow] = []
    plan = []
    for sc in scenarios:
        ns = parse_values(args.n_range) if args.n_range else [sc.population["n"]]
        ns = [int(n) for n in ns]
        pop = sc.build_population()
        rows = build_offline_table(ns, pop.dist, sc.timing(), b=sc.backoff["b"])
        table.extend(rows)
        plan.extend((sc, n, rows, sc.horizon_slots, not args.no_sim) for n in ns)
    out.write(table_to_csv(table))
    comparison = fan_out(_optimize_one, plan, args.jobs)
    if args.report:
        with open(args.report, "w") as fh:
            write_csv(COMPARE_HEADER, comparison, fh)
    else:
        write_text(COMPARE_HEADER, comparison, sys.stderr)
    return EXIT_OK


def cmd_sweep(scenarios: list[ScenarioConfig], args, out) -> int:
    axis = args.axis
    values = parse_values(args.values)
    strategies = [MacStrategy(s).value for s in args.strategies.split(",")]
    sources = set(args.sources.split(","))
    if sources - {"analytic", "simulated", "optimum"}:
        raise ConfigError(f"unknown source(s) {sorted(sources - {'analytic', 'simulated', 'optimum'})}")
    for sc in scenarios:
        kind = sc.population["kind"]
        if axis == "tau" and (kind != "homogeneous" or strategies != ["rdcf"]):
            raise ConfigError(f"axis tau needs a homogeneous rdcf scenario ({sc.id!r})")
        if axis == "tau" and any(not 0 < v <= 1 for v in values):
            raise ConfigError("axis tau values must lie in (0, 1]")
        if axis == "n" and kind != "homogeneous":
            raise ConfigError(f"axis n needs a homogeneous scenario ({sc.id!r})")
        if "optimum" in sources and kind != "homogeneous":
            raise ConfigError(f"source optimum needs a homogeneous scenario ({sc.id!r})")
    tasks = [(sc, axis, v, st, sources) for sc in scenarios for v in values for st in strategies]
    rows = [r for chunk in fan_out(_sweep_one, tasks, args.jobs) for r in chunk]
    _emit(SWEEP_HEADER, rows, out, args.format)
    return EXIT_OK


def _emit(header, rows, out, form: str) -> None:
    (write_text if form == "text" else write_csv)(header, rows, out)


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "validate": cmd_validate,
            "optimize": cmd_optimize, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="scenario JSON file")
    common.add_argument("--seed", type=int, help="override every scenario's seed")
    common.add_argument("--horizon", type=int, help="generic slots per simulation run")
    common.add_argument("--jobs", type=int, default=1, help="concurrent scenario runs")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--convention", choices=["eq1", "eq11"],
                        help="mini-slot ordering: eq1 high rate first, eq11 low rate first")
    common.add_argument("--format", choices=["csv", "text"], default="csv")

    p = argparse.ArgumentParser(prog="rdcf", description="Rate-aware DCF analysis and simulation.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="analytic throughput per scenario")
    sub.add_parser("simulate", parents=[common], help="simulated throughput per scenario")
    v = sub.add_parser("validate", parents=[common], help="paired analytic/simulated report")
    v.add_argument("--replicas", type=int, default=1, help="independent seeds per scenario")
    o = sub.add_parser("optimize", parents=[common], help="offline backoff table and comparison")
    o.add_argument("--n-range", help="network sizes, a,b,c or start:stop:step")
    o.add_argument("--report", help="comparison CSV path (default: text on stderr)")
    o.add_argument("--no-sim", action="store_true", help="skip the simulated comparison columns")
    s = sub.add_parser("sweep", parents=[common], help="long-format CSV for plotting")
    s.add_argument("--axis", choices=SWEEP_AXES, required=True)
    s.add_argument("--values", required=True, help="a,b,c or start:stop:step")
    s.add_argument("--strategies", default="rdcf", help="comma list of rdcf,dcf,oar_txop,remedy")
    s.add_argument("--sources", default="analytic,simulated", help="comma list of analytic,simulated,optimum")
    return p


def apply_overrides(scenarios: list[ScenarioConfig], args) -> list[ScenarioConfig]:
    changes = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed: must be an unsigned 64-bit integer")
        changes["seed"] = args.seed
    if args.horizon is not None:
        if args.horizon < 1:
            raise ConfigError("--horizon: must be positive")
        changes["horizon_slots"] = args.horizon
    if args.convention is not None:
        changes["mini_slot_convention"] = args.convention
    if args.jobs < 1:
        raise ConfigError("--jobs: must be at least 1")
    if getattr(args, "replicas", 1) < 1:
        raise ConfigError("--replicas: must be at least 1")
    return [sc.with_(**changes) for sc in scenarios]


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenarios = apply_overrides(load_config(args.config), args)
        buf = io.StringIO()
        code = COMMANDS[args.command](scenarios, args, buf)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ScenarioConvergenceError as e:
        print(f"error: solver did not converge: {e}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return code


if __name__ == "__main__":
    sys.exit(main())
