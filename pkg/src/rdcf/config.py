"""Scenario files: JSON in Mbps / bytes / microseconds, converted to SI here.

A file holds an optional ``defaults`` object merged under every entry of
``scenarios``::

    {
      "defaults": {"access_mode": "basic", "packet_bytes": 2312},
      "scenarios": [
        {"id": "n10", "population": {"kind": "homogeneous", "n": 10, "dist": "equal"}}
      ]
    }
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

from .analytic_model import (FixedRateGroups, General, Homogeneous, Population, RateDistribution,
                             canonical_distribution)
from .phy_timing import (IEEE80211A_RATES_MBPS, AccessMode, BackoffParams, BurstAccounting,
                         BurstPolicy, MacTiming, MiniSlotConvention, PhyParams, RateSet)
from .simulator import MacStrategy, SimConfig

POPULATION_KINDS = ("homogeneous", "fixed_rate", "general")


class ConfigError(ValueError):
    """Invalid scenario input; the message names the offending field."""


@dataclass
class ScenarioConfig:
    id: str
    population: dict
    access_mode: str = "basic"
    rates_mbps: list = field(default_factory=lambda: list(IEEE80211A_RATES_MBPS))
    packet_bytes: float = 2312
    backoff: dict = field(default_factory=lambda: {"cw_min": 16, "r": 2.0, "b": 6})
    strategy: str = "rdcf"
    mini_slot_convention: str = "eq1"
    burst_accounting: str = "per_frame"
    mac_header_at_control_rate: bool = False
    seed: int = 1
    horizon_slots: int = 1_000_000
    gate: bool = True

    # --- derived objects -------------------------------------------------
    def rate_set(self) -> RateSet:
        return RateSet.from_mbps(self.rates_mbps)

    def phy(self) -> PhyParams:
        return PhyParams(mac_header_at_control_rate=self.mac_header_at_control_rate)

    def backoff_params(self) -> BackoffParams:
        b = self.backoff
        return BackoffParams(int(b["cw_min"]), float(b["r"]), int(b["b"]))

    def burst(self) -> BurstPolicy:
        return BurstPolicy(self.packet_bytes * 8, 1, BurstAccounting(self.burst_accounting))

    def timing(self) -> MacTiming:
        return MacTiming(self.rate_set(), self.phy(), self.burst(), AccessMode(self.access_mode),
                         MiniSlotConvention(self.mini_slot_convention))

    def build_population(self) -> Population:
        return build_population(self.population, self.rate_set(), f"{self.id}.population")

    def sim_config(self, seed: int | None = None, horizon: int | None = None, **overrides) -> SimConfig:
        return SimConfig(
            population=self.build_population(),
            strategy=MacStrategy(overrides.pop("strategy", self.strategy)),
            mode=AccessMode(self.access_mode),
            backoff=overrides.pop("backoff", self.backoff_params()),
            burst=self.burst(),
            phy=self.phy(),
            rate_set=self.rate_set(),
            seed=self.seed if seed is None else seed,
            horizon=self.horizon_slots if horizon is None else horizon,
            convention=MiniSlotConvention(self.mini_slot_convention),
            **overrides,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


def build_population(spec: dict, rate_set: RateSet, where: str = "population") -> Population:
    kind = spec.get("kind")
    M = rate_set.M
    try:
        if kind == "homogeneous":
            n = spec["n"]
            if "probs" in spec:
                dist = RateDistribution.normalized(spec["probs"])
            else:
                dist = canonical_distribution(spec.get("dist", "equal"), rate_set)
            if dist.M != M:
                raise ConfigError(f"{where}.probs: {dist.M} entries for {M} rates")
            return Homogeneous(int(n), dist)
        if kind == "fixed_rate":
            sizes = [int(x) for x in spec["group_sizes"]]
            if len(sizes) != M:
                raise ConfigError(f"{where}.group_sizes: {len(sizes)} entries for {M} rates")
            if "n" in spec and int(spec["n"]) != sum(sizes):
                raise ConfigError(f"{where}.group_sizes: sum {sum(sizes)} does not match n={spec['n']}")
            return FixedRateGroups(tuple(sizes))
        if kind == "general":
            rows = tuple(RateDistribution.normalized(r) for r in spec["rows"])
            if any(d.M != M for d in rows):
                raise ConfigError(f"{where}.rows: every row needs {M} entries")
            return General(rows)
    except KeyError as e:
        raise ConfigError(f"{where}: missing field {e.args[0]!r}") from None
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None
    raise ConfigError(f"{where}.kind: expected one of {', '.join(POPULATION_KINDS)}, got {kind!r}")


def _normalize_population(spec: Any, where: str) -> dict:
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: expected an object")
    out = dict(spec)
    kind = out.get("kind")
    if kind == "homogeneous":
        if "n" not in out:
            raise ConfigError(f"{where}: missing field 'n'")
        out["n"] = int(out["n"])
        if "probs" in out:
            out["probs"] = [float(p) for p in out["probs"]]
        else:
            out["dist"] = out.get("dist", "equal")
            if out["dist"] not in ("equal", "proportional", "inverse"):
                raise ConfigError(f"{where}.dist: unknown distribution {out['dist']!r}")
    elif kind == "fixed_rate":
        if "group_sizes" not in out:
            raise ConfigError(f"{where}: missing field 'group_sizes'")
        out["group_sizes"] = [int(x) for x in out["group_sizes"]]
        out.setdefault("n", sum(out["group_sizes"]))
    elif kind == "general":
        if "rows" not in out:
            raise ConfigError(f"{where}: missing field 'rows'")
        out["rows"] = [[float(p) for p in row] for row in out["rows"]]
    return out


_ENUMS = {
    "access_mode": [m.value for m in AccessMode],
    "strategy": [s.value for s in MacStrategy],
    "mini_slot_convention": [c.value for c in MiniSlotConvention],
    "burst_accounting": [b.value for b in BurstAccounting],
}
_FIELDS = set(ScenarioConfig.__dataclass_fields__)


def scenario_from_dict(data: dict, where: str = "scenario") -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(data) - _FIELDS
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(sorted(unknown))}")
    if "id" not in data:
        raise ConfigError(f"{where}: missing field 'id'")
    if "population" not in data:
        raise ConfigError(f"{where}: missing field 'population'")
    where = f"scenario {data['id']!r}"
    for key, allowed in _ENUMS.items():
        if key in data and data[key] not in allowed:
            raise ConfigError(f"{where}.{key}: expected one of {allowed}, got {data[key]!r}")
    args = dict(data)
    args["id"] = str(args["id"])
    args["population"] = _normalize_population(args["population"], f"{where}.population")
    if "backoff" in args:
        b = args["backoff"]
        if not isinstance(b, dict) or set(b) - {"cw_min", "r", "b"}:
            raise ConfigError(f"{where}.backoff: expected keys cw_min, r, b")
        args["backoff"] = {"cw_min": int(b.get("cw_min", 16)), "r": float(b.get("r", 2.0)),
                           "b": int(b.get("b", 6))}
    if "rates_mbps" in args:
        args["rates_mbps"] = [float(r) for r in args["rates_mbps"]]
    for key, cast in (("packet_bytes", float), ("seed", int), ("horizon_slots", int)):
        if key in args:
            try:
                args[key] = cast(args[key])
            except (TypeError, ValueError):
                raise ConfigError(f"{where}.{key}: not a number: {args[key]!r}") from None
    sc = ScenarioConfig(**args)
    validate(sc)
    return sc


def validate(sc: ScenarioConfig) -> None:
    where = f"scenario {sc.id!r}"
    try:
        sc.rate_set()
    except ValueError as e:
        raise ConfigError(f"{where}.rates_mbps: {e}") from None
    try:
        sc.backoff_params()
    except ValueError as e:
        raise ConfigError(f"{where}.backoff: {e}") from None
    if sc.packet_bytes <= 0:
        raise ConfigError(f"{where}.packet_bytes: must be positive")
    if sc.horizon_slots < 1:
        raise ConfigError(f"{where}.horizon_slots: must be positive")
    if not 0 <= sc.seed < 2**64:
        raise ConfigError(f"{where}.seed: must be an unsigned 64-bit integer")
    sc.build_population()


def parse_config(text: str) -> list[ScenarioConfig]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError("top level: expected an object with a 'scenarios' list")
    defaults = data.get("defaults", {})
    if not isinstance(defaults, dict):
        raise ConfigError("defaults: expected an object")
    scenarios = data.get("scenarios")
    if not isinstance(scenarios, list):
        raise ConfigError("scenarios: expected a list")
    if not scenarios:
        raise ConfigError("no scenarios")
    out = []
    for i, entry in enumerate(scenarios):
        if not isinstance(entry, dict):
            raise ConfigError(f"scenarios[{i}]: expected an object")
        out.append(scenario_from_dict({**defaults, **entry}, f"scenarios[{i}]"))
    ids = [s.id for s in out]
    dup = {x for x in ids if ids.count(x) > 1}
    if dup:
        raise ConfigError(f"duplicate scenario id(s): {', '.join(sorted(dup))}")
    return out


def load_config(path: str | Path) -> list[ScenarioConfig]:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    return parse_config(text)


def dump_config(scenarios: list[ScenarioConfig]) -> str:
    return json.dumps({"scenarios": [s.to_dict() for s in scenarios]}, indent=2, sort_keys=True)
