"""Scenario configuration: YAML in, validated dataclasses out.

Unknown keys anywhere are errors.  The schema is documented in
``docs/config.md``; :func:`scenario_to_dict` gives the normalized form whose
digest is stored with every generated dataset.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .agents import BuilderConfig, Schedule, SearcherConfig, UserFlowConfig
from .model import PoolState, TokenPair, config_digest
from .units import parse_units


class ConfigError(ValueError):
    """Invalid scenario configuration; ``field`` is the dotted path at fault."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class RelayConfig:
    relay_id: str = "relay"
    delay_median: float = 0.76
    delay_p75: float = 1.5
    optimistic_prob: float = 0.038
    broadcast_interval: float = 0.25
    broadcast_latency: float = 0.05

    def __post_init__(self) -> None:
        if self.delay_median < 0 or self.delay_p75 < self.delay_median:
            raise ValueError("relay delays need 0 <= delay_median <= delay_p75")
        if not 0.0 <= self.optimistic_prob <= 1.0:
            raise ValueError("relay.optimistic_prob must lie in [0, 1]")
        if self.broadcast_interval <= 0:
            raise ValueError("relay.broadcast_interval must be positive")


@dataclass(frozen=True)
class PriceSource:
    """Either a CSV file or GBM parameters for one pair."""

    file: str | None = None
    start_price: float | None = None
    volatility: float = 0.0
    drift: float = 0.0
    seed_offset: int = 0

    def __post_init__(self) -> None:
        if (self.file is None) == (self.start_price is None):
            raise ValueError("price source needs exactly one of 'file' or 'gbm'")


@dataclass(frozen=True)
class Flags:
    include_failed: bool = False
    weighted_aggregation: bool = False
    cex_fee_bps: float = 0.0
    cex_impact: float = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    slot_count: int
    relay: RelayConfig
    builders: tuple[BuilderConfig, ...]
    searchers: tuple[SearcherConfig, ...]
    user_flow: UserFlowConfig
    pools: tuple[PoolState, ...]
    prices: Mapping[str, PriceSource] = field(default_factory=dict)
    proposer_request_time: float = 12.0
    first_slot: int = 0
    skipped_slots: tuple[int, ...] = ()
    flags: Flags = Flags()
    base_dir: str = "."  # where relative price files resolve; not part of the digest

    @property
    def builder_ids(self) -> list[str]:
        return [b.builder_id for b in self.builders]

    @property
    def digest(self) -> str:
        return config_digest(scenario_to_dict(self))

    def builder(self, builder_id: str) -> BuilderConfig:
        for b in self.builders:
            if b.builder_id == builder_id:
                return b
        raise KeyError(builder_id)


# -- parsing ------------------------------------------------------------------


def _check_keys(d: Any, allowed: set[str], where: str, required: set[str] = frozenset()) -> None:
    if not isinstance(d, Mapping):
        raise ConfigError(where, f"expected a mapping, got {type(d).__name__}")
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{where}.{k}" if where else str(k), "unknown key")
    for k in required:
        if k not in d:
            raise ConfigError(f"{where}.{k}" if where else k, "required key missing")


def _fields(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _build(cls, d: Mapping, where: str, convert: Mapping[str, Any] = {}, exclude=()):
    allowed = _fields(cls) - set(exclude)
    _check_keys(d, allowed, where)
    kwargs = {}
    for k, v in d.items():
        try:
            kwargs[k] = convert[k](v) if k in convert else v
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as e:
            raise ConfigError(f"{where}.{k}", str(e)) from None
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(where, str(e)) from None


def _schedule(v) -> Schedule:
    if isinstance(v, (int, float)):
        return Schedule.constant(float(v))
    return Schedule.from_list(v)


def _amount(v) -> int:
    return parse_units(str(v))


def _parse_pool(d, where) -> PoolState:
    _check_keys(d, {"pool_id", "pair", "reserve_base", "reserve_quote", "fee_rate"}, where,
                {"pool_id", "pair", "reserve_base", "reserve_quote", "fee_rate"})
    try:
        pool = PoolState(str(d["pool_id"]), TokenPair.parse(str(d["pair"])), _amount(d["reserve_base"]),
                         _amount(d["reserve_quote"]), float(d["fee_rate"]))
    except (TypeError, ValueError) as e:
        raise ConfigError(where, str(e)) from None
    if pool.reserve_base <= 0 or pool.reserve_quote <= 0:
        raise ConfigError(f"{where}.reserve_base", "reserves must be positive")
    if not 0.0 <= pool.fee_rate < 0.1:
        raise ConfigError(f"{where}.fee_rate", "fee_rate must lie in [0, 0.1)")
    return pool


def _parse_price(d, where) -> PriceSource:
    _check_keys(d, {"file", "gbm"}, where)
    if "gbm" in d:
        g = d["gbm"]
        _check_keys(g, {"start_price", "volatility", "drift", "seed_offset"}, f"{where}.gbm", {"start_price"})
        if "file" in d:
            raise ConfigError(where, "give either 'file' or 'gbm', not both")
        return _build(PriceSource, g, f"{where}.gbm")
    if "file" not in d:
        raise ConfigError(where, "price source needs 'file' or 'gbm'")
    return PriceSource(file=str(d["file"]))


def _unique(ids: list[str], where: str) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise ConfigError(where, f"duplicate id {i!r}")
        seen.add(i)


def parse_scenario(raw: Mapping, base_dir: str | Path = ".") -> ScenarioConfig:
    top = {"seed", "slot_count", "relay", "builders", "searchers", "user_flow", "pools", "prices",
           "proposer_request_time", "first_slot", "skipped_slots", "flags"}
    _check_keys(raw, top, "", {"seed", "slot_count", "builders", "pools"})
    if not isinstance(raw["seed"], int) or isinstance(raw["seed"], bool):
        raise ConfigError("seed", "seed must be an integer")
    if not isinstance(raw["slot_count"], int) or raw["slot_count"] < 0:
        raise ConfigError("slot_count", "slot_count must be a non-negative integer")

    relay = _build(RelayConfig, raw.get("relay", {}), "relay")
    pools = tuple(_parse_pool(p, f"pools[{i}]") for i, p in enumerate(raw["pools"] or []))
    _unique([p.pool_id for p in pools], "pools.pool_id")

    builders = tuple(
        _build(BuilderConfig, b, f"builders[{i}]", {
            "retained": _schedule,
            "access": lambda v: frozenset(v),
            "relay_latency": lambda v: {str(k): float(x) for k, x in v.items()},
        })
        for i, b in enumerate(raw["builders"] or [])
    )
    builder_ids = [b.builder_id for b in builders]
    _unique(builder_ids, "builders.builder_id")
    if not builders:
        raise ConfigError("builders", "at least one builder is required")

    searchers = tuple(
        _build(SearcherConfig, s, f"searchers[{i}]", {
            "risk": _schedule,
            "also_submits_to": lambda v: frozenset(v),
            "pools": tuple,
        })
        for i, s in enumerate(raw.get("searchers") or [])
    )
    _unique([s.bot_id for s in searchers], "searchers.bot_id")
    _unique([s.bot_id for s in searchers] + builder_ids, "ids")
    pool_ids = {p.pool_id for p in pools}
    for i, s in enumerate(searchers):
        for b in (s.integrated_with, *s.also_submits_to):
            if b not in builder_ids:
                raise ConfigError(f"searchers[{i}].integrated_with", f"unknown builder {b!r}")
        for p in s.pools:
            if p not in pool_ids:
                raise ConfigError(f"searchers[{i}].pools", f"unknown pool {p!r}")

    user_flow = _build(UserFlowConfig, raw.get("user_flow", {}), "user_flow", {
        "late_skew": dict, "exclusive_weights": dict, "swap_pools": tuple,
    })
    for b in user_flow.exclusive_weights:
        if b not in builder_ids:
            raise ConfigError("user_flow.exclusive_weights", f"unknown builder {b!r}")

    prices = {str(k): _parse_price(v, f"prices.{k}") for k, v in (raw.get("prices") or {}).items()}
    for name in prices:
        try:
            TokenPair.parse(name)
        except ValueError as e:
            raise ConfigError(f"prices.{name}", str(e)) from None
    for p in pools:
        if searchers and p.pair.name not in prices and p.pair.inverted().name not in prices:
            raise ConfigError("prices", f"no price source for pool pair {p.pair.name}")

    flags = _build(Flags, raw.get("flags", {}), "flags")
    req = float(raw.get("proposer_request_time", 12.0))
    if not 0.0 < req <= 12.0:
        raise ConfigError("proposer_request_time", "must lie in (0, 12]")
    return ScenarioConfig(
        seed=raw["seed"], slot_count=raw["slot_count"], relay=relay, builders=builders,
        searchers=searchers, user_flow=user_flow, pools=pools, prices=prices,
        proposer_request_time=req, first_slot=int(raw.get("first_slot", 0)),
        skipped_slots=tuple(int(s) for s in raw.get("skipped_slots") or ()), flags=flags,
        base_dir=str(base_dir),
    )


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ConfigError("<file>", f"not valid YAML: {e}") from None
    if raw is None:
        raise ConfigError("<file>", "empty config")
    return parse_scenario(raw, path.parent)


# -- normalized form ------------------------------------------------------------


def _plain(obj: Any) -> Any:
    if isinstance(obj, Schedule):
        return obj.to_list()
    if isinstance(obj, frozenset):
        return sorted(obj)
    if isinstance(obj, tuple):
        return [_plain(x) for x in obj]
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in sorted(obj.items())}
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    return obj


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    out = {
        "seed": cfg.seed,
        "slot_count": cfg.slot_count,
        "first_slot": cfg.first_slot,
        "proposer_request_time": cfg.proposer_request_time,
        "skipped_slots": list(cfg.skipped_slots),
        "relay": _plain(cfg.relay),
        "builders": [_plain(b) for b in cfg.builders],
        "searchers": [_plain(s) for s in cfg.searchers],
        "user_flow": _plain(cfg.user_flow),
        "pools": [p.to_dict() for p in cfg.pools],
        "prices": {k: _price_plain(v) for k, v in sorted(cfg.prices.items())},
        "flags": _plain(cfg.flags),
    }
    return out


def _price_plain(p: PriceSource) -> dict:
    if p.file is not None:
        return {"file": p.file}
    return {"gbm": {"start_price": p.start_price, "volatility": p.volatility, "drift": p.drift,
                    "seed_offset": p.seed_offset}}


def scenario_from_dict(d: Mapping, base_dir: str | Path = ".") -> ScenarioConfig:
    """Parse the normalized form back (it is itself a valid config)."""
    return parse_scenario(d, base_dir)
