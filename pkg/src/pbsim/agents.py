"""Behavioural models: users, CEX-DEX searchers and block builders."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .amm import SwapStatus, amount_out_for, apply_tx
from .market import ArbPlan, optimal_arb
from .model import (SLOT_SECONDS, Channel, ChannelKind, Direction, PoolState, SwapSpec,
                    Transaction, TxKind)
from .units import SCALE, to_units

PPB = 10**9


@dataclass(frozen=True)
class Schedule:
    """Piecewise-linear, non-increasing function of within-slot time.

    Flat beyond the first and last knots.
    """

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.times) != len(self.values) or not self.times:
            raise ValueError("schedule needs matching, non-empty knot lists")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("schedule knot times must increase")
        if any(not 0.0 <= v <= 1.0 for v in self.values):
            raise ValueError("schedule values must lie in [0, 1]")
        if any(b > a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("schedule must be non-increasing")

    @classmethod
    def linear(cls, start: float, end: float, t_end: float = SLOT_SECONDS) -> "Schedule":
        return cls((0.0, t_end), (start, end))

    @classmethod
    def constant(cls, value: float) -> "Schedule":
        return cls((0.0,), (value,))

    @property
    def floor(self) -> float:
        return self.values[-1]

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    def to_list(self) -> list[list[float]]:
        return [[t, v] for t, v in zip(self.times, self.values)]

    @classmethod
    def from_list(cls, knots: Sequence[Sequence[float]]) -> "Schedule":
        return cls(tuple(float(k[0]) for k in knots), tuple(float(k[1]) for k in knots))


@dataclass(frozen=True)
class SearcherConfig:
    bot_id: str
    integrated_with: str
    also_submits_to: frozenset[str] = frozenset()
    margin: float = 0.18
    latency: float = 0.05
    quote_interval: float = 0.5
    risk: Schedule = Schedule.linear(0.5, 0.05)
    pools: tuple[str, ...] = ()  # empty: every pool
    min_profit: float = 0.0  # ETH
    slippage: float = 0.001

    def __post_init__(self) -> None:
        if self.margin < 0:
            raise ValueError(f"searcher {self.bot_id}: margin must be non-negative")
        if self.integrated_with in self.also_submits_to:
            raise ValueError(f"searcher {self.bot_id}: also_submits_to repeats the integrated builder")

    @property
    def targets(self) -> tuple[str, ...]:
        return (self.integrated_with, *sorted(self.also_submits_to))

    @property
    def margin_ratio(self) -> Fraction:
        """``1 + margin`` as an exact fraction (decimal reading of the float)."""
        return Fraction(repr(1.0 + self.margin)).limit_denominator(10**6)


@dataclass(frozen=True)
class BuilderConfig:
    builder_id: str
    relay_latency: Mapping[str, float] = field(default_factory=dict)
    resubmit_interval: float = 0.25
    retained: Schedule = Schedule.linear(0.5, 0.02)
    access: frozenset[str] = frozenset({"public", "private"})
    start_offset: float = 0.0
    tx_latency: float = 0.0  # delay before a tx sent to this builder is usable

    def latency_to(self, relay_id: str) -> float:
        return self.relay_latency.get(relay_id, 0.0)


@dataclass(frozen=True)
class UserFlowConfig:
    """Per-slot Poisson arrival rates by channel plus user behaviour knobs.

    ``late_skew`` in [0, 1] tilts a channel's intensity toward the end of the
    slot (linearly, or more sharply for ``late_power`` > 1) while keeping the
    per-slot mean equal to its rate.
    """

    rate_public: float = 0.0
    rate_private: float = 0.0
    rate_exclusive: float = 0.0
    late_skew: Mapping[str, float] = field(default_factory=dict)
    late_power: float = 1.0  # shape of the late ramp, 1 = linear
    transfer_share: float = 0.5
    failing_share: float = 0.0
    swap_size_eth: float = 1.0  # lognormal median
    swap_size_sigma: float = 1.0
    fee_eth: float = 0.001  # lognormal median
    fee_sigma: float = 0.7
    slippage: float = 0.005
    misrouting_prob: float = 0.0
    fallback_cycles: int = 1
    exclusive_weights: Mapping[str, float] = field(default_factory=dict)
    private_share: float = 0.5
    private_stagger: float = 0.0
    ttl_slots: int = 4
    swap_pools: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for name in ("transfer_share", "failing_share", "misrouting_prob", "private_share"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"user_flow.{name} must be a probability, got {v}")
        for name in ("rate_public", "rate_private", "rate_exclusive"):
            if getattr(self, name) < 0:
                raise ValueError(f"user_flow.{name} must be non-negative")
        for ch, s in self.late_skew.items():
            if not 0.0 <= s <= 1.0:
                raise ValueError(f"user_flow.late_skew.{ch} must lie in [0, 1]")
        if self.late_power <= 0:
            raise ValueError("user_flow.late_power must be positive")
        if self.fallback_cycles < 1:
            raise ValueError("user_flow.fallback_cycles must be at least 1")

    def rate(self, channel: str) -> float:
        return getattr(self, f"rate_{channel}")


# -- searchers ---------------------------------------------------------------


def split_fees(base_fee: int, margin_ratio: Fraction) -> tuple[int, int]:
    """Fees to the integrated builder and to any other builder.

    Both are integer multiples of one quantum so their ratio is exactly
    ``margin_ratio``; the integrated fee never exceeds ``base_fee``.
    """
    q = base_fee // margin_ratio.numerator
    return q * margin_ratio.numerator, q * margin_ratio.denominator


def searcher_quote(cfg: SearcherConfig, pool: PoolState, p_cex: float, t: float, target_builder: str,
                   slot_id: int = 0, *, plan: ArbPlan | None = None, cex_fee: float = 0.0,
                   impact: float = 0.0) -> Transaction:
    """The bot's swap offered to ``target_builder`` at within-slot time ``t``.

    The integrated builder is paid the risk-adjusted profit; anyone else gets it
    divided by ``1 + margin``.  Copies for different builders share a logical id.
    """
    if plan is None:
        plan = optimal_arb(pool, p_cex, cex_fee=cex_fee, impact=impact)
    if plan.volume <= 0:
        raise ValueError("no profitable arbitrage to quote")
    rho = cfg.risk(t)
    base_fee = (plan.gross_profit * round((1.0 - rho) * PPB)) // PPB
    fee_int, fee_other = split_fees(base_fee, cfg.margin_ratio)
    expected_out = amount_out_for(pool, plan.direction, plan.amount_in)
    min_out = expected_out - (expected_out * round(cfg.slippage * PPB)) // PPB
    swap = SwapSpec(pool.pool_id, plan.direction, plan.amount_in, min_out)
    integrated = target_builder == cfg.integrated_with
    return Transaction.create(
        origin=cfg.bot_id,
        kind=TxKind.SEARCHER_SWAP,
        fee_offers={target_builder: fee_int if integrated else fee_other},
        channel=Channel.exclusive(target_builder),
        slot_id=slot_id,
        created_at=t,
        swap=swap,
        fee_recipient_guard=target_builder if integrated else None,
    )


def latest_per_stream(txs: Iterable[Transaction]) -> list[Transaction]:
    """Keep only each searcher's newest swap per pool; newer quotes replace older ones."""
    keep: dict[tuple[str, str], Transaction] = {}
    out = []
    for tx in txs:
        if tx.kind is TxKind.SEARCHER_SWAP and tx.swap is not None:
            key = (tx.origin, tx.swap.pool_id)
            cur = keep.get(key)
            if cur is None or (tx.abs_time, tx.tx_id) > (cur.abs_time, cur.tx_id):
                keep[key] = tx
        else:
            out.append(tx)
    return out + list(keep.values())


# -- builders -----------------------------------------------------------------


@dataclass(frozen=True)
class PackResult:
    txs: tuple[str, ...]
    revenue: int


def builder_pack(cfg: BuilderConfig, pending: Iterable[Transaction], pools: Mapping[str, PoolState],
                 *, include_failed: bool = False) -> PackResult:
    """Greedy packing by fee to this builder, keeping only transactions that succeed.

    Fees are collected from successful transactions only.
    """
    bid_id = cfg.builder_id
    order = sorted(pending, key=lambda tx: (-tx.fee_to(bid_id), tx.tx_id))
    state = dict(pools)
    chosen: list[str] = []
    revenue = 0
    for tx in order:
        trial = dict(state) if tx.swap is not None else state
        entry = apply_tx(trial, tx, len(chosen), bid_id)
        if entry.status is SwapStatus.SUCCESS:
            state = trial
            chosen.append(tx.tx_id)
            revenue += tx.fee_to(bid_id)
        elif include_failed:
            chosen.append(tx.tx_id)
    return PackResult(tuple(chosen), revenue)


def builder_bid(cfg: BuilderConfig, revenue: int, t: float) -> int:
    """Bid = revenue * (1 - retained share at ``t``), floored to ETH units."""
    if revenue < 0:
        raise ValueError("revenue must be non-negative")
    kept = round(cfg.retained(t) * PPB)
    return max(0, revenue * (PPB - kept) // PPB)


# -- users --------------------------------------------------------------------


@dataclass(frozen=True)
class UserArrival:
    tx: Transaction
    fallback_after: int | None  # losing cycles before an exclusive tx goes public


def arrival_cdf(u, skew: float, power: float = 1.0):
    """Share of a slot's arrivals before fraction ``u`` of the slot.

    Density ``(1 - skew) + skew * (power + 1) * u**power``; ``power=1`` is a
    linear ramp.
    """
    return (1 - skew) * u + skew * np.power(u, power + 1)


def _expected_in(rate: float, skew: float, a: float, b: float, power: float = 1.0) -> float:
    ua, ub = a / SLOT_SECONDS, b / SLOT_SECONDS
    return rate * float(arrival_cdf(ub, skew, power) - arrival_cdf(ua, skew, power))


def _sample_times(rng: np.random.Generator, n: int, skew: float, a: float, b: float,
                  power: float = 1.0) -> np.ndarray:
    ua, ub = a / SLOT_SECONDS, b / SLOT_SECONDS
    lo_c, hi_c = arrival_cdf(ua, skew, power), arrival_cdf(ub, skew, power)
    c = lo_c + rng.random(n) * (hi_c - lo_c)
    if skew == 0:
        u = c
    elif power == 1.0:
        u = (-(1 - skew) + np.sqrt((1 - skew) ** 2 + 4 * skew * c)) / (2 * skew)
    else:
        # the cdf is strictly increasing, so bisection on [ua, ub] converges
        lo, hi = np.full(n, ua), np.full(n, ub)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = arrival_cdf(mid, skew, power) < c
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        u = 0.5 * (lo + hi)
    return np.sort(u * SLOT_SECONDS)


def user_flow_step(cfg: UserFlowConfig, rng: np.random.Generator, t_start: float = 0.0,
                   t_end: float = SLOT_SECONDS, *, slot_id: int = 0,
                   pools: Mapping[str, PoolState] | None = None,
                   builders: Sequence[str] = ("builder",), private_builders: Sequence[str] | None = None,
                   seq_start: int = 0) -> list[UserArrival]:
    """User transactions arriving in ``[t_start, t_end)`` of a slot, in time order."""
    pools = pools or {}
    swap_pools = [p for p in (cfg.swap_pools or sorted(pools)) if p in pools]
    private_builders = list(private_builders if private_builders is not None else builders)
    excl_names = sorted(cfg.exclusive_weights) or list(builders)
    excl_w = np.array([cfg.exclusive_weights.get(b, 1.0) for b in excl_names], dtype=float)
    excl_w = excl_w / excl_w.sum() if excl_w.sum() > 0 else excl_w

    draws: list[tuple[float, str]] = []
    for channel in ("public", "private", "exclusive"):
        rate = cfg.rate(channel)
        if rate <= 0:
            continue
        skew = cfg.late_skew.get(channel, 0.0)
        n = int(rng.poisson(_expected_in(rate, skew, t_start, t_end, cfg.late_power)))
        draws += [(float(t), channel) for t in _sample_times(rng, n, skew, t_start, t_end, cfg.late_power)]
    draws.sort()

    out = []
    for i, (t, channel) in enumerate(draws):
        seq = seq_start + i
        if channel == "public":
            ch, fee_keys = Channel.public(), list(builders)
        elif channel == "private":
            picked = [b for b in private_builders if rng.random() < cfg.private_share]
            if len(picked) < 2:
                picked = list(rng.choice(private_builders, size=min(2, len(private_builders)), replace=False))
            ch = Channel.private(picked)
            fee_keys = list(ch.builders)
        else:
            b = excl_names[int(rng.choice(len(excl_names), p=excl_w))]
            ch, fee_keys = Channel.exclusive(b), [b]
        fee = to_units(round(cfg.fee_eth * math.exp(cfg.fee_sigma * rng.standard_normal()), 12))
        u = rng.random()
        swap = None
        if u < cfg.failing_share:
            kind = TxKind.FAILING
        elif u < cfg.failing_share + cfg.transfer_share or not swap_pools:
            kind = TxKind.TRANSFER
        else:
            kind = TxKind.USER_SWAP
            pool = pools[swap_pools[int(rng.integers(len(swap_pools)))]]
            direction = Direction.BASE_FOR_QUOTE if rng.random() < 0.5 else Direction.QUOTE_FOR_BASE
            size_eth = cfg.swap_size_eth * math.exp(cfg.swap_size_sigma * rng.standard_normal())
            if direction is Direction.QUOTE_FOR_BASE:
                amount_in = to_units(round(size_eth, 12))
            else:
                amount_in = int(size_eth * SCALE * pool.reserve_base / pool.reserve_quote)
            quoted = amount_out_for(pool, direction, amount_in)
            min_out = quoted - (quoted * round(cfg.slippage * PPB)) // PPB
            swap = SwapSpec(pool.pool_id, direction, amount_in, min_out)
        fallback = None
        if ch.kind is ChannelKind.EXCLUSIVE and rng.random() < cfg.misrouting_prob:
            fallback = cfg.fallback_cycles
        tx = Transaction.create(
            origin=f"user-{slot_id}-{seq}",
            kind=kind,
            fee_offers={k: fee for k in fee_keys},
            channel=ch,
            slot_id=slot_id,
            created_at=t,
            swap=swap,
        )
        out.append(UserArrival(tx, fallback))
    return out
