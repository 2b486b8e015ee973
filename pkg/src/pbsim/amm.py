"""Constant-product swap execution and whole-block replay.

All arithmetic is on integer token units.  The output of a swap is the floor of
the exact rational result, so rounding always favours the pool.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Mapping

from .model import BlockSubmission, Direction, PoolState, Transaction, TxKind

FEE_DENOM = 10**9


class SwapStatus(str, Enum):
    SUCCESS = "Success"
    REVERTED = "Reverted"
    FAILED = "Failed"


class UnknownTransactionError(KeyError):
    pass


@dataclass(frozen=True)
class SwapOutcome:
    status: SwapStatus
    amount_out: int
    exec_price: float
    new_state: PoolState

    @property
    def ok(self) -> bool:
        return self.status is SwapStatus.SUCCESS


@dataclass(frozen=True)
class ReplayEntry:
    tx_id: str
    position: int
    status: SwapStatus
    amount_in: int = 0
    amount_out: int = 0
    exec_price: float | None = None  # None for non-swaps
    pool_id: str | None = None
    direction: Direction | None = None


@dataclass(frozen=True)
class BlockReplayResult:
    entries: tuple[ReplayEntry, ...]
    final_pools: Mapping[str, PoolState]

    def by_tx(self) -> dict[str, ReplayEntry]:
        return {e.tx_id: e for e in self.entries}


def fee_numerator(fee_rate: float) -> int:
    """``(1 - fee_rate)`` scaled by :data:`FEE_DENOM`; fee tiers resolve to 1e-9."""
    return FEE_DENOM - round(fee_rate * FEE_DENOM)


def _reserves(s: PoolState, direction: Direction) -> tuple[int, int]:
    if direction is Direction.BASE_FOR_QUOTE:
        return s.reserve_base, s.reserve_quote
    return s.reserve_quote, s.reserve_base


def amount_out_for(s: PoolState, direction: Direction, amount_in: int) -> int:
    r_in, r_out = _reserves(s, direction)
    g = fee_numerator(s.fee_rate)
    a = amount_in * g
    return (r_out * a) // (r_in * FEE_DENOM + a)


def amount_in_for(s: PoolState, direction: Direction, amount_out: int) -> int:
    """Smallest input whose output is at least ``amount_out``."""
    r_in, r_out = _reserves(s, direction)
    if amount_out >= r_out:
        raise ValueError("requested output drains the pool")
    if amount_out <= 0:
        return 0
    g = fee_numerator(s.fee_rate)
    num = r_in * amount_out * FEE_DENOM
    den = (r_out - amount_out) * g
    a = -(-num // den)
    while amount_out_for(s, direction, a) < amount_out:
        a += 1
    return a


def quote_marginal_price(s: PoolState) -> float:
    """Fee-exclusive spot price, quote per base."""
    return s.reserve_quote / s.reserve_base


def _exec_price(direction: Direction, amount_in: int, amount_out: int) -> float:
    if direction is Direction.BASE_FOR_QUOTE:
        return amount_out / amount_in
    return amount_in / amount_out


def execute_swap(s: PoolState, direction: Direction, amount_in: int, min_amount_out: int = 0) -> SwapOutcome:
    """Apply one swap.  ``exec_price`` is always quote per base.

    For a zero-size swap the reported price is the fee-inclusive marginal price
    (the limit of ``exec_price`` as the size goes to zero).
    """
    if amount_in < 0:
        raise ValueError("amount_in must be non-negative")
    if s.reserve_base <= 0 or s.reserve_quote <= 0 or not 0 <= s.fee_rate < 1:
        return SwapOutcome(SwapStatus.FAILED, 0, float("nan"), s)
    if amount_in == 0:
        gamma = fee_numerator(s.fee_rate) / FEE_DENOM
        spot = quote_marginal_price(s)
        price = spot * gamma if direction is Direction.BASE_FOR_QUOTE else spot / gamma
        status = SwapStatus.SUCCESS if min_amount_out <= 0 else SwapStatus.REVERTED
        return SwapOutcome(status, 0, price, s)
    out = amount_out_for(s, direction, amount_in)
    if out <= 0:
        # insufficient output, as on-chain routers do
        return SwapOutcome(SwapStatus.REVERTED, 0, float("nan"), s)
    price = _exec_price(direction, amount_in, out)
    if out < min_amount_out:
        return SwapOutcome(SwapStatus.REVERTED, out, price, s)
    if direction is Direction.BASE_FOR_QUOTE:
        new = replace(s, reserve_base=s.reserve_base + amount_in, reserve_quote=s.reserve_quote - out)
    else:
        new = replace(s, reserve_base=s.reserve_base - out, reserve_quote=s.reserve_quote + amount_in)
    return SwapOutcome(SwapStatus.SUCCESS, out, price, new)


def apply_tx(pools: dict[str, PoolState], tx: Transaction, position: int, fee_recipient: str) -> ReplayEntry:
    """Execute ``tx`` against ``pools`` in place and return its log entry."""
    if tx.fee_recipient_guard is not None and tx.fee_recipient_guard != fee_recipient:
        return ReplayEntry(tx.tx_id, position, SwapStatus.FAILED)
    if tx.kind is TxKind.FAILING:
        return ReplayEntry(tx.tx_id, position, SwapStatus.FAILED)
    if tx.swap is None:
        return ReplayEntry(tx.tx_id, position, SwapStatus.SUCCESS)
    sw = tx.swap
    pool = pools.get(sw.pool_id)
    if pool is None:
        raise KeyError(f"swap on unknown pool {sw.pool_id}")
    res = execute_swap(pool, sw.direction, sw.amount_in, sw.min_amount_out)
    if res.ok:
        pools[sw.pool_id] = res.new_state
    return ReplayEntry(tx.tx_id, position, res.status, sw.amount_in, res.amount_out,
                       res.exec_price, sw.pool_id, sw.direction)


def replay_block(pools: Mapping[str, PoolState], block: BlockSubmission,
                 txs: Mapping[str, Transaction]) -> BlockReplayResult:
    """Apply ``block``'s transactions in order on a copy of ``pools``."""
    state = dict(pools)
    entries = []
    for pos, tx_id in enumerate(block.txs):
        try:
            tx = txs[tx_id]
        except KeyError:
            raise UnknownTransactionError(f"block {block.block_id} references unknown tx {tx_id}") from None
        entries.append(apply_tx(state, tx, pos, block.builder_id))
    return BlockReplayResult(tuple(entries), state)
