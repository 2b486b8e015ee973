"""Domain types shared by every part of the simulator.

Types are frozen dataclasses.  Each has ``to_dict``/``from_dict`` for the JSON
interchange format; token and ETH amounts travel as canonical decimal strings
(see :mod:`pbsim.units`), times as JSON floats.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Mapping

from .units import format_units, parse_units

SLOT_SECONDS = 12.0


class TxKind(str, Enum):
    USER_SWAP = "UserSwap"
    SEARCHER_SWAP = "SearcherSwap"
    TRANSFER = "Transfer"
    FAILING = "Failing"


class Direction(str, Enum):
    BASE_FOR_QUOTE = "BaseForQuote"
    QUOTE_FOR_BASE = "QuoteForBase"

    @property
    def opposite(self) -> "Direction":
        if self is Direction.BASE_FOR_QUOTE:
            return Direction.QUOTE_FOR_BASE
        return Direction.BASE_FOR_QUOTE


class ChannelKind(str, Enum):
    PUBLIC = "Public"
    PRIVATE = "Private"
    EXCLUSIVE = "Exclusive"


def short_hash(*parts: Any) -> str:
    """Opaque hash-like identifier.  Not Ethereum-compatible, only stable."""
    payload = json.dumps(parts, separators=(",", ":"), sort_keys=True, default=str)
    return "0x" + hashlib.sha256(payload.encode()).hexdigest()[:32]


def dumps(obj: Any) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=True)


@dataclass(frozen=True)
class TokenPair:
    """Prices on a pair are quoted as ``quote`` per ``base``.

    Pools in generated scenarios always put the non-ETH token in ``base`` and
    WETH in ``quote``, so every price is in ETH and every volume is in units of
    the other token.
    """

    base: str
    quote: str

    def __post_init__(self) -> None:
        if not self.base or not self.quote:
            raise ValueError("token symbols must be non-empty")
        if self.base == self.quote:
            raise ValueError(f"base and quote must differ, got {self.base!r} twice")

    @property
    def name(self) -> str:
        return f"{self.base}-{self.quote}"

    def inverted(self) -> "TokenPair":
        return TokenPair(self.quote, self.base)

    @classmethod
    def parse(cls, name: str) -> "TokenPair":
        base, sep, quote = name.partition("-")
        if not sep:
            raise ValueError(f"pair name {name!r} is not of the form BASE-QUOTE")
        return cls(base, quote)

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class PoolState:
    """Constant-product pool.  Reserves are integer token units (1e-18)."""

    pool_id: str
    pair: TokenPair
    reserve_base: int
    reserve_quote: int
    fee_rate: float

    def to_dict(self) -> dict:
        return {
            "pool_id": self.pool_id,
            "pair": self.pair.name,
            "reserve_base": format_units(self.reserve_base),
            "reserve_quote": format_units(self.reserve_quote),
            "fee_rate": self.fee_rate,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PoolState":
        return cls(
            pool_id=d["pool_id"],
            pair=TokenPair.parse(d["pair"]),
            reserve_base=parse_units(d["reserve_base"]),
            reserve_quote=parse_units(d["reserve_quote"]),
            fee_rate=float(d["fee_rate"]),
        )


@dataclass(frozen=True)
class Channel:
    kind: ChannelKind
    builders: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind is ChannelKind.PUBLIC and self.builders:
            raise ValueError("public channel takes no builder list")
        if self.kind is ChannelKind.EXCLUSIVE and len(self.builders) != 1:
            raise ValueError("exclusive channel names exactly one builder")
        if self.kind is ChannelKind.PRIVATE and not self.builders:
            raise ValueError("private channel needs at least one builder")

    @classmethod
    def public(cls) -> "Channel":
        return cls(ChannelKind.PUBLIC)

    @classmethod
    def private(cls, builders: Iterable[str]) -> "Channel":
        return cls(ChannelKind.PRIVATE, tuple(sorted(set(builders))))

    @classmethod
    def exclusive(cls, builder: str) -> "Channel":
        return cls(ChannelKind.EXCLUSIVE, (builder,))

    def to_dict(self) -> dict:
        if self.kind is ChannelKind.PUBLIC:
            return {"kind": self.kind.value}
        if self.kind is ChannelKind.EXCLUSIVE:
            return {"kind": self.kind.value, "builder": self.builders[0]}
        return {"kind": self.kind.value, "builders": list(self.builders)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Channel":
        kind = ChannelKind(d["kind"])
        if kind is ChannelKind.PUBLIC:
            return cls.public()
        if kind is ChannelKind.EXCLUSIVE:
            return cls.exclusive(d["builder"])
        return cls(kind, tuple(d["builders"]))


@dataclass(frozen=True)
class SwapSpec:
    pool_id: str
    direction: Direction
    amount_in: int
    min_amount_out: int

    def to_dict(self) -> dict:
        return {
            "pool_id": self.pool_id,
            "direction": self.direction.value,
            "amount_in": format_units(self.amount_in),
            "min_amount_out": format_units(self.min_amount_out),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SwapSpec":
        return cls(
            pool_id=d["pool_id"],
            direction=Direction(d["direction"]),
            amount_in=parse_units(d["amount_in"]),
            min_amount_out=parse_units(d["min_amount_out"]),
        )


def logical_id_for(origin: str, swap: SwapSpec | None, slot_id: int, created_at: float) -> str:
    """Identity of "the same transaction" regardless of the fee it offers."""
    return short_hash("logical", origin, swap.to_dict() if swap else None, slot_id, created_at)


@dataclass(frozen=True)
class Transaction:
    """A user or searcher action.

    ``slot_id`` is the slot in which the transaction was created (``created_at``
    is relative to that slot's start).  ``fee_recipient_guard`` names the only
    builder in whose blocks the transaction can execute, if any.
    """

    tx_id: str
    logical_id: str
    origin: str
    kind: TxKind
    swap: SwapSpec | None
    fee_offers: Mapping[str, int]
    channel: Channel
    created_at: float
    slot_id: int = 0
    fee_recipient_guard: str | None = None

    @classmethod
    def create(
        cls,
        origin: str,
        kind: TxKind,
        fee_offers: Mapping[str, int],
        channel: Channel,
        slot_id: int,
        created_at: float,
        swap: SwapSpec | None = None,
        fee_recipient_guard: str | None = None,
        nonce: int = 0,
    ) -> "Transaction":
        logical = logical_id_for(origin, swap, slot_id, created_at)
        offers = dict(sorted(fee_offers.items()))
        tx_id = short_hash(
            "tx", logical, {k: str(v) for k, v in offers.items()}, channel.to_dict(),
            fee_recipient_guard, nonce,
        )
        return cls(tx_id, logical, origin, kind, swap, offers, channel, created_at,
                   slot_id, fee_recipient_guard)

    @property
    def abs_time(self) -> float:
        return self.slot_id * SLOT_SECONDS + self.created_at

    def fee_to(self, builder_id: str) -> int:
        return self.fee_offers.get(builder_id, 0)

    def to_dict(self) -> dict:
        return {
            "tx_id": self.tx_id,
            "logical_id": self.logical_id,
            "origin": self.origin,
            "kind": self.kind.value,
            "swap": self.swap.to_dict() if self.swap else None,
            "fee_offers": {k: format_units(v) for k, v in self.fee_offers.items()},
            "channel": self.channel.to_dict(),
            "created_at": self.created_at,
            "slot_id": self.slot_id,
            "fee_recipient_guard": self.fee_recipient_guard,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Transaction":
        return cls(
            tx_id=d["tx_id"],
            logical_id=d["logical_id"],
            origin=d["origin"],
            kind=TxKind(d["kind"]),
            swap=SwapSpec.from_dict(d["swap"]) if d.get("swap") else None,
            fee_offers={k: parse_units(v) for k, v in d["fee_offers"].items()},
            channel=Channel.from_dict(d["channel"]),
            created_at=float(d["created_at"]),
            slot_id=int(d.get("slot_id", 0)),
            fee_recipient_guard=d.get("fee_recipient_guard"),
        )


@dataclass(frozen=True)
class BidTransaction:
    """The block-terminal payment to the proposer.  Never counted as a transaction."""

    builder_id: str
    amount: int
    slot_id: int

    def __post_init__(self) -> None:
        if self.amount < 0:
            raise ValueError("bid amount must be non-negative")


def block_id_for(slot_id: int, builder_id: str, txs: Iterable[str], bid: int) -> str:
    return short_hash("block", slot_id, builder_id, list(txs), str(bid))


@dataclass(frozen=True)
class BlockSubmission:
    block_id: str
    slot_id: int
    builder_id: str
    received_at: float
    made_available_at: float
    optimistic: bool
    txs: tuple[str, ...]
    bid: int
    revenue: int

    @classmethod
    def create(cls, slot_id: int, builder_id: str, received_at: float, txs: Iterable[str],
               bid: int, revenue: int) -> "BlockSubmission":
        txs = tuple(txs)
        return cls(block_id_for(slot_id, builder_id, txs, bid), slot_id, builder_id,
                   received_at, received_at, False, txs, bid, revenue)

    @property
    def bid_tx(self) -> BidTransaction:
        return BidTransaction(self.builder_id, self.bid, self.slot_id)

    @property
    def retained(self) -> int:
        return self.revenue - self.bid

    def to_dict(self) -> dict:
        return {
            "block_id": self.block_id,
            "slot_id": self.slot_id,
            "builder_id": self.builder_id,
            "received_at": self.received_at,
            "made_available_at": self.made_available_at,
            "optimistic": self.optimistic,
            "txs": list(self.txs),
            "bid": format_units(self.bid),
            "revenue": format_units(self.revenue),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "BlockSubmission":
        return cls(
            block_id=d["block_id"],
            slot_id=int(d["slot_id"]),
            builder_id=d["builder_id"],
            received_at=float(d["received_at"]),
            made_available_at=float(d["made_available_at"]),
            optimistic=bool(d["optimistic"]),
            txs=tuple(d["txs"]),
            bid=parse_units(d["bid"]),
            revenue=parse_units(d["revenue"]),
        )


@dataclass(frozen=True)
class MempoolEvent:
    tx_id: str
    channel_observation: str
    timestamp: float

    def to_dict(self) -> dict:
        return {"tx_id": self.tx_id, "channel_observation": self.channel_observation,
                "timestamp": self.timestamp}

    @classmethod
    def from_dict(cls, d: Mapping) -> "MempoolEvent":
        return cls(d["tx_id"], d["channel_observation"], float(d["timestamp"]))


@dataclass(frozen=True)
class SlotTrace:
    """Everything observable about one bidding cycle.

    ``winning_block`` is ``None`` for a skipped slot (no auction held).
    ``transactions`` lists the ids of every transaction visible to at least one
    builder during the slot; the transactions themselves live in the dataset's
    transaction table.
    """

    slot_id: int
    winning_block: str | None
    submissions: tuple[BlockSubmission, ...]
    transactions: tuple[str, ...]
    mempool_events: tuple[MempoolEvent, ...]
    pool_states_at_slot_start: Mapping[str, PoolState]

    def submission(self, block_id: str) -> BlockSubmission:
        for s in self.submissions:
            if s.block_id == block_id:
                return s
        raise KeyError(block_id)

    @property
    def winner(self) -> BlockSubmission | None:
        if self.winning_block is None:
            return None
        return self.submission(self.winning_block)

    def to_dict(self) -> dict:
        return {
            "slot_id": self.slot_id,
            "winning_block": self.winning_block,
            "submissions": [s.to_dict() for s in self.submissions],
            "transactions": list(self.transactions),
            "mempool_events": [e.to_dict() for e in self.mempool_events],
            "pool_states_at_slot_start": {
                k: v.to_dict() for k, v in self.pool_states_at_slot_start.items()
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SlotTrace":
        return cls(
            slot_id=int(d["slot_id"]),
            winning_block=d.get("winning_block"),
            submissions=tuple(BlockSubmission.from_dict(s) for s in d["submissions"]),
            transactions=tuple(d["transactions"]),
            mempool_events=tuple(MempoolEvent.from_dict(e) for e in d["mempool_events"]),
            pool_states_at_slot_start={
                k: PoolState.from_dict(v) for k, v in d["pool_states_at_slot_start"].items()
            },
        )


@dataclass
class Dataset:
    """Ordered slot traces plus the shared transaction table and CEX traces.

    ``metadata`` carries ``seed``, ``config_digest``, the normalized ``config``
    and an ``actors`` map (searcher id -> integrated builder) used by analytics.
    """

    slots: list[SlotTrace]
    transactions: dict[str, Transaction]
    price_traces: dict[str, Any] = field(default_factory=dict)  # pair name -> PriceTrace
    metadata: dict[str, Any] = field(default_factory=dict)

    def slot(self, slot_id: int) -> SlotTrace:
        for s in self.slots:
            if s.slot_id == slot_id:
                return s
        raise KeyError(f"no slot {slot_id} in dataset")

    @property
    def searchers(self) -> dict[str, str]:
        """bot id -> integrated builder id."""
        actors = self.metadata.get("actors", {})
        return {k: v["integrated_with"] for k, v in actors.get("searchers", {}).items()}

    def find_block(self, block_id: str) -> tuple[SlotTrace, BlockSubmission]:
        for s in self.slots:
            for b in s.submissions:
                if b.block_id == block_id:
                    return s, b
        raise KeyError(block_id)


# -- validation -------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str
    ref: str
    message: str

    def __str__(self) -> str:
        return f"{self.code} [{self.ref}]: {self.message}"


def config_digest(config: Mapping) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _tx_violations(tx: Transaction) -> list[Violation]:
    out = []
    if not tx.fee_offers:
        out.append(Violation("empty_fee_offers", tx.tx_id, "transaction offers no fee to any builder"))
    if any(v < 0 for v in tx.fee_offers.values()):
        out.append(Violation("negative_fee", tx.tx_id, "fee offer below zero"))
    if tx.channel.kind is ChannelKind.EXCLUSIVE and set(tx.fee_offers) != set(tx.channel.builders):
        out.append(Violation("exclusive_fee_keys", tx.tx_id,
                             "exclusive transaction must offer a fee to its builder only"))
    if tx.kind is TxKind.USER_SWAP and len(set(tx.fee_offers.values())) > 1:
        out.append(Violation("user_fee_variant", tx.tx_id, "user swap offers different fees per builder"))
    if tx.kind in (TxKind.USER_SWAP, TxKind.SEARCHER_SWAP) and tx.swap is None:
        out.append(Violation("missing_swap", tx.tx_id, "swap transaction without swap payload"))
    if tx.swap is not None and (tx.swap.amount_in < 0 or tx.swap.min_amount_out < 0):
        out.append(Violation("negative_amount", tx.tx_id, "swap amounts must be non-negative"))
    return out


def validate_dataset(d: Dataset) -> list[Violation]:
    """Check every structural invariant; violations are returned, never raised."""
    out: list[Violation] = []
    for tx_id, tx in d.transactions.items():
        if tx_id != tx.tx_id:
            out.append(Violation("tx_key_mismatch", tx_id, f"table key differs from tx_id {tx.tx_id}"))
        out.extend(_tx_violations(tx))

    # logical_id groups: only tx_id, fee_offers, channel and guard may differ
    by_logical: dict[str, Transaction] = {}
    for tx in d.transactions.values():
        first = by_logical.setdefault(tx.logical_id, tx)
        if first is tx:
            continue
        if (first.origin, first.kind, first.swap, first.created_at, first.slot_id) != (
            tx.origin, tx.kind, tx.swap, tx.created_at, tx.slot_id
        ):
            out.append(Violation("logical_id_conflict", tx.tx_id,
                                 f"shares logical_id with {first.tx_id} but differs in payload"))

    seen_blocks: dict[str, BlockSubmission] = {}
    prev_slot = None
    for slot in d.slots:
        ref = f"slot {slot.slot_id}"
        if prev_slot is not None and slot.slot_id <= prev_slot:
            out.append(Violation("slot_order", ref, f"slot ids not strictly increasing after {prev_slot}"))
        prev_slot = slot.slot_id
        ids = {s.block_id for s in slot.submissions}
        if slot.winning_block is not None and slot.winning_block not in ids:
            out.append(Violation("winner_missing", ref, f"winning block {slot.winning_block} not submitted"))
        for tx_id in slot.transactions:
            if tx_id not in d.transactions:
                out.append(Violation("unknown_tx", ref, f"slot lists unknown transaction {tx_id}"))
        for ev in slot.mempool_events:
            if ev.tx_id not in d.transactions:
                out.append(Violation("unknown_tx", ref, f"mempool event for unknown transaction {ev.tx_id}"))
        for pool in slot.pool_states_at_slot_start.values():
            if pool.reserve_base <= 0 or pool.reserve_quote <= 0 or not 0 <= pool.fee_rate < 1:
                out.append(Violation("bad_pool", pool.pool_id, "non-positive reserve or fee outside [0, 1)"))
        for b in slot.submissions:
            out.extend(_block_violations(b, slot, d))
            prior = seen_blocks.get(b.block_id)
            if prior is not None and (prior.txs, prior.bid, prior.builder_id) != (b.txs, b.bid, b.builder_id):
                out.append(Violation("block_id_reuse", b.block_id, "same block_id for different content"))
            seen_blocks[b.block_id] = b

    meta = d.metadata
    if "config" in meta and "config_digest" in meta and config_digest(meta["config"]) != meta["config_digest"]:
        out.append(Violation("digest_mismatch", "meta", "config digest does not match config"))
    for name, trace in d.price_traces.items():
        ts = trace.timestamps_ms
        if len(ts) and ((ts[1:] <= ts[:-1]).any() or (trace.prices <= 0).any()):
            out.append(Violation("bad_trace", name, "timestamps must increase and prices be positive"))
    return out


def _block_violations(b: BlockSubmission, slot: SlotTrace, d: Dataset) -> list[Violation]:
    out = []
    if b.slot_id != slot.slot_id:
        out.append(Violation("slot_mismatch", b.block_id, f"block claims slot {b.slot_id}"))
    if b.made_available_at < b.received_at:
        out.append(Violation("available_before_received", b.block_id, "made_available_at < received_at"))
    if b.optimistic and b.made_available_at != b.received_at:
        out.append(Violation("optimistic_delay", b.block_id, "optimistic block released after receipt"))
    if b.bid < 0:
        out.append(Violation("negative_bid", b.block_id, "bid below zero"))
    if b.bid > b.revenue:
        out.append(Violation("bid_exceeds_revenue", b.block_id,
                             f"bid {format_units(b.bid)} exceeds revenue {format_units(b.revenue)}"))
    if len(set(b.txs)) != len(b.txs):
        out.append(Violation("duplicate_tx", b.block_id, "transaction appears twice in block"))
    for tx_id in b.txs:
        if tx_id not in d.transactions:
            out.append(Violation("unknown_tx", b.block_id, f"block references unknown transaction {tx_id}"))
    if b.block_id != block_id_for(b.slot_id, b.builder_id, b.txs, b.bid):
        out.append(Violation("block_id_stale", b.block_id, "block_id does not reflect txs and bid"))
    return out


def with_availability(b: BlockSubmission, made_available_at: float, optimistic: bool) -> BlockSubmission:
    return replace(b, made_available_at=made_available_at, optimistic=optimistic)
