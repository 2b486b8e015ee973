"""Relay and proposer mechanics and the event loop that runs slots end to end."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import norm

from .agents import (PackResult, UserArrival, builder_bid, builder_pack, latest_per_stream,
                     searcher_quote, user_flow_step)
from .amm import replay_block
from .config import RelayConfig, ScenarioConfig, scenario_to_dict
from .market import PriceTrace, generate_gbm_trace, optimal_arb, price_at, read_price_csv
from .model import (SLOT_SECONDS, BlockSubmission, ChannelKind, Dataset, MempoolEvent, PoolState,
                    SlotTrace, TokenPair, Transaction, TxKind, config_digest, with_availability)
from .units import to_units

Z75 = float(norm.ppf(0.75))


class EventKind(IntEnum):
    """Event kinds; the value is the tie-break rank at equal times."""

    TX_ARRIVAL = 0
    SEARCHER_WAKE = 1
    RELAY_RELEASE = 2
    TOP_BID_BROADCAST = 3
    BUILDER_SUBMIT = 4
    PROPOSER_REQUEST = 5
    SLOT_END = 6


@dataclass(order=True)
class AuctionEvent:
    time: float
    kind: EventKind
    seq: int
    payload: Any = field(compare=False, default=None)


class EventQueue:
    def __init__(self) -> None:
        self._heap: list[AuctionEvent] = []
        self._seq = itertools.count()

    def push(self, time: float, kind: EventKind, payload: Any = None) -> None:
        heapq.heappush(self._heap, AuctionEvent(time, kind, next(self._seq), payload))

    def pop(self) -> AuctionEvent:
        return heapq.heappop(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)


# -- relay ------------------------------------------------------------------------


def lognormal_params(median: float, p75: float) -> tuple[float, float]:
    """(mu, sigma) of the log-normal with the given median and 75th percentile."""
    if median <= 0:
        return -math.inf, 0.0
    return math.log(median), math.log(p75 / median) / Z75


def sample_delay(cfg: RelayConfig, rng: np.random.Generator) -> float:
    mu, sigma = lognormal_params(cfg.delay_median, cfg.delay_p75)
    if mu == -math.inf:
        return 0.0
    if sigma == 0.0:
        return cfg.delay_median
    return float(math.exp(mu + sigma * rng.standard_normal()))


def relay_admit(cfg: RelayConfig, submission: BlockSubmission, rng: np.random.Generator) -> BlockSubmission:
    """Stamp ``made_available_at``: immediate if optimistic, else after a simulation delay."""
    if rng.random() < cfg.optimistic_prob:
        return with_availability(submission, submission.received_at, True)
    return with_availability(submission, submission.received_at + sample_delay(cfg, rng), False)


def released(submissions: Iterable[BlockSubmission], t: float) -> list[BlockSubmission]:
    return [s for s in submissions if s.made_available_at <= t]


def broadcast_top_bid(submissions: Iterable[BlockSubmission], t: float) -> int:
    """Highest bid among blocks available at ``t`` (0 if none)."""
    return max((s.bid for s in released(submissions, t)), default=0)


def proposer_select(submissions: Iterable[BlockSubmission], t: float) -> str | None:
    """Winning block id at request time ``t``, or ``None`` if nothing is available.

    Ties on bid go to the earlier ``received_at``, then the smaller block id.
    """
    best = None
    for s in released(submissions, t):
        key = (-s.bid, s.received_at, s.block_id)
        if best is None or key < best[0]:
            best = (key, s.block_id)
    return None if best is None else best[1]


# -- slot engine --------------------------------------------------------------------


@dataclass
class PendingTx:
    """A user transaction waiting for inclusion across slots."""

    tx: Transaction
    fallback_after: int | None = None
    cycles: int = 0  # completed cycles without inclusion
    public: bool = False

    def builders_for(self, cfg: ScenarioConfig) -> list[str]:
        if self.public or self.tx.channel.kind is ChannelKind.PUBLIC:
            pub = [b.builder_id for b in cfg.builders if "public" in b.access]
            if self.tx.channel.kind is not ChannelKind.PUBLIC:
                pub = sorted(set(pub) | set(self.tx.channel.builders))
            return pub
        if self.tx.channel.kind is ChannelKind.PRIVATE:
            access = {b.builder_id for b in cfg.builders if "private" in b.access}
            return [b for b in self.tx.channel.builders if b in access]
        return list(self.tx.channel.builders)


@dataclass
class SlotOutcome:
    trace: SlotTrace
    new_transactions: list[Transaction]
    pending: list[PendingTx]
    pools: dict[str, PoolState]
    broadcasts: list[tuple[float, int]]


def trace_for(traces: Mapping[str, PriceTrace], pair: TokenPair) -> PriceTrace:
    if pair.name in traces:
        return traces[pair.name]
    if pair.inverted().name in traces:
        return traces[pair.inverted().name].inverted()
    raise KeyError(f"no price trace for {pair.name}")


def slot_rng(seed: int, slot_id: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, slot_id, stream]))


class SlotRun:
    """One bidding cycle.  Use :func:`run_slot`."""

    def __init__(self, cfg: ScenarioConfig, slot_id: int, pending: Sequence[PendingTx],
                 pools: Mapping[str, PoolState], traces: Mapping[str, PriceTrace]):
        self.cfg = cfg
        self.slot_id = slot_id
        self.pools = dict(pools)
        self.traces = traces
        self.queue = EventQueue()
        self.builders = {b.builder_id: b for b in cfg.builders}
        self.visible: dict[str, dict[str, Transaction]] = {b: {} for b in self.builders}
        self.seen: dict[str, Transaction] = {}
        self.arrivals: dict[tuple[str, str], float] = {}  # (builder, tx_id) -> first arrival
        self.submissions: list[BlockSubmission] = []
        self.last_bid: dict[str, int] = {}
        self.best: dict[str, PackResult] = {}
        self.events: list[MempoolEvent] = []
        self.broadcasts: list[tuple[float, int]] = []
        self.new_txs: list[Transaction] = []
        self.pending = {p.tx.tx_id: p for p in pending}
        self.relay_rng = slot_rng(cfg.seed, slot_id, 1)
        self.user_rng = slot_rng(cfg.seed, slot_id, 0)
        self.stagger_rng = slot_rng(cfg.seed, slot_id, 2)
        self.end = min(SLOT_SECONDS, cfg.proposer_request_time)
        self.winner: str | None = None

    # scheduling ---------------------------------------------------------------

    def _deliver(self, tx: Transaction, builders: Iterable[str], t: float, stagger: float = 0.0) -> None:
        for i, b in enumerate(builders):
            if b in self.builders:
                lag = self.builders[b].tx_latency + (stagger if i > 0 else 0.0)
                self.queue.push(t + lag, EventKind.TX_ARRIVAL, (b, tx))

    def _schedule(self) -> None:
        cfg = self.cfg
        for p in self.pending.values():
            if (p.fallback_after is not None and not p.public and p.cycles >= p.fallback_after):
                p.public = True
                self.events.append(MempoolEvent(p.tx.tx_id, "Public", 0.0))
            self._deliver(p.tx, p.builders_for(cfg), 0.0)

        arrivals = user_flow_step(
            cfg.user_flow, self.user_rng, 0.0, self.end, slot_id=self.slot_id, pools=self.pools,
            builders=cfg.builder_ids,
            private_builders=[b.builder_id for b in cfg.builders if "private" in b.access],
        )
        for a in arrivals:
            self._add_user(a)

        for s in cfg.searchers:
            k = 0
            while True:
                t = s.latency + k * s.quote_interval
                if t >= self.end:
                    break
                self.queue.push(t, EventKind.SEARCHER_WAKE, s)
                k += 1

        for b in cfg.builders:
            k = 0
            while True:
                t = b.start_offset + k * b.resubmit_interval
                if t + b.latency_to(cfg.relay.relay_id) > self.end:
                    break
                self.queue.push(t, EventKind.BUILDER_SUBMIT, b.builder_id)
                k += 1

        k = 0
        while k * cfg.relay.broadcast_interval <= self.end:
            self.queue.push(k * cfg.relay.broadcast_interval, EventKind.TOP_BID_BROADCAST)
            k += 1
        self.queue.push(cfg.proposer_request_time, EventKind.PROPOSER_REQUEST)
        self.queue.push(SLOT_SECONDS, EventKind.SLOT_END)

    def _add_user(self, a: UserArrival) -> None:
        p = PendingTx(a.tx, a.fallback_after)
        self.pending[a.tx.tx_id] = p
        self.new_txs.append(a.tx)
        t = a.tx.created_at
        if a.tx.channel.kind is ChannelKind.PUBLIC:
            self.events.append(MempoolEvent(a.tx.tx_id, "Public", t))
        stagger = self.cfg.user_flow.private_stagger if a.tx.channel.kind is ChannelKind.PRIVATE else 0.0
        builders = p.builders_for(self.cfg)
        if stagger and len(builders) > 1:
            builders = list(self.stagger_rng.permutation(builders))
        self._deliver(a.tx, builders, t, stagger)

    # handlers -----------------------------------------------------------------

    def _searcher_wake(self, s, t: float) -> None:
        flags = self.cfg.flags
        pools = s.pools or tuple(sorted(self.pools))
        abs_ms = round((self.slot_id * SLOT_SECONDS + t) * 1000)
        for pool_id in pools:
            pool = self.pools[pool_id]
            p_cex = price_at(trace_for(self.traces, pool.pair), abs_ms)
            plan = optimal_arb(pool, p_cex, cex_fee=flags.cex_fee_bps / 1e4, impact=flags.cex_impact)
            if plan.volume <= 0 or plan.gross_profit < to_units(s.min_profit):
                continue
            for target in s.targets:
                tx = searcher_quote(s, pool, p_cex, t, target, self.slot_id, plan=plan)
                if tx.fee_offers[target] <= 0:
                    continue
                self.new_txs.append(tx)
                self._deliver(tx, [target], t)

    def _build(self, builder_id: str, t: float) -> None:
        cfg = self.builders[builder_id]
        latency = cfg.latency_to(self.cfg.relay.relay_id)
        if t + latency > self.end:
            return
        include_failed = self.cfg.flags.include_failed
        cands = latest_per_stream(self.visible[builder_id].values())
        pack = builder_pack(cfg, cands, self.pools, include_failed=include_failed)
        best = self.best.get(builder_id)
        if best is not None and best.revenue > pack.revenue:
            # a builder never gives up a more valuable block it already holds; it
            # tops it up with new flow, leaving out newer quotes of streams it has
            held = [self.seen[t] for t in best.txs]
            streams = {_stream(tx) for tx in held} - {None}
            extra = [tx for tx in cands if tx.tx_id not in best.txs and _stream(tx) not in streams]
            topped = builder_pack(cfg, held + extra, self.pools, include_failed=include_failed)
            pack = topped if topped.revenue >= best.revenue else best
        bid = builder_bid(cfg, pack.revenue, t)
        # bids are never cancelled or lowered, so a builder only resubmits when its bid rises
        last = self.last_bid.get(builder_id)
        if last is not None and bid <= last:
            return
        self.best[builder_id] = pack
        sub = BlockSubmission.create(self.slot_id, builder_id, t + latency, pack.txs, bid, pack.revenue)
        sub = relay_admit(self.cfg.relay, sub, self.relay_rng)
        self.submissions.append(sub)
        self.last_bid[builder_id] = bid
        self.queue.push(sub.made_available_at, EventKind.RELAY_RELEASE, sub)

    def run(self) -> None:
        self._schedule()
        heard: dict[str, int] = {}
        while self.queue:
            ev = self.queue.pop()
            t = ev.time
            if ev.kind is EventKind.TX_ARRIVAL:
                b, tx = ev.payload
                self.visible[b][tx.tx_id] = tx
                self.seen.setdefault(tx.tx_id, tx)
                self.arrivals.setdefault((b, tx.tx_id), t)
            elif ev.kind is EventKind.SEARCHER_WAKE:
                self._searcher_wake(ev.payload, t)
            elif ev.kind is EventKind.BUILDER_SUBMIT:
                self._build(ev.payload, t)
            elif ev.kind is EventKind.TOP_BID_BROADCAST:
                if ev.payload is None:
                    top = broadcast_top_bid(self.submissions, t)
                    self.broadcasts.append((t, top))
                    lat = self.cfg.relay.broadcast_latency
                    for b in self.builders:
                        if top > self.last_bid.get(b, 0) and top > heard.get(b, 0):
                            heard[b] = top
                            self.queue.push(t + lat, EventKind.TOP_BID_BROADCAST, b)
                else:
                    # a builder hearing a higher top bid rebuilds at once
                    self._build(ev.payload, t)
            elif ev.kind is EventKind.PROPOSER_REQUEST:
                self.winner = proposer_select(self.submissions, t)
            elif ev.kind is EventKind.SLOT_END:
                break


def _stream(tx: Transaction):
    if tx.kind is TxKind.SEARCHER_SWAP and tx.swap is not None:
        return (tx.origin, tx.swap.pool_id)
    return None


def _initial_pending_cycle(p: PendingTx) -> PendingTx:
    return PendingTx(p.tx, p.fallback_after, p.cycles + 1, p.public)


def run_slot(cfg: ScenarioConfig, slot_id: int, pending: Sequence[PendingTx], pools: Mapping[str, PoolState],
             traces: Mapping[str, PriceTrace]) -> SlotOutcome:
    """Run one bidding cycle and apply the winning block to the pools."""
    start_pools = dict(pools)
    if slot_id in cfg.skipped_slots:
        trace = SlotTrace(slot_id, None, (), (), (), start_pools)
        return SlotOutcome(trace, [], list(pending), start_pools, [])

    run = SlotRun(cfg, slot_id, pending, start_pools, traces)
    run.run()
    txs = {**{t.tx_id: t for t in run.new_txs}, **run.seen}
    new_pools = start_pools
    included: set[str] = set()
    if run.winner is not None:
        win = next(s for s in run.submissions if s.block_id == run.winner)
        new_pools = dict(replay_block(start_pools, win, txs).final_pools)
        included = set(win.txs)

    carry = []
    for tx_id, p in run.pending.items():
        if tx_id in included:
            continue
        if p.cycles + 1 > cfg.user_flow.ttl_slots:
            continue
        carry.append(_initial_pending_cycle(p))

    seen_ids = tuple(sorted(run.seen))
    trace = SlotTrace(slot_id, run.winner, tuple(run.submissions), seen_ids, tuple(run.events), start_pools)
    # carried txs that no builder saw yet still belong in the table
    new_txs = list(run.seen.values()) + [p.tx for p in carry]
    return SlotOutcome(trace, new_txs, carry, new_pools, run.broadcasts)


# -- scenario -------------------------------------------------------------------------


def build_traces(cfg: ScenarioConfig) -> dict[str, PriceTrace]:
    # +3 s covers the lead terms of the benchmark regression at the last slot
    duration = int(math.ceil(cfg.slot_count * SLOT_SECONDS)) + 3
    start_ms = int(cfg.first_slot * SLOT_SECONDS * 1000)
    out = {}
    for name, src in sorted(cfg.prices.items()):
        pair = TokenPair.parse(name)
        if src.file is not None:
            path = Path(src.file)
            if not path.is_absolute():
                path = Path(cfg.base_dir) / path
            out[name] = read_price_csv(path, pair)
        else:
            out[name] = generate_gbm_trace(cfg.seed + 7919 * (src.seed_offset + 1), pair, src.start_price,
                                           src.volatility, duration, drift=src.drift, start_ms=start_ms)
    return out


def scenario_metadata(cfg: ScenarioConfig) -> dict:
    normalized = scenario_to_dict(cfg)
    return {
        "seed": cfg.seed,
        "config_digest": config_digest(normalized),
        "config": normalized,
        "slot_seconds": SLOT_SECONDS,
        "actors": {
            "searchers": {s.bot_id: {"integrated_with": s.integrated_with,
                                     "also_submits_to": sorted(s.also_submits_to)}
                          for s in cfg.searchers},
            "builders": cfg.builder_ids,
        },
    }


def run_scenario(cfg: ScenarioConfig) -> Dataset:
    """Run ``slot_count`` consecutive slots, threading pool state and pending transactions."""
    traces = build_traces(cfg)
    pools = {p.pool_id: p for p in cfg.pools}
    pending: list[PendingTx] = []
    slots: list[SlotTrace] = []
    txs: dict[str, Transaction] = {}
    for i in range(cfg.slot_count):
        out = run_slot(cfg, cfg.first_slot + i, pending, pools, traces)
        slots.append(out.trace)
        for tx in out.new_transactions:
            txs[tx.tx_id] = tx
        pending, pools = out.pending, out.pools
    return Dataset(slots, txs, traces, scenario_metadata(cfg))
