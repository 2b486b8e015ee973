import dataclasses

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from factory import eth, make_block, minimal_raw
from oracles import winner_bruteforce
from pbsim.amm import SwapStatus, replay_block
from pbsim.analytics.channels import winner_fees
from pbsim.auction import (EventKind, EventQueue, SlotRun, broadcast_top_bid, build_traces, lognormal_params,
                           proposer_select, relay_admit, run_scenario, run_slot)
from pbsim.config import RelayConfig, parse_scenario
from pbsim.model import ChannelKind, TxKind, dumps, validate_dataset


def test_event_queue_order():
    q = EventQueue()
    q.push(1.0, EventKind.SLOT_END, "end")
    q.push(1.0, EventKind.TX_ARRIVAL, "a")
    q.push(0.5, EventKind.PROPOSER_REQUEST, "p")
    q.push(1.0, EventKind.TX_ARRIVAL, "b")
    out = []
    while q:
        out.append(q.pop().payload)
    assert out == ["p", "a", "b", "end"]


# -- relay -----------------------------------------------------------------------


def test_relay_optimistic_keeps_timestamps():
    cfg = RelayConfig(optimistic_prob=1.0)
    b = relay_admit(cfg, make_block(0, "b", 3.25, []), np.random.default_rng(0))
    assert b.optimistic and b.made_available_at == b.received_at == 3.25


def test_relay_degenerate_delay():
    cfg = RelayConfig(delay_median=0.76, delay_p75=0.76, optimistic_prob=0.0)
    rng = np.random.default_rng(1)
    for rec in (0.0, 2.5, 11.1):
        b = relay_admit(cfg, make_block(0, "b", rec, []), rng)
        assert not b.optimistic and b.made_available_at - rec == pytest.approx(0.76, abs=1e-12)


def test_relay_delay_quantiles():
    cfg = RelayConfig(optimistic_prob=0.0)
    rng = np.random.default_rng(2024)
    delays = np.array([relay_admit(cfg, make_block(0, "b", 0.0, []), rng).made_available_at
                       for _ in range(10_000)])
    assert abs(np.median(delays) - 0.76) <= 0.05
    assert abs(np.quantile(delays, 0.75) - 1.5) <= 0.1
    assert (delays >= 0).all()


def test_lognormal_params():
    mu, sigma = lognormal_params(0.76, 1.5)
    assert np.exp(mu) == pytest.approx(0.76)
    assert np.exp(mu + sigma * 0.6744897501960817) == pytest.approx(1.5)


def test_broadcast_examples():
    assert broadcast_top_bid([], 5.0) == 0
    a, b = make_block(0, "a", 1.0, [], bid=3), make_block(0, "b", 1.5, [], bid=5)
    assert broadcast_top_bid([a, b], 5.0) == eth(5)
    late = make_block(0, "c", 4.0, [], bid=9, available=6.0)
    assert broadcast_top_bid([a, b, late], 5.0) == eth(5)
    assert broadcast_top_bid([a, b, late], 6.0) == eth(9)


def test_proposer_examples():
    one = make_block(0, "a", 1.0, [], bid=1)
    assert proposer_select([one], 12.0) == one.block_id
    assert proposer_select([], 12.0) is None
    bids = [make_block(0, "a", 1.0, [], bid=5), make_block(0, "b", 3.0, [], bid=7), make_block(0, "c", 2.0, [], bid=7)]
    assert proposer_select(bids, 12.0) == bids[2].block_id


@st.composite
def submissions(draw):
    n = draw(st.integers(0, 8))
    out = []
    for i in range(n):
        rec = draw(st.sampled_from([0.5, 1.0, 2.0, 6.0, 11.5]))
        avail = rec + draw(st.sampled_from([0.0, 0.5, 1.0, 3.0]))
        out.append(make_block(0, f"b{i % 3}", rec, [f"t{i}"], bid=draw(st.integers(0, 4)), available=avail))
    return out


@settings(max_examples=300)
@given(submissions(), st.sampled_from([0.0, 1.0, 4.0, 12.0]))
def test_proposer_matches_bruteforce(subs, t):
    assert proposer_select(subs, t) == winner_bruteforce(subs, t)


# -- slot engine ---------------------------------------------------------------------


def test_empty_block_slot():
    cfg = parse_scenario(minimal_raw())
    out = run_slot(cfg, 0, [], {p.pool_id: p for p in cfg.pools}, build_traces(cfg))
    win = out.trace.winner
    assert win is not None and win.bid == 0 and win.txs == ()
    assert out.pools == {p.pool_id: p for p in cfg.pools}


def test_slot_is_deterministic(canonical_cfg):
    pools = {p.pool_id: p for p in canonical_cfg.pools}
    traces = build_traces(canonical_cfg)
    a = run_slot(canonical_cfg, 0, [], pools, traces)
    b = run_slot(canonical_cfg, 0, [], pools, traces)
    assert dumps(a.trace.to_dict()) == dumps(b.trace.to_dict())
    assert a.broadcasts == b.broadcasts


def test_slot_properties(canonical_cfg):
    cfg = canonical_cfg
    traces = build_traces(cfg)
    pools = {p.pool_id: p for p in cfg.pools}
    pending = []
    lat = {b.builder_id: b.latency_to(cfg.relay.relay_id) for b in cfg.builders}
    for slot_id in range(4):
        run = SlotRun(cfg, slot_id, pending, pools, traces)
        run.run()
        # causality: every tx in a block had reached that builder when the block was built
        for sub in run.submissions:
            built = sub.received_at - lat[sub.builder_id]
            for tx_id in sub.txs:
                assert run.arrivals[(sub.builder_id, tx_id)] <= built + 1e-9
        out = run_slot(cfg, slot_id, pending, pools, traces)
        assert out.trace.submissions == tuple(run.submissions)
        tops = [b for _, b in out.broadcasts]
        assert tops == sorted(tops)
        pending, pools = out.pending, out.pools


def test_skipped_slot_carries_state(canonical_cfg):
    cfg = dataclasses.replace(canonical_cfg, slot_count=3, skipped_slots=(1,))
    d = run_scenario(cfg)
    s1 = d.slot(1)
    assert s1.winning_block is None and s1.submissions == ()
    assert s1.pool_states_at_slot_start == d.slot(2).pool_states_at_slot_start
    assert validate_dataset(d) == []


def test_zero_slots():
    d = run_scenario(parse_scenario(minimal_raw(slot_count=0)))
    assert d.slots == [] and d.transactions == {}


def test_runs_repeat(canonical_cfg):
    cfg = dataclasses.replace(canonical_cfg, slot_count=3)
    a, b = run_scenario(cfg), run_scenario(cfg)
    assert a.metadata == b.metadata
    assert a.price_traces == b.price_traces
    assert [dumps(s.to_dict()) for s in a.slots] == [dumps(s.to_dict()) for s in b.slots]


def test_bot_heavy_scenario_revenue_share(canonical_path):
    # two integrated bots on shared pools, thin user flow, CEX price rising
    raw = yaml.safe_load(canonical_path.read_text())
    raw["slot_count"] = 6
    raw["user_flow"].update(rate_public=4.0, rate_private=0.5, rate_exclusive=0.5, fee_eth=0.0003)
    for src in raw["prices"].values():
        src["gbm"].update(drift=0.0003, volatility=0.0004)
    d = run_scenario(parse_scenario(raw))
    total = bots = 0
    for slot in d.slots:
        fees = winner_fees(slot, d)
        total += sum(fees.values())
        bots += sum(v for t, v in fees.items() if d.transactions[t].kind is TxKind.SEARCHER_SWAP)
    assert total > 0 and bots / total > 0.9


# -- canonical dataset invariants --------------------------------------------------------


def test_canonical_validates(canonical):
    assert len(canonical.slots) == 38
    assert validate_dataset(canonical) == []


def test_canonical_winner_optimality_and_conservation(canonical):
    for slot in canonical.slots:
        assert slot.winning_block == winner_bruteforce(slot.submissions, 12.0)
        for sub in slot.submissions:
            assert sub.bid + sub.retained == sub.revenue and 0 <= sub.bid <= sub.revenue
        w = slot.winner
        if w is not None:
            assert sum(winner_fees(slot, canonical).values()) == w.revenue


def test_canonical_block_revenue_matches_replay(canonical):
    for slot in canonical.slots[:10]:
        for sub in slot.submissions:
            res = replay_block(slot.pool_states_at_slot_start, sub, canonical.transactions)
            fees = sum(canonical.transactions[e.tx_id].fee_to(sub.builder_id)
                       for e in res.entries if e.status is SwapStatus.SUCCESS)
            assert fees == sub.revenue


def test_canonical_pools_thread_through_winners(canonical):
    for prev, nxt in zip(canonical.slots, canonical.slots[1:]):
        w = prev.winner
        expect = prev.pool_states_at_slot_start
        if w is not None:
            expect = replay_block(expect, w, canonical.transactions).final_pools
        assert dict(expect) == dict(nxt.pool_states_at_slot_start)


def test_canonical_carry_rules(canonical, canonical_cfg):
    ttl = canonical_cfg.user_flow.ttl_slots
    last_seen = {}
    for slot in canonical.slots:
        for tx_id in slot.transactions:
            last_seen[tx_id] = slot.slot_id
    fallbacks = 0
    for tx_id, last in last_seen.items():
        tx = canonical.transactions[tx_id]
        assert last - tx.slot_id <= ttl
    for slot in canonical.slots:
        for ev in slot.mempool_events:
            tx = canonical.transactions[ev.tx_id]
            if tx.channel.kind is ChannelKind.EXCLUSIVE:
                # exclusive flow only goes public by falling back in a later slot
                assert tx.slot_id < slot.slot_id and ev.timestamp == 0.0
                fallbacks += 1
    assert fallbacks > 0


def test_canonical_bids_rise_within_builder(canonical):
    for slot in canonical.slots:
        by_builder = {}
        for sub in sorted(slot.submissions, key=lambda s: s.received_at):
            by_builder.setdefault(sub.builder_id, []).append(sub.bid)
        for bids in by_builder.values():
            assert all(b > a for a, b in zip(bids, bids[1:]))
