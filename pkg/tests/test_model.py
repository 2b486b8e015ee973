import dataclasses
import json
from decimal import Decimal, localcontext

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factory import eth, make_block, make_dataset, make_pool, make_slot, make_tx
from pbsim.model import (BidTransaction, BlockSubmission, Channel, ChannelKind, Direction, MempoolEvent, PoolState, SlotTrace,
                         SwapSpec, TokenPair, Transaction, TxKind, block_id_for, dumps, validate_dataset)
from pbsim.units import SCALE, format_units, parse_units, to_units

# -- units -----------------------------------------------------------------------


def test_to_units_decimal_strings():
    assert to_units("1.18") == 1_180_000_000_000_000_000
    assert to_units(2) == 2 * SCALE
    assert to_units(0.1) == SCALE // 10


def test_format_units_canonical():
    assert format_units(0) == "0"
    assert format_units(SCALE) == "1"
    assert format_units(1) == "0.000000000000000001"
    assert format_units(-15 * SCALE // 10) == "-1.5"


def test_parse_units_rejects_excess_precision():
    with pytest.raises(ValueError):
        parse_units("0.0000000000000000001")
    with pytest.raises(TypeError):
        parse_units(1.5)


@given(st.integers(min_value=-(10**30), max_value=10**30))
def test_units_round_trip(n):
    assert parse_units(format_units(n)) == n
    with localcontext() as ctx:
        ctx.prec = 60
        assert Decimal(format_units(n)) * SCALE == n


# -- types ------------------------------------------------------------------------


def test_token_pair_rules():
    with pytest.raises(ValueError):
        TokenPair("WETH", "WETH")
    p = TokenPair.parse("USDC-WETH")
    assert (p.base, p.quote) == ("USDC", "WETH")
    assert p.inverted().name == "WETH-USDC"


def test_channel_rules():
    with pytest.raises(ValueError):
        Channel(ChannelKind.PUBLIC, ("a",))
    with pytest.raises(ValueError):
        Channel(ChannelKind.EXCLUSIVE, ("a", "b"))
    with pytest.raises(ValueError):
        Channel(ChannelKind.PRIVATE, ())
    assert Channel.private(["b", "a", "b"]).builders == ("a", "b")


def test_bid_transaction_non_negative():
    with pytest.raises(ValueError):
        BidTransaction("b", -1, 0)


def test_block_id_changes_with_txs_and_bid():
    a = block_id_for(1, "b", ["x", "y"], 10)
    assert a != block_id_for(1, "b", ["y", "x"], 10)
    assert a != block_id_for(1, "b", ["x", "y"], 11)
    assert a == block_id_for(1, "b", ["x", "y"], 10)


def test_logical_id_ignores_fee_and_channel():
    sw = SwapSpec("p", Direction.BASE_FOR_QUOTE, eth(1), 0)
    a = Transaction.create("bot", TxKind.SEARCHER_SWAP, {"x": eth("1.18")}, Channel.exclusive("x"), 3, 1.5, sw, "x")
    b = Transaction.create("bot", TxKind.SEARCHER_SWAP, {"y": eth(1)}, Channel.exclusive("y"), 3, 1.5, sw)
    assert a.logical_id == b.logical_id
    assert a.tx_id != b.tx_id
    differ = {f for f in a.to_dict() if a.to_dict()[f] != b.to_dict()[f]}
    assert differ <= {"tx_id", "fee_offers", "channel", "fee_recipient_guard"}


# -- serialization round trip -----------------------------------------------------

names = st.text(alphabet="abcdefghijk", min_size=1, max_size=6)
amounts = st.integers(min_value=0, max_value=10**27)
times = st.floats(min_value=0, max_value=12, allow_nan=False)


@st.composite
def transactions(draw):
    kind = draw(st.sampled_from(list(TxKind)))
    swap = None
    if kind in (TxKind.USER_SWAP, TxKind.SEARCHER_SWAP):
        swap = SwapSpec(draw(names), draw(st.sampled_from(list(Direction))), draw(amounts), draw(amounts))
    builders = draw(st.lists(names, min_size=1, max_size=3, unique=True))
    ch_kind = draw(st.sampled_from(["public", "private", "exclusive"]))
    if ch_kind == "exclusive":
        builders = builders[:1]
        channel = Channel.exclusive(builders[0])
    elif ch_kind == "private":
        channel = Channel.private(builders)
    else:
        channel = Channel.public()
    fee = draw(amounts)
    return Transaction.create(draw(names), kind, {b: fee for b in builders}, channel,
                              draw(st.integers(0, 1000)), draw(times), swap,
                              draw(st.one_of(st.none(), names)), draw(st.integers(0, 5)))


@st.composite
def blocks(draw):
    bid = draw(amounts)
    rec = draw(times)
    b = BlockSubmission.create(draw(st.integers(0, 50)), draw(names), rec,
                               draw(st.lists(names, unique=True, max_size=5)), bid, bid + draw(amounts))
    return b


pools = st.builds(lambda i, b, q, f: PoolState(i, TokenPair("A", "B"), b, q, f), names,
                  st.integers(1, 10**27), st.integers(1, 10**27), st.floats(0, 0.099))


@settings(max_examples=60)
@given(transactions())
def test_transaction_round_trip(tx):
    s = dumps(tx.to_dict())
    back = Transaction.from_dict(json.loads(s))
    assert back == tx
    assert dumps(back.to_dict()) == s


@settings(max_examples=60)
@given(blocks())
def test_block_round_trip(b):
    s = dumps(b.to_dict())
    assert BlockSubmission.from_dict(json.loads(s)) == b
    assert dumps(BlockSubmission.from_dict(json.loads(s)).to_dict()) == s


@settings(max_examples=40)
@given(pools)
def test_pool_round_trip(p):
    s = dumps(p.to_dict())
    assert PoolState.from_dict(json.loads(s)) == p


@settings(max_examples=30)
@given(st.lists(blocks(), max_size=3), pools, st.lists(st.tuples(names, times), max_size=3))
def test_slot_round_trip(subs, pool, events):
    slot = SlotTrace(7, subs[0].block_id if subs else None, tuple(subs), ("a", "b"),
                     tuple(MempoolEvent(t, "Public", ts) for t, ts in events), {pool.pool_id: pool})
    s = dumps(slot.to_dict())
    back = SlotTrace.from_dict(json.loads(s))
    assert dumps(back.to_dict()) == s
    assert back.submissions == slot.submissions


# -- validation ---------------------------------------------------------------------


def _two_slot_dataset():
    t1 = make_tx({"a": "0.1", "b": "0.1"})
    t2 = make_tx({"a": "0.2"}, slot=1, t=2.0)
    s0 = make_slot(0, [make_block(0, "a", 5.0, [t1], bid="0.05", revenue="0.1")], events=[(t1, 0.5)])
    s1 = make_slot(1, [make_block(1, "a", 3.0, [t2], bid="0.1", revenue="0.2"),
                       make_block(1, "b", 4.0, [], bid=0)])
    return make_dataset([s0, s1], [t1, t2]), (t1, t2)


def test_validate_well_formed():
    d, _ = _two_slot_dataset()
    assert validate_dataset(d) == []


def test_validate_bid_exceeds_revenue():
    d, (t1, _) = _two_slot_dataset()
    bad = make_block(0, "a", 6.0, [t1], bid="0.2", revenue="0.1")
    d.slots[0] = make_slot(0, [*d.slots[0].submissions, bad], winner=d.slots[0].winning_block)
    v = validate_dataset(d)
    assert len(v) == 1
    assert v[0].code == "bid_exceeds_revenue" and v[0].ref == bad.block_id


def test_validate_unknown_tx():
    d, _ = _two_slot_dataset()
    ghost = make_block(1, "b", 5.0, ["0xghost"], bid=0)
    s1 = d.slots[1]
    d.slots[1] = SlotTrace(1, s1.winning_block, (*s1.submissions, ghost), s1.transactions, (),
                           s1.pool_states_at_slot_start)
    v = validate_dataset(d)
    assert [x.code for x in v] == ["unknown_tx"]
    assert v[0].ref == ghost.block_id


def test_validate_catches_type_breaches():
    d, (t1, t2) = _two_slot_dataset()
    d.slots.reverse()
    assert "slot_order" in {v.code for v in validate_dataset(d)}

    d, _ = _two_slot_dataset()
    s0 = d.slots[0]
    d.slots[0] = SlotTrace(0, "0xnope", s0.submissions, s0.transactions, (), s0.pool_states_at_slot_start)
    assert [v.code for v in validate_dataset(d)] == ["winner_missing"]

    user = Transaction.create("u", TxKind.USER_SWAP, {"a": 1, "b": 2}, Channel.public(), 0, 1.0,
                              SwapSpec("p", Direction.BASE_FOR_QUOTE, 1, 0))
    d, _ = _two_slot_dataset()
    d.transactions[user.tx_id] = user
    assert [v.code for v in validate_dataset(d)] == ["user_fee_variant"]


def test_validate_digest_mismatch():
    d, _ = _two_slot_dataset()
    d.metadata.update(config={"seed": 1}, config_digest="0" * 64)
    assert [v.code for v in validate_dataset(d)] == ["digest_mismatch"]


def test_validate_optimistic_and_availability():
    d, _ = _two_slot_dataset()
    s1 = d.slots[1]
    bad = dataclasses.replace(s1.submissions[1], made_available_at=4.5, optimistic=True)
    early = dataclasses.replace(s1.submissions[0], made_available_at=1.0)
    d.slots[1] = SlotTrace(1, early.block_id, (early, bad), s1.transactions, (), s1.pool_states_at_slot_start)
    codes = sorted(v.code for v in validate_dataset(d))
    assert codes == ["available_before_received", "optimistic_delay"]


def test_validate_bad_pool():
    d, _ = _two_slot_dataset()
    s0 = d.slots[0]
    d.slots[0] = SlotTrace(0, s0.winning_block, s0.submissions, s0.transactions, s0.mempool_events,
                           {"p": make_pool(base=0)})
    assert [v.code for v in validate_dataset(d)] == ["bad_pool"]
