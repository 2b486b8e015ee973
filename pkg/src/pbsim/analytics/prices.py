"""Implied CEX prices of integrated bots and their comparison with the benchmark."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..amm import execute_swap
from ..market import PriceTrace, price_at
from ..model import SLOT_SECONDS, Dataset, Direction, TxKind
from ..units import SCALE
from .regression import RegressionResult, ols


def implied_cex_price(p_dex: float, fee: float, volume: float, dex_side: str, *, inverted: bool = False) -> float:
    """Off-chain price implied by a bot paying ``fee`` (ETH) for a ``volume``-token DEX trade.

    Prices are ETH per token.  Buying the token on the DEX means selling it on
    the CEX, so the CEX price must exceed ``p_dex`` by the fee per unit.
    ``inverted`` returns tokens per ETH instead.
    """
    if volume <= 0:
        raise ValueError("volume must be positive")
    if dex_side == "buy":
        p = p_dex + fee / volume
    elif dex_side == "sell":
        p = p_dex - fee / volume
    else:
        raise ValueError(f"dex_side must be 'buy' or 'sell', got {dex_side!r}")
    return 1.0 / p if inverted else p


def price_improvement(p_implied: float, p_benchmark: float, dex_side: str) -> tuple[float, float]:
    """(p_diff, p_improvement in percent); positive means better than the benchmark.

    ``dex_side`` is the bot's on-chain side of the asset being priced.  Selling
    it on-chain means buying it off-chain, where a lower price is better.
    """
    if p_benchmark <= 0:
        raise ValueError("benchmark price must be positive")
    if dex_side == "sell":
        diff = p_benchmark - p_implied
    elif dex_side == "buy":
        diff = p_implied - p_benchmark
    else:
        raise ValueError(f"dex_side must be 'buy' or 'sell', got {dex_side!r}")
    return diff, diff / p_benchmark * 100.0


@dataclass(frozen=True)
class BotTrade:
    tx_id: str
    bot: str
    builder: str
    pool_id: str
    pair: str
    slot_id: int
    abs_time: float
    dex_side: str
    volume: float  # tokens
    volume_eth: float
    p_dex: float  # top-of-block execution price, ETH per token
    fee: float  # ETH paid to the integrated builder
    p_implied: float


def bot_trades(d: Dataset, bot: str | None = None) -> list[BotTrade]:
    """Integrated-builder copies of bot swaps that appear in at least one submitted block.

    ``p_dex`` comes from simulating the swap at the top of the block, that is
    on the pool state at the start of the slot it was created in.
    """
    bots = d.searchers
    seen = {tx_id for s in d.slots for sub in s.submissions for tx_id in sub.txs}
    slots = {s.slot_id: s for s in d.slots}
    out = []
    for tx_id in sorted(seen):
        tx = d.transactions[tx_id]
        if tx.kind is not TxKind.SEARCHER_SWAP or tx.origin not in bots or tx.swap is None:
            continue
        if bot is not None and tx.origin != bot:
            continue
        target = bots[tx.origin]
        if tx.fee_recipient_guard != target or tx.slot_id not in slots:
            continue
        pool = slots[tx.slot_id].pool_states_at_slot_start[tx.swap.pool_id]
        res = execute_swap(pool, tx.swap.direction, tx.swap.amount_in)
        if not res.ok or res.amount_out == 0:
            continue
        if tx.swap.direction is Direction.QUOTE_FOR_BASE:
            side, vol, vol_eth = "buy", res.amount_out, tx.swap.amount_in
        else:
            side, vol, vol_eth = "sell", tx.swap.amount_in, res.amount_out
        fee = tx.fee_to(target)
        p_dex = vol_eth / vol
        p_imp = p_dex + fee / vol if side == "buy" else p_dex - fee / vol
        out.append(BotTrade(tx_id, tx.origin, target, pool.pool_id, pool.pair.name, tx.slot_id, tx.abs_time,
                            side, vol / SCALE, vol_eth / SCALE, p_dex, fee / SCALE, p_imp))
    out.sort(key=lambda t: (t.abs_time, t.tx_id))
    return out


@dataclass(frozen=True)
class SecondRow:
    s: int  # end of the (s-1, s] window, absolute seconds
    bot: str
    dex_side: str
    slot_id: int
    p_implied: float
    volume: float
    volume_eth: float
    n_trades: int


def aggregate_per_second(trades: Iterable[BotTrade], weighted: bool = False) -> list[SecondRow]:
    """Average implied price and total volume per (bot, second, side); empty seconds omitted."""
    groups: dict[tuple[str, int, str], list[BotTrade]] = {}
    for t in trades:
        s = math.ceil(t.abs_time)
        groups.setdefault((t.bot, s, t.dex_side), []).append(t)
    rows = []
    for (bot, s, side), ts in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][0], kv[0][2])):
        p = np.array([t.p_implied for t in ts])
        v = np.array([t.volume for t in ts])
        mean = float(p @ v / v.sum()) if weighted else float(p.mean())
        rows.append(SecondRow(s, bot, side, ts[0].slot_id, mean, float(v.sum()),
                              float(sum(t.volume_eth for t in ts)), len(ts)))
    return rows


def per_second_bot_series(d: Dataset, bot: str, pair: str, *, weighted: bool | None = None) -> list[SecondRow]:
    if weighted is None:
        weighted = bool(d.metadata.get("config", {}).get("flags", {}).get("weighted_aggregation", False))
    return aggregate_per_second([t for t in bot_trades(d, bot) if t.pair == pair], weighted)


LAGS = (-2, -1, 0, 1, 2)


def lag_name(k: int) -> str:
    return f"bench({k:+d})" if k else "bench(+0)"


def benchmark_lag_regression(series: Sequence[SecondRow], trace: PriceTrace,
                             offsets: Sequence[int] = LAGS) -> RegressionResult:
    """Regress the per-second implied price on benchmark prices at ``s + k`` plus a constant."""
    lo, hi = trace.span
    y, X = [], []
    for r in series:
        ts = [(r.s + k) * 1000 for k in offsets]
        if min(ts) < lo or max(ts) > hi:
            continue
        y.append(r.p_implied)
        X.append([price_at(trace, t) for t in ts] + [1.0])
    if len(y) < 10:
        raise ValueError(f"need at least 10 usable rows, got {len(y)}")
    return ols(np.array(y), np.array(X), names=[lag_name(k) for k in offsets] + ["const"])


@dataclass(frozen=True)
class ImprovementRow:
    bot: str
    s: int
    dex_side: str
    p_implied: float
    benchmark: float
    p_diff: float
    p_improvement: float
    time_since_block: float
    volume_eth: float


def improvement_rows(series: Iterable[SecondRow], trace: PriceTrace) -> list[ImprovementRow]:
    lo, hi = trace.span
    out = []
    for r in series:
        if not lo <= r.s * 1000 <= hi:
            continue
        bench = price_at(trace, r.s * 1000)
        diff, imp = price_improvement(r.p_implied, bench, r.dex_side)
        out.append(ImprovementRow(r.bot, r.s, r.dex_side, r.p_implied, bench, diff, imp,
                                  r.s - r.slot_id * SLOT_SECONDS, r.volume_eth))
    return out


KNOTS = (50.0, 100.0, 150.0)


def volume_pieces(v: np.ndarray, knots: Sequence[float] = KNOTS) -> tuple[np.ndarray, list[str]]:
    """Continuous piecewise-linear basis: the part of ``v`` falling in each segment."""
    edges = [0.0, *knots, math.inf]
    cols, names = [], []
    for a, b in zip(edges, edges[1:]):
        cols.append(np.clip(v - a, 0.0, b - a))
        names.append(f"volume[{a:g},{b:g})")
    return np.column_stack(cols), names


def improvement_regression(rows: Sequence[ImprovementRow], *, piecewise: bool = True,
                           knots: Sequence[float] = KNOTS, reference_bot: str | None = None
                           ) -> RegressionResult:
    """p_improvement on time since block, bot dummies, optional volume pieces and a constant.

    The reference bot (first by name unless given) is absorbed in the
    constant.  Columns without variation are dropped and reported.
    """
    if len(rows) < 10:
        raise ValueError(f"need at least 10 rows, got {len(rows)}")
    bots = sorted({r.bot for r in rows})
    ref = reference_bot or bots[0]
    y = np.array([r.p_improvement for r in rows])
    cols = [np.array([r.time_since_block for r in rows])]
    names = ["time_since_block"]
    for b in bots:
        if b != ref:
            cols.append(np.array([float(r.bot == b) for r in rows]))
            names.append(f"is_{b}")
    if piecewise:
        pieces, pnames = volume_pieces(np.array([r.volume_eth for r in rows]), knots)
        cols += list(pieces.T)
        names += pnames
    keep = [j for j, c in enumerate(cols) if np.ptp(c) > 0]
    dropped = tuple(names[j] for j in range(len(cols)) if j not in keep)
    X = np.column_stack([cols[j] for j in keep] + [np.ones(len(rows))])
    res = ols(y, X, names=[names[j] for j in keep] + ["const"])
    return RegressionResult(res.names, res.coef, res.se, res.r2, res.n, res.fe_count, dropped, res.resid_dof)
