"""Per (swap, block) execution outcomes across every submitted block."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from ..amm import BlockReplayResult, SwapStatus, replay_block
from ..model import Dataset, Direction, TxKind
from .regression import RegressionResult, ols


@dataclass
class PanelRow:
    tx_id: str
    block_id: str
    slot_id: int
    builder_id: str
    pool_id: str
    direction: str
    success: int
    price: float  # amount_out / amount_in; NaN unless successful
    p_norm: float  # % deviation from the tx's mean price across blocks; NaN unless successful
    time_since_block: float
    tx_index: int
    bot_direction: str  # same / opposite / mixed / none, relative to bot swaps on pool+cycle
    integrated_builder: int  # builder has an integrated bot
    own_bot_block: int  # builder is integrated and its bot has a tx in the block
    bots_present: tuple[str, ...]

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


class ReplayCache:
    def __init__(self, d: Dataset):
        self.d = d
        self._cache: dict[str, BlockReplayResult] = {}

    def get(self, slot, block) -> BlockReplayResult:
        res = self._cache.get(block.block_id)
        if res is None:
            res = replay_block(slot.pool_states_at_slot_start, block, self.d.transactions)
            self._cache[block.block_id] = res
        return res


def bot_directions(d: Dataset) -> dict[tuple[int, str], set[Direction]]:
    """(cycle, pool) -> directions of bot swaps seen in that cycle's blocks."""
    bots = set(d.searchers)
    out: dict[tuple[int, str], set[Direction]] = {}
    for slot in d.slots:
        ids = {tx_id for sub in slot.submissions for tx_id in sub.txs}
        for tx_id in ids:
            tx = d.transactions[tx_id]
            if tx.origin in bots and tx.swap is not None:
                out.setdefault((slot.slot_id, tx.swap.pool_id), set()).add(tx.swap.direction)
    return out


def _tag(dirs: set[Direction] | None, direction: Direction) -> str:
    if not dirs:
        return "none"
    if len(dirs) > 1:
        return "mixed"
    return "same" if direction in dirs else "opposite"


def execution_panel(d: Dataset, cache: ReplayCache | None = None) -> list[PanelRow]:
    """Rows for every user swap in every block that contains it.

    Prices are oriented as output per unit of input so higher is always
    better for the sender.  ``p_norm`` is only defined on successful rows;
    swaps that never succeed anywhere drop out of the price panel.
    """
    cache = cache or ReplayCache(d)
    bots = d.searchers
    integrated = set(bots.values())
    bot_dirs = bot_directions(d)
    rows: list[PanelRow] = []
    for slot in d.slots:
        for sub in slot.submissions:
            txs = [d.transactions[t] for t in sub.txs]
            present = tuple(sorted({tx.origin for tx in txs if tx.origin in bots}))
            own = int(any(bots[b] == sub.builder_id for b in present))
            entries = None
            for pos, tx in enumerate(txs):
                if tx.kind is not TxKind.USER_SWAP:
                    continue
                if entries is None:
                    entries = cache.get(slot, sub).entries
                e = entries[pos]
                ok = e.status is SwapStatus.SUCCESS
                price = e.amount_out / e.amount_in if ok and e.amount_in > 0 else math.nan
                rows.append(PanelRow(
                    tx.tx_id, sub.block_id, slot.slot_id, sub.builder_id, tx.swap.pool_id,
                    tx.swap.direction.value, int(ok), price, math.nan, sub.received_at, pos,
                    _tag(bot_dirs.get((slot.slot_id, tx.swap.pool_id)), tx.swap.direction),
                    int(sub.builder_id in integrated), own, present,
                ))
    _fill_p_norm(rows)
    return rows


def _fill_p_norm(rows: list[PanelRow]) -> None:
    by_tx: dict[str, list[PanelRow]] = {}
    for r in rows:
        if r.success and not math.isnan(r.price):
            by_tx.setdefault(r.tx_id, []).append(r)
    for group in by_tx.values():
        p = np.array([r.price for r in group])
        avg = p.mean()
        pn = (p - avg) / avg * 100.0
        pn -= pn.mean()  # remove the last bit of rounding so each tx averages to zero
        for r, v in zip(group, pn):
            r.p_norm = float(v)


def panel_regression(rows: list[PanelRow], outcome: str, regressors: list[str], *,
                     subsample: str | None = None, drop_collinear: bool = False) -> RegressionResult:
    """Regress ``success`` or ``p_norm`` on panel columns with transaction fixed effects.

    ``regressors`` may name numeric columns or ``builder:<id>`` / ``bot:<id>``
    dummies.  ``subsample`` keeps rows with that ``bot_direction`` tag.
    """
    sel = [r for r in rows if subsample is None or r.bot_direction == subsample]
    if outcome == "p_norm":
        sel = [r for r in sel if r.success]
    y = np.array([getattr(r, outcome) for r in sel], dtype=float)
    cols = []
    for name in regressors:
        if name.startswith("builder:"):
            b = name.split(":", 1)[1]
            cols.append([float(r.builder_id == b) for r in sel])
        elif name.startswith("bot:"):
            b = name.split(":", 1)[1]
            cols.append([float(b in r.bots_present) for r in sel])
        else:
            cols.append([float(getattr(r, name)) for r in sel])
    X = np.array(cols, dtype=float).T if cols else np.zeros((len(sel), 0))
    groups = np.array([r.tx_id for r in sel])
    return ols(y, X, groups, regressors, drop_collinear=drop_collinear)
