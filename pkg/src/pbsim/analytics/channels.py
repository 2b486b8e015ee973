"""Delivery-channel labels inferred from which builders' blocks carry a transaction."""

from __future__ import annotations

from dataclasses import dataclass

from ..amm import SwapStatus, replay_block
from ..model import SLOT_SECONDS, ChannelKind, Dataset, SlotTrace


@dataclass(frozen=True)
class ChannelLabel:
    tx_id: str
    label: ChannelKind
    builder: str | None  # set for Exclusive
    n_builders: int  # distinct builders whose blocks held the tx this cycle

    def __str__(self) -> str:
        return self.label.value


def builders_by_tx(slot: SlotTrace) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    for sub in slot.submissions:
        for tx_id in sub.txs:
            out.setdefault(tx_id, set()).add(sub.builder_id)
    return out


def first_public_sighting(d: Dataset) -> dict[str, float]:
    """Earliest absolute time each tx was seen in the public mempool."""
    out: dict[str, float] = {}
    for slot in d.slots:
        for ev in slot.mempool_events:
            if ev.channel_observation != ChannelKind.PUBLIC.value:
                continue
            t = slot.slot_id * SLOT_SECONDS + ev.timestamp
            if t < out.get(ev.tx_id, float("inf")):
                out[ev.tx_id] = t
    return out


def reference_time(slot: SlotTrace) -> float:
    """Absolute time of the winning block's arrival, or the slot end without a winner."""
    w = slot.winner
    offset = w.received_at if w is not None else SLOT_SECONDS
    return slot.slot_id * SLOT_SECONDS + offset


def classify_slot(slot: SlotTrace, public_seen: dict[str, float]) -> list[ChannelLabel]:
    ref = reference_time(slot)
    out = []
    for tx_id, builders in sorted(builders_by_tx(slot).items()):
        if public_seen.get(tx_id, float("inf")) <= ref:
            out.append(ChannelLabel(tx_id, ChannelKind.PUBLIC, None, len(builders)))
        elif len(builders) == 1:
            (b,) = builders
            out.append(ChannelLabel(tx_id, ChannelKind.EXCLUSIVE, b, 1))
        else:
            out.append(ChannelLabel(tx_id, ChannelKind.PRIVATE, None, len(builders)))
    return out


def classify_channels(d: Dataset, cycle: int) -> list[ChannelLabel]:
    """Label every transaction that appears in any block submitted during ``cycle``.

    Public if a public mempool sighting precedes the winning block; otherwise
    Exclusive when only one builder's blocks contain it, else Private.
    """
    return classify_slot(d.slot(cycle), first_public_sighting(d))


@dataclass(frozen=True)
class RevenueSplit:
    total: int
    exclusive: int
    private: int
    public: int

    def shares(self) -> tuple[float, float, float]:
        if self.total == 0:
            return (float("nan"),) * 3
        return self.exclusive / self.total, self.private / self.total, self.public / self.total


def winner_fees(slot: SlotTrace, d: Dataset) -> dict[str, int]:
    """Fee actually paid to the winning builder, per tx (successful txs only)."""
    w = slot.winner
    if w is None:
        return {}
    res = replay_block(slot.pool_states_at_slot_start, w, d.transactions)
    return {
        e.tx_id: d.transactions[e.tx_id].fee_to(w.builder_id)
        for e in res.entries if e.status is SwapStatus.SUCCESS
    }


def revenue_attribution(d: Dataset, cycle: int, labels: list[ChannelLabel] | None = None) -> RevenueSplit:
    """Split the winning block's fee revenue by channel label (integer units, exact)."""
    slot = d.slot(cycle)
    if slot.winner is None:
        raise ValueError(f"cycle {cycle} has no winning block")
    if labels is None:
        labels = classify_channels(d, cycle)
    by_tx = {lab.tx_id: lab.label for lab in labels}
    parts = {k: 0 for k in ChannelKind}
    for tx_id, fee in winner_fees(slot, d).items():
        parts[by_tx[tx_id]] += fee
    total = sum(parts.values())
    return RevenueSplit(total, parts[ChannelKind.EXCLUSIVE], parts[ChannelKind.PRIVATE], parts[ChannelKind.PUBLIC])


def revenue_by_cycle(d: Dataset) -> dict[int, RevenueSplit]:
    public_seen = first_public_sighting(d)
    out = {}
    for slot in d.slots:
        if slot.winner is not None:
            out[slot.slot_id] = revenue_attribution(d, slot.slot_id, classify_slot(slot, public_seen))
    return out
