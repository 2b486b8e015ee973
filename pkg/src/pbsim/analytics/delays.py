"""Transactions proposed in a cycle but left out of that cycle's winning block."""

from __future__ import annotations

from dataclasses import dataclass

from ..model import Dataset, TxKind
from .channels import classify_slot, first_public_sighting


@dataclass(frozen=True)
class DelayRecord:
    tx_id: str
    first_cycle: int
    inclusion_cycle: int | None
    cycles: tuple[int, ...]  # cycles in which the tx sat in some submitted block
    statuses: tuple[str, ...]  # channel label per entry of ``cycles``

    @property
    def cycles_present(self) -> int:
        return len(self.cycles)

    @property
    def delayed(self) -> bool:
        return any(c != self.inclusion_cycle for c in self.cycles)


@dataclass(frozen=True)
class DelaySummary:
    user_txs: int
    delayed: int
    exclusive_to_public: int  # records whose status went Exclusive -> Public

    @property
    def share(self) -> float:
        return self.delayed / self.user_txs if self.user_txs else float("nan")


def is_user_tx(kind: TxKind) -> bool:
    return kind is not TxKind.SEARCHER_SWAP


def delayed_transactions(d: Dataset) -> tuple[list[DelayRecord], DelaySummary]:
    """One record per transaction seen in submissions, plus the user-tx summary.

    The summary's denominator is every user transaction observed in at least
    one submitted block.
    """
    public_seen = first_public_sighting(d)
    cycles: dict[str, list[int]] = {}
    statuses: dict[str, list[str]] = {}
    included: dict[str, int] = {}
    for slot in d.slots:
        for lab in classify_slot(slot, public_seen):
            cycles.setdefault(lab.tx_id, []).append(slot.slot_id)
            statuses.setdefault(lab.tx_id, []).append(lab.label.value)
        w = slot.winner
        if w is not None:
            for tx_id in w.txs:
                included.setdefault(tx_id, slot.slot_id)

    records = [
        DelayRecord(tx_id, cs[0], included.get(tx_id), tuple(cs), tuple(statuses[tx_id]))
        for tx_id, cs in sorted(cycles.items(), key=lambda kv: (kv[1][0], kv[0]))
    ]
    user = [r for r in records if r.tx_id in d.transactions and is_user_tx(d.transactions[r.tx_id].kind)]
    summary = DelaySummary(
        user_txs=len(user),
        delayed=sum(r.delayed for r in user),
        exclusive_to_public=sum(has_transition(r.statuses, "Exclusive", "Public") for r in user),
    )
    return records, summary


def has_transition(seq: tuple[str, ...], a: str, b: str) -> bool:
    return any(x == a and y == b for x, y in zip(seq, seq[1:]))
