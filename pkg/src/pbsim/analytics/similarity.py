"""Overlap between builders' blocks and cross-builder transaction sharing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import SLOT_SECONDS, Dataset, SlotTrace


@dataclass(frozen=True)
class SimilarityMatrix:
    """``values[i, j]``: share of builder i's latest block also found in any of j's blocks.

    NaN marks undefined entries (row builder has no non-empty block yet).
    """

    cycle: int
    t: float
    builders: tuple[str, ...]
    values: np.ndarray

    def entry(self, a: str, b: str) -> float:
        return float(self.values[self.builders.index(a), self.builders.index(b)])

    def dissimilarity(self, a: str) -> float:
        """1 minus the mean off-diagonal similarity of row ``a`` (NaN if undefined)."""
        i = self.builders.index(a)
        row = np.delete(self.values[i], i)
        row = row[~np.isnan(row)]
        return float(1.0 - row.mean()) if len(row) else float("nan")


def _builders(d: Dataset, slot: SlotTrace) -> tuple[str, ...]:
    known = d.metadata.get("actors", {}).get("builders") or []
    return tuple(sorted(set(known) | {s.builder_id for s in slot.submissions}))


def similarity_matrix(d: Dataset, cycle: int, t: float) -> SimilarityMatrix:
    """Similarity of the blocks each builder had submitted by within-slot time ``t``."""
    slot = d.slot(cycle)
    builders = _builders(d, slot)
    latest: dict[str, tuple[float, frozenset[str]]] = {}
    union: dict[str, set[str]] = {b: set() for b in builders}
    for sub in slot.submissions:
        if sub.received_at > t:
            continue
        union[sub.builder_id].update(sub.txs)
        prev = latest.get(sub.builder_id)
        if prev is None or sub.received_at >= prev[0]:
            latest[sub.builder_id] = (sub.received_at, frozenset(sub.txs))
    n = len(builders)
    vals = np.full((n, n), np.nan)
    for i, a in enumerate(builders):
        if a not in latest or not latest[a][1]:
            continue
        own = latest[a][1]
        for j, b in enumerate(builders):
            vals[i, j] = len(own & union[b]) / len(own)
    return SimilarityMatrix(cycle, t, builders, vals)


@dataclass(frozen=True)
class SharingEvent:
    tx_id: str
    origin: str
    adopter: str
    lag: float


def sharing_events(d: Dataset, min_lag: float = 1.0) -> list[SharingEvent]:
    """Transactions first seen only in one builder's blocks, later in another's.

    First appearances are compared in absolute time, so a transaction carried
    into the next cycle can also be shared across the cycle boundary.
    """
    first: dict[str, dict[str, float]] = {}
    for slot in d.slots:
        base = slot.slot_id * SLOT_SECONDS
        for sub in slot.submissions:
            t = base + sub.received_at
            for tx_id in sub.txs:
                seen = first.setdefault(tx_id, {})
                if t < seen.get(sub.builder_id, float("inf")):
                    seen[sub.builder_id] = t
    out = []
    for tx_id in sorted(first):
        seen = first[tx_id]
        t0 = min(seen.values())
        origins = [b for b, t in seen.items() if t == t0]
        if len(origins) != 1:
            continue
        for b, t in sorted(seen.items()):
            # tolerance keeps float noise in absolute times from hiding exact 1 s lags
            if b != origins[0] and t - t0 >= min_lag - 1e-9:
                out.append(SharingEvent(tx_id, origins[0], b, t - t0))
    return out
