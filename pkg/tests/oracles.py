"""Reference implementations used to check the engine.

Each oracle works from the defining property (an invariant, an exhaustive
scan, an explicit dummy regression) instead of the formula the engine uses.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def swap_out_bisect(reserve_in: int, reserve_out: int, fee_rate: str, amount_in: int) -> int:
    """Largest integer output keeping (x + a(1 - f)) (y - out) >= x y, by integer bisection.

    ``fee_rate`` is a decimal string so the fee is exact.
    """
    f = Fraction(fee_rate)
    num, den = (1 - f).numerator, (1 - f).denominator
    lhs_in = reserve_in * den + amount_in * num  # (x + a(1-f)) scaled by den
    target = reserve_in * reserve_out * den

    def ok(out: int) -> bool:
        return lhs_in * (reserve_out - out) >= target

    lo, hi = 0, reserve_out
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if ok(mid):
            lo = mid
        else:
            hi = mid - 1
    return lo


def arb_profit_oracle(x: float, y: float, fee: float, p: float, side: str, v: float,
                      cex_fee: float = 0.0, impact: float = 0.0) -> float:
    """Continuous profit of trading ``v`` base tokens against reserves (x, y), solved from x*y = k."""
    g = 1.0 - fee
    if side == "buy":  # take v base out of the pool, sell it on the CEX
        if v >= x:
            return -math.inf
        quote_in = (x * y / (x - v) - y) / g
        return v * (p * (1 - cex_fee) - impact * v) - quote_in
    quote_out = y - x * y / (x + g * v)
    return quote_out - v * (p * (1 + cex_fee) + impact * v)


def grid_best(x, y, fee, p, side, vmax, n=10_000, cex_fee=0.0, impact=0.0):
    """(best grid profit, resolution bound) over n volumes in [0, vmax]."""
    vs = np.linspace(0.0, vmax, n)
    prof = np.array([arb_profit_oracle(x, y, fee, p, side, v, cex_fee, impact) for v in vs])
    finite = prof[np.isfinite(prof)]
    step = np.abs(np.diff(finite)).max() if len(finite) > 1 else 0.0
    return float(finite.max()), float(step)


def winner_bruteforce(subs, t):
    """Winner by explicit filtering: highest bid, then earliest receipt, then smallest id."""
    avail = [s for s in subs if s.made_available_at <= t]
    if not avail:
        return None
    top = max(s.bid for s in avail)
    avail = [s for s in avail if s.bid == top]
    first = min(s.received_at for s in avail)
    avail = [s for s in avail if s.received_at == first]
    return sorted(s.block_id for s in avail)[0]


def classify_bruteforce(d, cycle):
    """tx_id -> (label, exclusive builder) by nested scans over the whole dataset."""
    slot = [s for s in d.slots if s.slot_id == cycle][0]
    if slot.winning_block is not None:
        win = [s for s in slot.submissions if s.block_id == slot.winning_block][0]
        ref = cycle * 12.0 + win.received_at
    else:
        ref = cycle * 12.0 + 12.0
    tx_ids = []
    for sub in slot.submissions:
        for t in sub.txs:
            if t not in tx_ids:
                tx_ids.append(t)
    out = {}
    for t in tx_ids:
        public = False
        for s in d.slots:
            for ev in s.mempool_events:
                if ev.tx_id == t and ev.channel_observation == "Public" and s.slot_id * 12.0 + ev.timestamp <= ref:
                    public = True
        holders = []
        for sub in slot.submissions:
            if t in sub.txs and sub.builder_id not in holders:
                holders.append(sub.builder_id)
        if public:
            out[t] = ("Public", None)
        elif len(holders) == 1:
            out[t] = ("Exclusive", holders[0])
        else:
            out[t] = ("Private", None)
    return out


def dummy_ols(y, X, groups):
    """Slopes from an explicit one-hot group-dummy regression (least squares)."""
    y = np.asarray(y, float)
    X = np.asarray(X, float)
    levels = sorted(set(groups))
    D = np.array([[1.0 if g == lev else 0.0 for lev in levels] for g in groups])
    Z = np.hstack([X, D])
    beta, *_ = np.linalg.lstsq(Z, y, rcond=None)
    return beta[: X.shape[1]]


def normal_equations_exact(y, X):
    """Exact OLS coefficients by Gaussian elimination over fractions."""
    X = [[Fraction(v) for v in row] for row in X]
    y = [Fraction(v) for v in y]
    k = len(X[0])
    A = [[sum(r[i] * r[j] for r in X) for j in range(k)] for i in range(k)]
    b = [sum(r[i] * yy for r, yy in zip(X, y)) for i in range(k)]
    for c in range(k):
        piv = next(r for r in range(c, k) if A[r][c] != 0)
        A[c], A[piv] = A[piv], A[c]
        b[c], b[piv] = b[piv], b[c]
        for r in range(k):
            if r != c and A[r][c] != 0:
                f = A[r][c] / A[c][c]
                A[r] = [a - f * ac for a, ac in zip(A[r], A[c])]
                b[r] -= f * b[c]
    return [b[i] / A[i][i] for i in range(k)]


def grid_best_vec(x, y, fee, p, side, vmax, n=10_000, cex_fee=0.0, impact=0.0):
    """Vectorised ``grid_best``: same profit formula evaluated on the whole grid at once."""
    g = 1.0 - fee
    vs = np.linspace(0.0, vmax, n)
    if side == "buy":
        vs = vs[vs < x]
        prof = vs * (p * (1 - cex_fee) - impact * vs) - (x * y / (x - vs) - y) / g
    else:
        prof = (y - x * y / (x + g * vs)) - vs * (p * (1 + cex_fee) + impact * vs)
    step = float(np.abs(np.diff(prof)).max()) if len(prof) > 1 else 0.0
    return float(prof.max()), step
