"""CEX reference prices and CEX-DEX arbitrage sizing."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .amm import FEE_DENOM, amount_in_for, amount_out_for, fee_numerator
from .model import Direction, PoolState, TokenPair
from .units import SCALE


@dataclass(frozen=True, eq=False)
class PriceTrace:
    """Step function of CEX prices (quote per base) sampled at ``timestamps_ms``."""

    pair: TokenPair
    timestamps_ms: np.ndarray
    prices: np.ndarray

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps_ms, dtype=np.int64)
        px = np.asarray(self.prices, dtype=np.float64)
        if ts.ndim != 1 or ts.shape != px.shape:
            raise ValueError("timestamps and prices must be 1-d and the same length")
        if len(ts) and np.any(np.diff(ts) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if np.any(~(px > 0)):
            raise ValueError("prices must be positive")
        object.__setattr__(self, "timestamps_ms", ts)
        object.__setattr__(self, "prices", px)

    def __len__(self) -> int:
        return len(self.timestamps_ms)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PriceTrace):
            return NotImplemented
        return (self.pair == other.pair and np.array_equal(self.timestamps_ms, other.timestamps_ms)
                and np.array_equal(self.prices, other.prices))

    @property
    def span(self) -> tuple[int, int]:
        return int(self.timestamps_ms[0]), int(self.timestamps_ms[-1])

    def inverted(self) -> "PriceTrace":
        return PriceTrace(self.pair.inverted(), self.timestamps_ms, 1.0 / self.prices)

    def points(self) -> list[tuple[int, float]]:
        return list(zip(self.timestamps_ms.tolist(), self.prices.tolist()))


def price_at(trace: PriceTrace, t_ms: float) -> float:
    """Value at the greatest sample timestamp <= ``t_ms``."""
    if len(trace) == 0:
        raise ValueError("empty price trace")
    lo, hi = trace.span
    if t_ms < lo or t_ms > hi:
        raise ValueError(f"t={t_ms} ms outside trace span [{lo}, {hi}] for {trace.pair}")
    i = int(np.searchsorted(trace.timestamps_ms, t_ms, side="right")) - 1
    return float(trace.prices[i])


def generate_gbm_trace(seed: int, pair: TokenPair, start_price: float, volatility: float,
                       duration_s: int, *, drift: float = 0.0, start_ms: int = 0) -> PriceTrace:
    """1 Hz geometric Brownian motion; ``volatility`` is per sqrt(second).

    ``drift`` is the expected log-return per second.
    """
    if start_price <= 0 or volatility < 0 or duration_s < 0:
        raise ValueError("start_price must be positive, volatility and duration non-negative")
    rng = np.random.default_rng(seed)
    n = int(duration_s)
    steps = rng.standard_normal(n)
    log_ret = (drift - 0.5 * volatility**2) + volatility * steps
    log_path = np.concatenate([[0.0], np.cumsum(log_ret)])
    prices = start_price * np.exp(log_path)
    ts = start_ms + 1000 * np.arange(n + 1, dtype=np.int64)
    return PriceTrace(pair, ts, prices)


def max_drawup(trace: PriceTrace) -> float:
    """Largest rise from a running minimum, as a fraction of that minimum."""
    run_min = np.minimum.accumulate(trace.prices)
    return float(np.max(trace.prices / run_min - 1.0))


# -- CSV interchange ---------------------------------------------------------


def _normalise_ts(raw: str) -> int:
    ts = int(raw) if raw.lstrip("-").isdigit() else int(float(raw))
    # newer kline exports use microseconds
    if ts >= 10**15:
        ts //= 1000
    return ts


def parse_price_csv(text: str, pair: TokenPair) -> PriceTrace:
    """Parse ``timestamp_ms,price`` rows.

    Also accepts headerless files and raw Binance kline rows (open time in ms or
    us, then OHLC...), in which case the close price is used.
    """
    ts, px = [], []
    for row in csv.reader(io.StringIO(text)):
        if not row or not row[0].strip():
            continue
        head = row[0].strip()
        if not (head[0].isdigit() or head[0] in "-."):
            continue  # header line
        if len(row) >= 5:
            ts.append(_normalise_ts(head))
            px.append(float(row[4]))
        elif len(row) >= 2:
            ts.append(_normalise_ts(head))
            px.append(float(row[1]))
        else:
            raise ValueError(f"price row has too few columns: {row}")
    order = np.argsort(np.asarray(ts, dtype=np.int64), kind="stable")
    return PriceTrace(pair, np.asarray(ts, dtype=np.int64)[order], np.asarray(px)[order])


def read_price_csv(path: str | Path, pair: TokenPair | None = None) -> PriceTrace:
    path = Path(path)
    return parse_price_csv(path.read_text(), pair or TokenPair.parse(path.stem))


def format_price_csv(trace: PriceTrace) -> str:
    lines = ["timestamp_ms,price"]
    lines += [f"{t},{p!r}" for t, p in trace.points()]
    return "\n".join(lines) + "\n"


# -- arbitrage ----------------------------------------------------------------


@dataclass(frozen=True)
class ArbPlan:
    """A CEX-DEX round trip on one pool.

    ``volume`` is in base-token units; ``amount_in`` is what the DEX swap spends
    (quote when buying base, base when selling it).  ``cex_price`` is the average
    fill on the CEX leg after frictions, ``reference_price`` the raw quote, and
    ``gross_profit`` (ETH units) equals ``volume * |cex_price - expected_dex_price|``.
    """

    pool_id: str
    direction: Direction
    volume: int
    amount_in: int
    expected_dex_price: float
    cex_price: float
    reference_price: float
    gross_profit: int

    @property
    def dex_side(self) -> str:
        """Side taken on the DEX for the base token: ``"buy"`` or ``"sell"``."""
        return "buy" if self.direction is Direction.QUOTE_FOR_BASE else "sell"

    @property
    def gross_profit_eth(self) -> float:
        return self.gross_profit / SCALE


def _no_arb(pool: PoolState, p_cex: float) -> ArbPlan:
    return ArbPlan(pool.pool_id, Direction.QUOTE_FOR_BASE, 0, 0, pool.reserve_quote / pool.reserve_base,
                   p_cex, p_cex, 0)


def _bisect_root(f, lo: float, hi: float, iters: int = 200) -> float:
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def optimal_volume(pool: PoolState, p_cex: float, cex_fee: float = 0.0, impact: float = 0.0
                   ) -> tuple[Direction, float]:
    """Profit-maximising base volume (whole tokens, float) and its direction."""
    x = pool.reserve_base / SCALE
    y = pool.reserve_quote / SCALE
    g = fee_numerator(pool.fee_rate) / FEE_DENOM
    p_sell = p_cex * (1.0 - cex_fee)  # CEX bid, when we buy on the DEX
    p_buy = p_cex * (1.0 + cex_fee)  # CEX ask, when we sell on the DEX
    if p_sell > y / (x * g):
        if impact == 0.0:
            return Direction.QUOTE_FOR_BASE, x - math.sqrt(x * y / (g * p_sell))
        marg = lambda v: p_sell - 2 * impact * v - x * y / (g * (x - v) ** 2)  # noqa: E731
        return Direction.QUOTE_FOR_BASE, _bisect_root(marg, 0.0, x * (1 - 1e-12))
    if y * g / x > p_buy:
        if impact == 0.0:
            return Direction.BASE_FOR_QUOTE, (math.sqrt(x * y * g / p_buy) - x) / g
        marg = lambda v: x * y * g / (x + g * v) ** 2 - p_buy - 2 * impact * v  # noqa: E731
        hi = (math.sqrt(x * y * g / p_buy) - x) / g
        return Direction.BASE_FOR_QUOTE, _bisect_root(marg, 0.0, hi)
    return Direction.QUOTE_FOR_BASE, 0.0


def optimal_arb(pool: PoolState, p_cex: float, *, cex_fee: float = 0.0, impact: float = 0.0) -> ArbPlan:
    """Size the arbitrage that trades the pool to the CEX price.

    Returns a zero-volume plan when the CEX price sits inside the pool's fee
    band or when integer rounding leaves no profit.
    """
    if p_cex <= 0:
        raise ValueError("CEX price must be positive")
    direction, v = optimal_volume(pool, p_cex, cex_fee, impact)
    v_units = int(v * SCALE)
    if v_units <= 0:
        return _no_arb(pool, p_cex)
    if direction is Direction.QUOTE_FOR_BASE:
        amount_in = amount_in_for(pool, direction, v_units)
        got = amount_out_for(pool, direction, amount_in)
        volume = got / SCALE
        fill = p_cex * (1.0 - cex_fee) - impact * volume
        dex_price = amount_in / got
        profit = volume * (fill - dex_price)
    else:
        amount_in = v_units
        got = amount_out_for(pool, direction, amount_in)
        if got <= 0:
            return _no_arb(pool, p_cex)
        volume = amount_in / SCALE
        fill = p_cex * (1.0 + cex_fee) + impact * volume
        dex_price = got / amount_in
        profit = volume * (dex_price - fill)
    profit_units = int(profit * SCALE)
    if profit_units <= 0:
        return _no_arb(pool, p_cex)
    base_units = got if direction is Direction.QUOTE_FOR_BASE else amount_in
    return ArbPlan(pool.pool_id, direction, base_units, amount_in, dex_price, fill, p_cex, profit_units)


def arb_profit(pool: PoolState, p_cex: float, direction: Direction, volume: float,
               cex_fee: float = 0.0, impact: float = 0.0) -> float:
    """Continuous gross profit (ETH) of trading ``volume`` base tokens in ``direction``."""
    x = pool.reserve_base / SCALE
    y = pool.reserve_quote / SCALE
    g = fee_numerator(pool.fee_rate) / FEE_DENOM
    if direction is Direction.QUOTE_FOR_BASE:
        if volume >= x:
            return -math.inf
        cost = y * volume / ((x - volume) * g)
        return volume * (p_cex * (1 - cex_fee) - impact * volume) - cost
    got = y * g * volume / (x + g * volume)
    return got - volume * (p_cex * (1 + cex_fee) + impact * volume)
