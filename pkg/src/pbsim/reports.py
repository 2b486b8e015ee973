"""CSV reports over a dataset.  Column meanings are documented in docs/reports.md."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Callable

from .analytics import (RankDeficiencyError, benchmark_lag_regression, bot_trades, delayed_transactions,
                        execution_panel, improvement_regression, improvement_rows, panel_regression,
                        per_second_bot_series, sharing_events, similarity_matrix)
from .analytics.channels import classify_slot, first_public_sighting, revenue_attribution, winner_fees
from .analytics.execution import PanelRow
from .analytics.regression import RegressionResult
from .market import price_at
from .model import Dataset
from .units import format_units

SIMILARITY_TIMES = (11.0, 12.0, 13.0, 14.0)


def fmt(v) -> str:
    """Full round-trip rendering; amounts arrive pre-formatted as strings."""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    if v is None:
        return ""
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="ascii") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])
    return path


# -- individual reports ---------------------------------------------------------


def report_channels(d: Dataset, out: Path) -> list[Path]:
    seen = first_public_sighting(d)
    rows = []
    for slot in d.slots:
        winner = slot.winner
        in_win = set(winner.txs) if winner else set()
        fees = winner_fees(slot, d)
        for lab in classify_slot(slot, seen):
            rows.append([slot.slot_id, lab.tx_id, d.transactions[lab.tx_id].kind.value, lab.label.value,
                         lab.builder, lab.n_builders, lab.tx_id in in_win, format_units(fees.get(lab.tx_id, 0))])
    return [write_csv(out / "channels.csv", ["cycle", "tx_id", "kind", "label", "exclusive_builder", "n_builders",
                                             "in_winner", "fee_paid_to_winner"], rows)]


def report_revenue(d: Dataset, out: Path) -> list[Path]:
    seen = first_public_sighting(d)
    rows = []
    tot = [0, 0, 0, 0]
    for slot in d.slots:
        if slot.winner is None:
            continue
        r = revenue_attribution(d, slot.slot_id, classify_slot(slot, seen))
        parts = [r.total, r.exclusive, r.private, r.public]
        tot = [a + b for a, b in zip(tot, parts)]
        rows.append([slot.slot_id, slot.winner.builder_id, *map(format_units, parts), *r.shares()])
    share = [x / tot[0] if tot[0] else math.nan for x in tot[1:]]
    rows.append(["all", "", *map(format_units, tot), *share])
    return [write_csv(out / "revenue.csv", ["cycle", "winner_builder", "total", "exclusive", "private", "public",
                                            "exclusive_share", "private_share", "public_share"], rows)]


def report_delays(d: Dataset, out: Path) -> list[Path]:
    records, summary = delayed_transactions(d)
    rows = [[r.tx_id, d.transactions[r.tx_id].kind.value, r.first_cycle, r.inclusion_cycle, r.cycles_present,
             r.delayed, "|".join(r.statuses)] for r in records]
    p1 = write_csv(out / "delays.csv", ["tx_id", "kind", "first_cycle", "inclusion_cycle", "cycles_present",
                                        "delayed", "statuses"], rows)
    p2 = write_csv(out / "delays_summary.csv", ["user_txs", "delayed", "delayed_share", "exclusive_to_public"],
                   [[summary.user_txs, summary.delayed, summary.share, summary.exclusive_to_public]])
    return [p1, p2]


def report_similarity(d: Dataset, out: Path, times=SIMILARITY_TIMES) -> list[Path]:
    paths = []
    for t in times:
        rows, builders = [], None
        for slot in d.slots:
            m = similarity_matrix(d, slot.slot_id, t)
            builders = builders or list(m.builders)
            for i, b in enumerate(m.builders):
                rows.append([slot.slot_id, b, *m.values[i].tolist()])
        paths.append(write_csv(out / f"similarity_t{t:g}.csv", ["cycle", "builder", *(builders or [])], rows))
    ev = [[e.tx_id, e.origin, e.adopter, e.lag] for e in sharing_events(d)]
    paths.append(write_csv(out / "sharing_events.csv", ["tx_id", "origin_builder", "adopter_builder", "lag_s"], ev))
    return paths


PANEL_COLUMNS = ["tx_id", "block_id", "slot_id", "builder_id", "pool_id", "direction", "success", "price",
                 "p_norm", "time_since_block", "tx_index", "bot_direction", "integrated_builder", "own_bot_block",
                 "bots_present"]


def _panel_row(r: PanelRow) -> list:
    return [r.tx_id, r.block_id, r.slot_id, r.builder_id, r.pool_id, r.direction, r.success, r.price, r.p_norm,
            r.time_since_block, r.tx_index, r.bot_direction, r.integrated_builder, r.own_bot_block,
            "|".join(r.bots_present)]


def report_execution_panel(d: Dataset, out: Path, panel=None) -> list[Path]:
    panel = panel if panel is not None else execution_panel(d)
    return [write_csv(out / "execution_panel.csv", PANEL_COLUMNS, map(_panel_row, panel))]


def _reg_rows(model: str, fit: Callable[[], RegressionResult]) -> list[list]:
    try:
        res = fit()
    except (RankDeficiencyError, ValueError) as e:
        return [[model, "", math.nan, math.nan, 0, math.nan, 0, f"error: {e}"]]
    rows = [[model, n, float(c), float(s), res.n, res.r2, res.fe_count, "ok"]
            for n, c, s in zip(res.names, res.coef, res.se)]
    rows += [[model, n, math.nan, math.nan, res.n, res.r2, res.fe_count, "dropped"] for n in res.dropped]
    return rows


REG_HEADER = ["model", "term", "coef", "se", "n", "r2", "fe_count", "status"]


def panel_terms(d: Dataset) -> list[str]:
    bots = d.searchers
    integrated = sorted(set(bots.values()))
    return (["time_since_block", "tx_index"] + [f"builder:{b}" for b in integrated]
            + [f"bot:{b}" for b in sorted(bots)])


def regression_tables(d: Dataset, panel=None) -> dict[str, list[list]]:
    panel = panel if panel is not None else execution_panel(d)
    terms = panel_terms(d)
    focus = ["own_bot_block", "time_since_block", "tx_index"]
    tables = {}
    for key, outcome in (("execution_success", "success"), ("execution_pnorm", "p_norm")):
        rows = []
        for sub in (None, "same", "opposite"):
            label = sub or "all"
            rows += _reg_rows(label, lambda: panel_regression(panel, outcome, terms, subsample=sub,
                                                             drop_collinear=True))
            rows += _reg_rows(f"{label}:focused",
                              lambda: panel_regression(panel, outcome, focus, subsample=sub))
        tables[key] = rows

    t3, t4_rows, imp = [], [], []
    for pair in sorted({t.pair for t in bot_trades(d)}):
        trace = d.price_traces.get(pair)
        if trace is None:
            continue
        series = [r for bot in sorted(d.searchers) for r in per_second_bot_series(d, bot, pair)]
        series.sort(key=lambda r: (r.s, r.bot))
        t3 += _reg_rows(pair, lambda: benchmark_lag_regression(series, trace))
        imp += improvement_rows(series, trace)
    t4_rows += _reg_rows("no_volume", lambda: improvement_regression(imp, piecewise=False))
    t4_rows += _reg_rows("piecewise_volume", lambda: improvement_regression(imp, piecewise=True))
    tables["benchmark_lags"] = t3
    tables["price_improvement"] = t4_rows
    return tables


def report_regressions(d: Dataset, out: Path, panel=None) -> list[Path]:
    return [write_csv(out / f"{name}.csv", REG_HEADER, rows) for name, rows in regression_tables(d, panel).items()]


def report_implied_prices(d: Dataset, out: Path) -> list[Path]:
    trades = bot_trades(d)
    rows = []
    for t in trades:
        trace = d.price_traces.get(t.pair)
        bench = math.nan
        if trace is not None:
            ms = round(t.abs_time * 1000)
            if trace.span[0] <= ms <= trace.span[1]:
                bench = price_at(trace, ms)
        rows.append([t.tx_id, t.bot, t.builder, t.pool_id, t.pair, t.slot_id, t.abs_time, t.dex_side, t.volume,
                     t.volume_eth, t.p_dex, t.fee, t.p_implied, 1.0 / t.p_implied, bench])
    p1 = write_csv(out / "implied_trades.csv",
                   ["tx_id", "bot", "builder", "pool_id", "pair", "cycle", "abs_time", "dex_side", "volume",
                    "volume_eth", "p_dex", "fee", "p_implied", "p_implied_inverted", "benchmark"], rows)
    srows = []
    for pair in sorted({t.pair for t in trades}):
        trace = d.price_traces.get(pair)
        for bot in sorted(d.searchers):
            for r in per_second_bot_series(d, bot, pair):
                bench = math.nan
                if trace is not None and trace.span[0] <= r.s * 1000 <= trace.span[1]:
                    bench = price_at(trace, r.s * 1000)
                srows.append([pair, r.slot_id, bot, r.s, r.dex_side, r.p_implied, r.volume, r.volume_eth,
                              r.n_trades, bench])
    p2 = write_csv(out / "implied_series.csv", ["pair", "cycle", "bot", "s", "dex_side", "p_implied", "volume",
                                                 "volume_eth", "n_trades", "benchmark"], srows)
    return [p1, p2]


def report_bids(d: Dataset, out: Path) -> list[Path]:
    rows = []
    for slot in d.slots:
        for s in sorted(slot.submissions, key=lambda s: (s.received_at, s.builder_id, s.block_id)):
            share = (s.revenue - s.bid) / s.revenue if s.revenue else math.nan
            rows.append([slot.slot_id, s.builder_id, s.block_id, s.received_at, s.made_available_at, s.optimistic,
                         len(s.txs), format_units(s.bid), format_units(s.revenue), share,
                         s.block_id == slot.winning_block])
    return [write_csv(out / "bids.csv", ["cycle", "builder", "block_id", "received_at", "made_available_at",
                                         "optimistic", "n_txs", "bid", "revenue", "retained_share", "winner"], rows)]


REPORTS: dict[str, Callable[[Dataset, Path], list[Path]]] = {
    "channels": report_channels,
    "revenue": report_revenue,
    "delays": report_delays,
    "similarity": report_similarity,
    "execution_panel": report_execution_panel,
    "regressions": report_regressions,
    "implied_prices": report_implied_prices,
    "bids": report_bids,
}


def run_report(d: Dataset, name: str, out: str | Path) -> list[Path]:
    out = Path(out)
    if name == "all":
        panel = execution_panel(d)
        paths = []
        for key, fn in REPORTS.items():
            if key in ("execution_panel", "regressions"):
                paths += fn(d, out, panel)
            else:
                paths += fn(d, out)
        return paths
    if name not in REPORTS:
        raise KeyError(name)
    return REPORTS[name](d, out)
