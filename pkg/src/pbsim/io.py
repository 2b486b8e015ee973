"""Dataset directory format.

::

    <dir>/slots.jsonl          one SlotTrace per line, in slot order
    <dir>/transactions.jsonl   one Transaction per line
    <dir>/prices/<PAIR>.csv    timestamp_ms,price
    <dir>/meta.json            seed, config_digest, config, actors

Output is byte-for-byte deterministic for equal datasets.
"""

from __future__ import annotations

import json
from pathlib import Path

from .market import format_price_csv, read_price_csv
from .model import Dataset, SlotTrace, Transaction, TokenPair, dumps


class DatasetFormatError(ValueError):
    pass


def _tx_order(tx: Transaction):
    return (tx.slot_id, tx.created_at, tx.tx_id)


def write_dataset(d: Dataset, out: str | Path) -> Path:
    out = Path(out)
    (out / "prices").mkdir(parents=True, exist_ok=True)
    with open(out / "slots.jsonl", "w", encoding="ascii", newline="\n") as f:
        for s in d.slots:
            f.write(dumps(s.to_dict()) + "\n")
    with open(out / "transactions.jsonl", "w", encoding="ascii", newline="\n") as f:
        for tx in sorted(d.transactions.values(), key=_tx_order):
            f.write(dumps(tx.to_dict()) + "\n")
    for name, trace in sorted(d.price_traces.items()):
        (out / "prices" / f"{name}.csv").write_text(format_price_csv(trace), encoding="ascii")
    (out / "meta.json").write_text(json.dumps(d.metadata, indent=2, sort_keys=True) + "\n", encoding="ascii")
    return out


def _jsonl(path: Path):
    with open(path, encoding="ascii") as f:
        for n, line in enumerate(f, 1):
            if line.strip():
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as e:
                    raise DatasetFormatError(f"{path.name}:{n}: {e}") from None


def read_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    if not path.is_dir():
        raise DatasetFormatError(f"{path} is not a dataset directory")
    for name in ("slots.jsonl", "transactions.jsonl", "meta.json"):
        if not (path / name).exists():
            raise DatasetFormatError(f"{path} lacks {name}")
    try:
        slots = [SlotTrace.from_dict(x) for x in _jsonl(path / "slots.jsonl")]
        txs = {}
        for x in _jsonl(path / "transactions.jsonl"):
            tx = Transaction.from_dict(x)
            txs[tx.tx_id] = tx
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, DatasetFormatError):
            raise
        raise DatasetFormatError(f"malformed record: {e!r}") from None
    traces = {}
    if (path / "prices").is_dir():
        for f in sorted((path / "prices").glob("*.csv")):
            traces[f.stem] = read_price_csv(f, TokenPair.parse(f.stem))
    meta = json.loads((path / "meta.json").read_text(encoding="ascii"))
    return Dataset(slots, txs, traces, meta)
