"""``pbsim`` command line.

Exit codes: 0 success, 1 usage error, 2 validation or configuration failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .amm import UnknownTransactionError, replay_block
from .auction import run_scenario
from .config import ConfigError, load_scenario
from .io import DatasetFormatError, read_dataset, write_dataset
from .model import validate_dataset
from .reports import REPORTS, run_report
from .units import format_units

EXIT_OK, EXIT_USAGE, EXIT_INVALID = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 by default; usage errors are 1 here
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def cmd_simulate(args) -> int:
    try:
        cfg = load_scenario(args.config)
    except FileNotFoundError:
        print(f"error: config file {args.config} not found", file=sys.stderr)
        return EXIT_INVALID
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_INVALID
    d = run_scenario(cfg)
    out = write_dataset(d, args.out)
    winners = sum(s.winner is not None for s in d.slots)
    print(f"wrote {len(d.slots)} slots ({winners} with a winner), {len(d.transactions)} transactions to {out}")
    return EXIT_OK


def _load_valid(path) -> tuple[object, list]:
    d = read_dataset(path)
    return d, validate_dataset(d)


def cmd_validate(args) -> int:
    try:
        _, problems = _load_valid(args.dataset)
    except DatasetFormatError as e:
        print(f"invalid dataset: {e}", file=sys.stderr)
        return EXIT_INVALID
    for v in problems:
        print(v)
    if problems:
        print(f"{len(problems)} violation(s)", file=sys.stderr)
        return EXIT_INVALID
    print("ok")
    return EXIT_OK


def cmd_analyze(args) -> int:
    if args.report != "all" and args.report not in REPORTS:
        raise UsageError(f"unknown report {args.report!r}; choose from {', '.join([*REPORTS, 'all'])}")
    try:
        d, problems = _load_valid(args.dataset)
    except DatasetFormatError as e:
        print(f"invalid dataset: {e}", file=sys.stderr)
        return EXIT_INVALID
    if problems:
        for v in problems:
            print(v, file=sys.stderr)
        return EXIT_INVALID
    for p in run_report(d, args.report, args.out):
        print(p)
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        d = read_dataset(args.dataset)
        slot, block = d.find_block(args.block)
    except DatasetFormatError as e:
        print(f"invalid dataset: {e}", file=sys.stderr)
        return EXIT_INVALID
    except KeyError:
        print(f"error: unknown block {args.block}", file=sys.stderr)
        return EXIT_INVALID
    try:
        res = replay_block(slot.pool_states_at_slot_start, block, d.transactions)
    except (UnknownTransactionError, KeyError) as e:
        print(f"invalid dataset: {e}", file=sys.stderr)
        return EXIT_INVALID
    doc = {
        "block_id": block.block_id,
        "slot_id": block.slot_id,
        "builder_id": block.builder_id,
        "bid": format_units(block.bid),
        "revenue": format_units(block.revenue),
        "txs": [
            {
                "position": e.position,
                "tx_id": e.tx_id,
                "status": e.status.value,
                "pool_id": e.pool_id,
                "direction": e.direction.value if e.direction else None,
                "amount_in": format_units(e.amount_in),
                "amount_out": format_units(e.amount_out),
                "exec_price": e.exec_price,
            }
            for e in res.entries
        ],
        "final_pools": {k: v.to_dict() for k, v in res.final_pools.items()},
    }
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pbsim", description="PBS block-auction simulator and analytics")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("simulate", help="run a scenario and write a dataset directory")
    s.add_argument("--config", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="emit CSV reports for a dataset")
    a.add_argument("dataset", type=Path)
    a.add_argument("--report", required=True, help=f"one of: {', '.join([*REPORTS, 'all'])}")
    a.add_argument("--out", required=True, type=Path)
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("replay", help="replay one block and print per-tx outcomes as JSON")
    r.add_argument("dataset", type=Path)
    r.add_argument("--block", required=True)
    r.set_defaults(func=cmd_replay)

    v = sub.add_parser("validate", help="check dataset invariants")
    v.add_argument("dataset", type=Path)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
