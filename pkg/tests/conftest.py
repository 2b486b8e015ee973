from __future__ import annotations

import dataclasses
import time
from importlib import resources

import pytest

from pbsim.agents import Schedule
from pbsim.auction import run_scenario
from pbsim.config import load_scenario


@pytest.fixture(scope="session")
def canonical_path():
    with resources.as_file(resources.files("pbsim") / "scenarios" / "canonical.yaml") as p:
        yield p


@pytest.fixture(scope="session")
def canonical_cfg(canonical_path):
    return load_scenario(canonical_path)


@pytest.fixture(scope="session")
def canonical_run(canonical_cfg):
    t0 = time.perf_counter()
    d = run_scenario(canonical_cfg)
    return d, time.perf_counter() - t0


@pytest.fixture(scope="session")
def canonical(canonical_run):
    return canonical_run[0]


@pytest.fixture(scope="session")
def frictionless_cfg(canonical_cfg):
    """Canonical scenario with no risk discount and no CEX frictions."""
    searchers = tuple(dataclasses.replace(s, risk=Schedule.constant(0.0)) for s in canonical_cfg.searchers)
    flags = dataclasses.replace(canonical_cfg.flags, cex_fee_bps=0.0, cex_impact=0.0)
    return dataclasses.replace(canonical_cfg, searchers=searchers, flags=flags, slot_count=10)


# -- acceptance summary ----------------------------------------------------------

_ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def record_criterion():
    def record(key: str, ok: bool, detail: str) -> None:
        _ACCEPTANCE[key] = (ok, detail)
        print(f"criterion {key}: {'PASS' if ok else 'FAIL'} {detail}")
    return record


def _crit_order(key: str):
    num = "".join(c for c in key if c.isdigit())
    return int(num or 0), key


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=_crit_order):
        ok, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")

