import functools

import pytest

from settleflow.core import Transaction, WeekDataset
from settleflow.synthgen import GeneratorConfig, generate_week

# acceptance criterion number -> (passed, detail)
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@functools.lru_cache(maxsize=None)
def labeled_week(seed: int = 0, **overrides):
    return generate_week(GeneratorConfig(seed=seed, **overrides))


def tx(day, src, dst, value):
    return Transaction(day, src, dst, value)


def week_of(*txs, n_days=None, banks=()):
    return WeekDataset.from_transactions(txs, n_days=n_days, banks=banks)


@pytest.fixture
def synth_week():
    return labeled_week(0)
