import json
from datetime import datetime, timezone

import pytest

from estima.ledger import Ledger, Transaction, TxSlot, dump_ledger
from estima.synth import gen_fig1a, gen_fig1b

UTC = timezone.utc


def mk_tx(txid, height, inputs, outputs, time=None):
    """Tiny constructor: slots are (addr, value) pairs or TxSlot instances."""
    ts = time or datetime(2022, 1, 25, tzinfo=UTC).replace(hour=height % 24)
    wrap = lambda slots: tuple(s if isinstance(s, TxSlot) else TxSlot(*s) for s in slots)
    return Transaction(txid, height, ts, wrap(inputs), wrap(outputs))


def write_jsonl(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs))
    return path


def write_ledger(path, ledger):
    dump_ledger(list(ledger), path)
    return path


@pytest.fixture
def fig1a():
    return gen_fig1a()


@pytest.fixture
def fig1b():
    return gen_fig1b()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
    missing = [n for n in range(1, 15) if n not in results]
    if missing:
        terminalreporter.write_line(f"not run or errored before recording: {missing}")
