import pytest

import _contract
import mmtwist.baselines
import mmtwist.twist

ACCEPTANCE_LINES = []


def _recording(fn):
    def wrapper(*args, **kwargs):
        emb = fn(*args, **kwargs)
        _contract.record(emb)
        return emb

    wrapper.__wrapped__ = fn
    return wrapper


def pytest_configure(config):
    # every power iteration anywhere in the suite feeds the contract record
    wrapped = _recording(mmtwist.twist.power_iterate)
    mmtwist.twist.power_iterate = wrapped
    mmtwist.baselines.power_iterate = wrapped


def pytest_collection_modifyitems(session, config, items):
    # the contract criterion summarizes every other test's power iterations
    items.sort(key=lambda item: item.get_closest_marker("contract") is not None)


@pytest.fixture
def acceptance_report():
    return ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    tr = terminalreporter
    if ACCEPTANCE_LINES:
        tr.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            tr.write_line(line)
    tr.section("regularization contract")
    tr.write_line(
        f"{len(_contract.RUNS)} power-iteration runs, "
        f"{sum(_contract.RUNS)} iterations, {len(_contract.VIOLATIONS)} violations"
    )
    for line in _contract.VIOLATIONS[:20]:
        tr.write_line("  " + line)


def pytest_sessionfinish(session, exitstatus):
    if _contract.VIOLATIONS and exitstatus == 0:
        session.exitstatus = 1
