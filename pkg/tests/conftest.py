import os

import pytest

_CRITERIA = {}


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", help="run the simulation-study acceptance checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow") or os.environ.get("RELIKIT_STUDY_DIR"):
        return
    skip = pytest.mark.skip(reason="needs --runslow or RELIKIT_STUDY_DIR")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def criterion():
    """Record a one-line verdict for an acceptance criterion."""

    def report(number, ok, detail):
        _CRITERIA[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[n])
