import time

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("seeded", derandomize=True, deadline=None, max_examples=25)
settings.load_profile("seeded")

ACCEPTANCE_FILE = "test_acceptance.py"
# outcomes of the module suites in this session, read by the last acceptance criterion
SUITE = {"t0": time.perf_counter(), "failed": [], "passed": 0, "lines": []}


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture(scope="session")
def suite_log():
    return SUITE


def pytest_collection_modifyitems(session, config, items):
    # acceptance criteria run last so the suite criterion sees every module result
    items.sort(key=lambda item: item.path.name == ACCEPTANCE_FILE)


def pytest_runtest_logreport(report):
    if report.fspath.endswith(ACCEPTANCE_FILE):
        return
    if report.failed:
        SUITE["failed"].append(report.nodeid)
    elif report.when == "call":
        SUITE["passed"] += 1


def pytest_terminal_summary(terminalreporter):
    if SUITE["lines"]:
        terminalreporter.section("acceptance criteria")
        for line in SUITE["lines"]:
            terminalreporter.write_line(line)
