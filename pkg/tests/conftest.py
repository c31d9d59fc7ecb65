import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wfsched.workloads import example_catalog, example_workflow  # noqa: E402


@pytest.fixture
def fig1():
    return example_workflow()


@pytest.fixture
def vms3():
    return example_catalog()


def pytest_terminal_summary(terminalreporter):
    from verdicts import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
