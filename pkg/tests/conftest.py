import os

import pytest

from acceptance_log import ACCEPTANCE_LINES

os.environ.setdefault("PERIODICA_THREADS", "1")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance runs")


@pytest.fixture
def tmp_out(tmp_path):
    return tmp_path / "out"



def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
