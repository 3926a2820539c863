import os
from pathlib import Path

import pytest

from fragility.cases import frame_from_table
from fragility.stats import Table2x2, fisher_test

# one verdict line per acceptance criterion, printed after the test lines
# (fd-level capture would swallow them mid-run)
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

# the worked summary table (quit-smoking arm first) and the motivating
# insignificant one
TABLE3 = (102, 326, 216, 985)
TABLE2 = (20, 380, 15, 385)


@pytest.fixture(scope="session")
def table3():
    return Table2x2(*TABLE3)


@pytest.fixture(scope="session")
def table2():
    return Table2x2(*TABLE2)


@pytest.fixture(scope="session")
def frame3(table3):
    return frame_from_table(table3)


@pytest.fixture(scope="session")
def frame2(table2):
    return frame_from_table(table2)


@pytest.fixture(scope="session")
def fisher05():
    return fisher_test(alpha=0.05)


def nhefs_path():
    """Follow-up study extract: env override, then tests/data/nhefs.csv."""
    env = os.environ.get("FRAGILITY_NHEFS")
    if env and Path(env).is_file():
        return Path(env)
    bundled = Path(__file__).parent / "data" / "nhefs.csv"
    if bundled.is_file():
        return bundled
    return None


@pytest.fixture(scope="session")
def nhefs_frame():
    path = nhefs_path()
    if path is None:
        pytest.skip("follow-up study extract not supplied "
                    "(set FRAGILITY_NHEFS or drop tests/data/nhefs.csv)")
    from fragility.cases import load_csv

    return load_csv(str(path), arm="qsmk", outcome="death", covariates=("smokeyrs",))
