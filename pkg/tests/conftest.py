import os

import numpy as np
import pytest

# Acceptance tests record "criterion N: PASS/FAIL ..." lines here.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_collection_modifyitems(config, items):
    if os.environ.get("HEXPRESS_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="long-running; set HEXPRESS_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
