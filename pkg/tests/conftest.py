import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import ACCEPTANCE_LINES, custom_graph  # noqa: E402
from ipodsim.graphs import build_complete, build_cycle  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["complete", "cycle", "custom"])
def any_graph(request):
    if request.param == "complete":
        return build_complete(6)
    if request.param == "cycle":
        return build_cycle(9)
    return custom_graph()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda text: int(text.split()[1])):
            terminalreporter.write_line(line)
