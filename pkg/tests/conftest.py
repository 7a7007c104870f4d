import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mippdpg.model import (build_block_model, default_discontinuous_spec,  # noqa: E402
                           default_smooth_spec)


@pytest.fixture(scope="session")
def smooth_spec():
    return default_smooth_spec()


@pytest.fixture(scope="session")
def smooth100():
    return build_block_model(default_smooth_spec(), 100)


@pytest.fixture(scope="session")
def disc100():
    return build_block_model(default_discontinuous_spec(), 100)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)
