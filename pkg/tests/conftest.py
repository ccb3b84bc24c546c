import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from gexp.core import VolatilityBand


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical cross-checks")


@pytest.fixture
def band():
    return VolatilityBand(0.5, 1.0)


@pytest.fixture
def unit_band():
    return VolatilityBand(1.0, 1.0)
