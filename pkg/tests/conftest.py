import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from clrajo.channel import SystemConfig  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def desk():
    """Desk-scale system with the near-near placement (auto regimes)."""
    return SystemConfig()


@pytest.fixture
def small():
    """Tiny system for dense oracle comparisons."""
    return SystemConfig(bs_shape=(4, 2), ris_shape=(4, 2), ue_shape=(1, 2), users=2, rf_chains=4,
                        paths_bsris=2, paths_risuser=2)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[key])
