"""
Shared pytest setup: import paths and the slow marker
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root and src to path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))
sys.path.insert(0, str(project_root / "src"))

from measure import DiscreteMeasure  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo acceptance runs (deselect with -m 'not slow')")


@pytest.fixture
def two_atoms():
    """1/2 delta_1 + 1/2 delta_2"""
    return DiscreteMeasure((1.0, 2.0), (0.5, 0.5))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_measure(rng):
    """Factory: 2 to 6 atoms spread in [low, high] with Dirichlet(2) weights"""
    def make(low: float = 1.0, high: float = 5.0) -> DiscreteMeasure:
        n = int(rng.integers(2, 7))
        while True:
            atoms = np.sort(rng.uniform(low, high, size=n))
            if np.min(np.diff(atoms)) > 0.05:
                break
        return DiscreteMeasure.from_masses(atoms, rng.dirichlet(2.0 * np.ones(n)))
    return make
