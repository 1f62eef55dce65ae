import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from polyunmix.synth import SynthConfig, generate  # noqa: E402

# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def noiseless_instance():
    """Synthetic m=3, d=16, n=2500, sigma=0, alpha=0.5 instance."""
    return generate(SynthConfig(d=16, m=3, n=2500, noise_sigma=0.0, dirichlet_alpha=0.5, seed=0))
