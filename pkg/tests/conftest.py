import numpy as np
import pytest

from postureguard.synth import SimulatorConfig, synth_dataset


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running end-to-end runs")


@pytest.fixture(scope="session")
def tiny_dataset():
    """2 subjects x 19 classes x 2 samples x 12 frames."""
    return synth_dataset(SimulatorConfig(seed=3, subjects=2, samples_per_class=2, frames_per_sample=12))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, filled in by tests/test_acceptance.py
CRITERIA: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
