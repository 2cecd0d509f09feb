import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tokenlink import pipeline  # noqa: E402


@pytest.fixture(scope="session")
def codebook():
    return pipeline.default_codebook()


@pytest.fixture(scope="session")
def images():
    return pipeline.bundled_images()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
