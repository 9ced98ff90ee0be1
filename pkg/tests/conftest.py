import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from eebench.synthgen import Protocol, synthetic_dataset

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def quick_dataset():
    """Three synthetic subjects on the short walk/run protocol, loaded from disk."""
    return synthetic_dataset(5, 3, Protocol.quick())


@pytest.fixture(scope="session")
def full_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("full")
    return synthetic_dataset(9, 2, Protocol.full(), root=root)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_collection_modifyitems(config, items):
    if not os.environ.get("EEBENCH_DATA"):
        skip = pytest.mark.skip(reason="set EEBENCH_DATA to the public dataset root to run real-data checks")
        for item in items:
            if "realdata" in item.keywords:
                item.add_marker(skip)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
