import random
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from oblivsd.harness import make_fixture  # noqa: E402

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

VECTORS = Path(__file__).parent / "vectors"

# criterion number -> (title, passed, detail), filled in by test_acceptance
ACCEPTANCE = {}


@pytest.fixture
def fx4():
    return make_fixture(4, random.Random(4))


@pytest.fixture(scope="session")
def fx8():
    return make_fixture(8, random.Random(8))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(
            f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {detail}")
