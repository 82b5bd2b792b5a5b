import sys
from pathlib import Path

from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

import pytest

_RESULTS = []


@pytest.fixture
def acceptance():
    def record(number, name, ok, detail):
        _RESULTS.append((number, f"CRITERION {number} {'PASS' if ok else 'FAIL'} [{name}] {detail}"))
    return record


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_RESULTS):
            terminalreporter.write_line(line)
