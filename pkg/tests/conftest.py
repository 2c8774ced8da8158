import numpy as np
import pytest

GATE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[GATE_LINES] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def gate(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash[GATE_LINES]

    def report(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} criterion {number:2d} {title}: {detail}"
        lines.append((number, line))
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(GATE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
