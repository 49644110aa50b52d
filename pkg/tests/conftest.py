import numpy as np
import pytest

_ACCEPTANCE: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def record():
    """Collect one result line per acceptance criterion for the terminal summary."""

    def add(criterion: int, passed: bool, detail: str) -> bool:
        _ACCEPTANCE.append(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
