from __future__ import annotations

import pytest

from isacsim import builtin_params
from isacsim.params import Direction


@pytest.fixture(params=[d.value for d in Direction])
def direction(request) -> str:
    return request.param


@pytest.fixture
def front():
    return builtin_params("front")


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[str, str] = {}


@pytest.fixture
def acceptance_line():
    def record(key: str, passed: bool, detail: str) -> None:
        line = f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[key] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.split("(")[0].rstrip("abc")), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
