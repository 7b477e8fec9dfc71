import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, tuple[str, bool, str]] = {}


def data_root() -> Path:
    return Path(os.environ.get("GLGNN_DATA_ROOT", Path(__file__).resolve().parents[1] / "data"))


@pytest.fixture
def criterion():
    """Record one acceptance line: criterion(number, title, passed, detail)."""
    def record(num: int, title: str, passed: bool, detail: str = ""):
        _CRITERIA[num] = (title, bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num}. {title}: {detail}")
