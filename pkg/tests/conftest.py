"""Shared fixtures and the acceptance summary printed at the end of a run."""
import pytest

ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def record():
    """``record(number, title, ok, detail)`` stores one acceptance outcome."""

    def _record(number: int, title: str, ok: bool, detail: str) -> None:
        ACCEPTANCE[number] = (title, bool(ok), detail)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
