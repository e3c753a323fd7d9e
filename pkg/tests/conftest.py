"""Shared fixtures and the acceptance summary printed after the run."""
from __future__ import annotations

ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def record(number: int, title: str, ok: bool, detail: str) -> None:
    """Store one acceptance outcome; printed by ``pytest_terminal_summary``."""
    ACCEPTANCE[number] = (title, bool(ok), detail)
    print(f"acceptance {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
