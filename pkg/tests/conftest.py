from __future__ import annotations

import pytest

_LINES: list[str] = []


@pytest.fixture
def criterion():
    def report(num: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}"
        print(line)
        _LINES.append(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance")
        for line in sorted(_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
