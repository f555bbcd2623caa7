from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

N_CRITERIA = 8
_verdicts: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record one acceptance line: ``verdict(n, ok, detail)``."""

    def record(n: int, ok: bool, detail: str) -> bool:
        _verdicts[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(_verdicts[n])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        terminalreporter.write_line(_verdicts.get(n, f"criterion {n}: FAIL  (not run to completion)"))
