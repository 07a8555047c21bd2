import time
from contextlib import contextmanager

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_ACCEPTANCE: list[tuple[str, str, bool, float, str]] = []


@contextmanager
def _record(number: str, title: str):
    # Tests may set info["seconds"] when the timed work happened in a fixture.
    start = time.perf_counter()
    info: dict = {}
    try:
        yield info
    except BaseException as exc:
        detail = f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        secs = info.get("seconds", time.perf_counter() - start)
        _ACCEPTANCE.append((number, title, False, secs, detail))
        raise
    _ACCEPTANCE.append((number, title, True, info.get("seconds", time.perf_counter() - start), ""))


@pytest.fixture
def criterion():
    """Context manager recording one acceptance criterion's verdict."""
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, secs, detail in sorted(_ACCEPTANCE, key=lambda r: int(r[0])):
        line = f"[{'PASS' if ok else 'FAIL'}] {number}. {title} ({secs:.2f}s)"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)
