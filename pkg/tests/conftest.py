import time
from contextlib import contextmanager

import pytest

_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.fixture
def criterion(request):
    """Context manager that records one PASS/FAIL line per acceptance criterion."""
    results = request.config.stash[_RESULTS]

    @contextmanager
    def run(number: int, title: str):
        t0 = time.perf_counter()
        notes: dict = {}
        try:
            yield notes
        except BaseException as exc:
            results.append((number, "FAIL", title, time.perf_counter() - t0, notes,
                            f"{type(exc).__name__}: {exc}"))
            raise
        results.append((number, "PASS", title, time.perf_counter() - t0, notes, ""))

    return run


def pytest_terminal_summary(terminalreporter, config):
    results = sorted(config.stash.get(_RESULTS, []), key=lambda r: r[0])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, title, secs, notes, detail in results:
        line = f"[{status}] criterion {number}: {title} ({secs:.1f}s)"
        if notes:
            line += " " + ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in notes.items())
        if detail:
            line += f" -- {detail.splitlines()[0][:200]}"
        terminalreporter.write_line(line)
