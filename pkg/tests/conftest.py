from __future__ import annotations

import contextlib
import os
import time

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=50)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """``with criterion(n, title) as note:`` records a PASS/FAIL line for the summary."""
    store = request.config.stash.setdefault(_ACCEPTANCE, {})

    @contextlib.contextmanager
    def run(num: int, title: str):
        details: list[str] = []
        t0 = time.perf_counter()
        ok = False
        try:
            yield details.append
            ok = True
        finally:
            dt = time.perf_counter() - t0
            extra = f" ({'; '.join(details)})" if details else ""
            store[num] = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {title} [{dt:.2f}s]{extra}"

    return run


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for num in sorted(store):
            terminalreporter.write_line(store[num])
