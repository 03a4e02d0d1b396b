import time
from contextlib import contextmanager

import pytest

ACCEPTANCE_RESULTS: dict[int, tuple[str, str, float]] = {}


@pytest.fixture
def criterion():
    """Record pass/fail and wall time of one acceptance criterion; the
    summary is printed at the end of the session."""

    @contextmanager
    def track(number: int, title: str, budget_s: float):
        start = time.perf_counter()
        try:
            yield
        except BaseException:
            ACCEPTANCE_RESULTS[number] = ("FAIL", title, time.perf_counter() - start)
            raise
        elapsed = time.perf_counter() - start
        status = "PASS" if elapsed < budget_s else f"FAIL (over {budget_s:g} s budget)"
        ACCEPTANCE_RESULTS[number] = (status, title, elapsed)
        assert elapsed < budget_s, f"criterion {number} took {elapsed:.1f} s, budget {budget_s:g} s"

    return track


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        status, title, elapsed = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {status:<4}  {title}  [{elapsed:.2f} s]")
