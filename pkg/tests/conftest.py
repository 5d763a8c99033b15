import time
from contextlib import contextmanager

import pytest

_VERDICTS = []


@pytest.fixture
def criterion():
    """Times an acceptance criterion, enforces its runtime limit and records a verdict line."""

    @contextmanager
    def run(number, limit=None):
        start = time.perf_counter()
        ok = False
        try:
            yield
            elapsed = time.perf_counter() - start
            if limit is not None:
                assert elapsed < limit, "criterion %d took %.2fs (limit %ss)" % (number, elapsed, limit)
            ok = True
        finally:
            elapsed = time.perf_counter() - start
            limit_text = "limit %ss" % limit if limit is not None else "no limit"
            line = "criterion %d: %s (%.2fs, %s)" % (number, "PASS" if ok else "FAIL", elapsed, limit_text)
            _VERDICTS.append((number, line))
            print("\n" + line)

    return run


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
