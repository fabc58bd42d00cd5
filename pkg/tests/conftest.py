"""Collects one verdict line per acceptance criterion and prints them at the end."""
import pytest

VERDICTS = {}


@pytest.fixture
def verdict(request):
    """``verdict(k, ok, detail)`` records criterion ``k`` and prints its line."""
    def record(k, ok, detail=""):
        line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        VERDICTS[k] = line
        # shown live with -s, and always in the terminal summary
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[k])
