import pytest

_RESULTS = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """criterion number -> {"title", "ok", "detail"}; printed in the terminal summary."""
    return _RESULTS


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_RESULTS):
        r = _RESULTS[n]
        status = "PASS" if r["ok"] else "FAIL"
        terminalreporter.write_line(f"[{status}] {n:>2}. {r['title']}: {r['detail']}")
