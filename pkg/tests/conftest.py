import pytest

_RESULTS = []


@pytest.fixture
def criterion(capsys):
    """Record and print one ``PASS``/``FAIL`` line per acceptance criterion."""
    def report(k, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
        _RESULTS.append((k, line))
        with capsys.disabled():
            print("\n" + line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_RESULTS):
            terminalreporter.write_line(line)
