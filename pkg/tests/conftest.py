import pytest

ACCEPTANCE = {}


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion, then assert it."""
    def record(key, ok, detail):
        line = f"criterion {key:<3} {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[key] = line
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: (int(k.rstrip("abcd")), k)):
            terminalreporter.write_line(ACCEPTANCE[key])
