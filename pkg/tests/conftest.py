import pytest

_VERDICTS = {}


@pytest.fixture
def acceptance():
    """Record one criterion's verdict, then fail the test if it did not pass."""

    def record(number, ok, detail):
        _VERDICTS[number] = (bool(ok), detail)
        assert ok, f"criterion {number} failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        ok, detail = _VERDICTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
