import pytest

_LINES = "acceptance_lines"


def pytest_configure(config):
    setattr(config, _LINES, {})


@pytest.fixture
def acceptance_log(request):
    """Record one PASS/FAIL line for an acceptance criterion."""

    def log(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        getattr(request.config, _LINES)[number] = line
        print(line)

    return log


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, _LINES, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
