import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def criterion_report(request):
    """``report(n, ok, detail)`` records one acceptance line for the summary."""
    lines = request.config.stash[_LINES]

    def report(criterion, ok, detail):
        line = f"CRITERION {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        lines.append((criterion, line))

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[_LINES]
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
