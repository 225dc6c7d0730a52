import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; returns the verdict so the test can assert it."""

    def record(number, name, passed, detail=""):
        verdict = "PASS" if passed else "FAIL"
        request.config.stash[_LINES].append((number, f"criterion {number} {verdict}  {name}  {detail}"))
        print(f"criterion {number} {verdict}  {name}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda x: x[0]):
            terminalreporter.write_line(line)
