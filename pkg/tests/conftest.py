import pytest

_VERDICTS = pytest.StashKey()


@pytest.fixture
def verdict(request):
    """``verdict(cid, ok, detail)`` records an acceptance line and asserts ``ok``."""
    lines = request.config.stash.setdefault(_VERDICTS, {})

    def record(cid, ok, detail):
        lines[cid] = f"{cid} {'PASS' if ok else 'FAIL'}: {detail}"
        print(lines[cid])
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(lines, key=lambda c: int(c[1:])):
        terminalreporter.write_line(lines[cid])
