import pytest

ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Criterion number -> list of (part, passed, detail); printed after the run."""
    return request.config.stash.setdefault(ACCEPTANCE_KEY, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(ACCEPTANCE_KEY, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(log):
        parts = log[num]
        status = "PASS" if all(p[1] is True for p in parts) else (
            "WARN" if all(p[1] in (True, "warn") for p in parts) else "FAIL")
        detail = "; ".join(f"{name}: {'ok' if ok is True else ok if ok == 'warn' else 'FAILED'} ({d})"
                           for name, ok, d in parts)
        terminalreporter.write_line(f"criterion {num}: {status} - {detail}")
