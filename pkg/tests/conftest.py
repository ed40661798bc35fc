import pytest

CRITERIA = range(1, 15)
_results: dict[int, list[tuple[bool, str]]] = {}
_ran_acceptance = False


@pytest.fixture
def criterion():
    """Record ``(number, passed, detail)`` for the acceptance summary."""
    global _ran_acceptance
    _ran_acceptance = True

    def record(number, passed, detail):
        _results.setdefault(number, []).append((bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ran_acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for num in CRITERIA:
        parts = _results.get(num)
        if not parts:
            terminalreporter.write_line(f"CRITERION {num} FAIL: not evaluated (test error)")
            continue
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"CRITERION {num} {'PASS' if ok else 'FAIL'}: {detail}")
