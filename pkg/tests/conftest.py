from __future__ import annotations

import pytest

_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per criterion; a criterion passes only if its test body completes."""
    lines = request.config.stash[_ACCEPTANCE]
    state = {}

    def record(number: int, title: str, summary: str = "") -> None:
        state.update(number=number, title=title, summary=summary)
        lines[number] = f"FAIL {number}. {title}"

    def note(summary: str) -> None:
        state["summary"] = summary

    record.note = note
    yield record
    if state:
        failed = getattr(request.node, "_acceptance_failed", True)
        tag = "FAIL" if failed else "PASS"
        extra = f": {state['summary']}" if state["summary"] else ""
        lines[state["number"]] = f"{tag} {state['number']}. {state['title']}{extra}"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item._acceptance_failed = rep.failed


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[_ACCEPTANCE]
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
