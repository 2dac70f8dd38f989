import numpy as np
import pytest

SINGLE_PHRASE_SENTENCES = [
    "There was no answer.",
    "\"I'm so hungry.\"",
    "\"Too hard!\"",
    "They climbed the stairs.",
    "\"What's the matter now?\"",
    "\"We'd better make sure.\"",
    "\"Do you think we're so stupid?\"",
    "\"I'm sorry.\"",
    "He wanted a turnip.",
    "They both tugged and tugged.",
    "But the turnip didn't move.",
    "\"It's enormous!\" cried Jack.",
]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_NOTES = {}


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    ACCEPTANCE_NOTES.setdefault(name, {})["outcome"] = report.outcome
    ACCEPTANCE_NOTES[name]["duration"] = report.duration


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_NOTES:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_NOTES):
        note = ACCEPTANCE_NOTES[name]
        status = "PASS" if note.get("outcome") == "passed" else "FAIL"
        detail = note.get("detail", "")
        terminalreporter.write_line(f"{name}: {status} ({note.get('duration', 0):.1f}s) {detail}")


@pytest.fixture
def acceptance_note(request):
    def record(detail):
        ACCEPTANCE_NOTES.setdefault(request.node.name, {})["detail"] = detail
        print(f"{request.node.name}: {detail}")
    return record
