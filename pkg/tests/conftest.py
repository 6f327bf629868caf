import pytest

from nsbandit.core import SequenceArm

# acceptance verdict lines, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def make_arms(fns):
    return [SequenceArm(i, f) for i, f in enumerate(fns)]


@pytest.fixture
def arms_from():
    return make_arms
