import pytest

from coalloc.formats import load_instance


@pytest.fixture(scope="session")
def example():
    return load_instance("paper-4zone")


@pytest.fixture(scope="session")
def topo(example):
    return example.topology


@pytest.fixture(scope="session")
def book(example):
    return example.book


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
