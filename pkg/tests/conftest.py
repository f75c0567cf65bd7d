import pathlib

import pytest

CONFIG_DIR = pathlib.Path(__file__).resolve().parent.parent / "configs"

_acceptance_lines = []


def record_acceptance_line(line):
    _acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(set(_acceptance_lines)):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def config_dir():
    return CONFIG_DIR
