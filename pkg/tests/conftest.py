import pytest

from rulecheck.corpus import figure_rules, figure_ruleset

MINIMAL = 'alert http any any -> any any (msg:"x"; sid:1;)'


@pytest.fixture(scope="session")
def figures():
    return figure_rules()


@pytest.fixture(scope="session")
def figure_set():
    return figure_ruleset()


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
