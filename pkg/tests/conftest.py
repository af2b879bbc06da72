import pathlib
import sys

import pytest

sys.path.insert(0, str(pathlib.Path(__file__).parent))

from clusterplan import builtin_scenario  # noqa: E402


@pytest.fixture(scope="session")
def desk():
    return builtin_scenario("desk")


@pytest.fixture(scope="session")
def desk_open():
    return builtin_scenario("desk_open")


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
