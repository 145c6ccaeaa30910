import json
from importlib import resources

import pytest

from fogsense.config import parse_config


@pytest.fixture(scope="session")
def example_config():
    data = json.loads(resources.files("fogsense.data").joinpath("example_config.json").read_text())
    return parse_config(data)


@pytest.fixture(scope="session")
def table(example_config):
    return example_config.error_table()


@pytest.fixture(scope="session")
def risk(example_config, table):
    """Risk inputs of the shipped config (energy priced in watts)."""
    return example_config.risk_inputs(table)


@pytest.fixture(scope="session")
def schedule(example_config):
    return example_config.period_schedule()


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record the outcome of an acceptance criterion for the summary lines."""
    from contextlib import contextmanager

    results = request.config.stash.setdefault(ACCEPTANCE, {})

    @contextmanager
    def check(number: int, title: str):
        info = {"detail": ""}
        try:
            yield info
        except BaseException as exc:
            first = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            results[number] = (title, "FAIL", info["detail"] or first)
            raise
        results[number] = (title, "PASS", info["detail"])

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, status, detail = results[number]
        line = f"criterion {number:2d} {status}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
