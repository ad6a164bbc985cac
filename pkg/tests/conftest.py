import json
import os
import sys

import pytest

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "data")
sys.path.insert(0, HERE)


@pytest.fixture(scope="session")
def oracle_values():
    with open(os.path.join(DATA, "oracle_values.json")) as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def lut():
    from pcrampim.stochastic import build_lut

    return build_lut()


@pytest.fixture
def data_path():
    return lambda name: os.path.join(DATA, name)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
