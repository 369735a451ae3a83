import itertools
import sys
from importlib import resources
from pathlib import Path

import pytest

from dsmseq import core

DATA = Path(str(resources.files("dsmseq") / "data"))


def enumerate_optimum(case):
    """Plain factorial enumeration, no pruning."""
    best = None
    for perm in itertools.permutations(case.node_ids):
        score = core.feedback_count(case, perm)
        if best is None or score < best:
            best = score
    return best


@pytest.fixture
def c3():
    return core.chain_case(3)


@pytest.fixture
def cycle3():
    return core.cycle_case(3)


@pytest.fixture
def ucav():
    return core.load_case(DATA / "ucav_fragment.json")


@pytest.fixture
def data_dir():
    return DATA


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for entry in sorted(module.RESULTS):
        terminalreporter.write_line(module.line(*entry))
