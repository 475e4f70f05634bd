import numpy as np
import pytest

from tamedcalc import build_model


def observed_orders(hs, errs):
    hs, errs = np.asarray(hs, float), np.asarray(errs, float)
    return np.log(errs[:-1] / errs[1:]) / np.log(hs[:-1] / hs[1:])


def write_mesh(path, text):
    path.write_text(text)
    return str(path)


@pytest.fixture(scope="session")
def interval3():
    return build_model("interval", refinement=3)


@pytest.fixture(scope="session")
def disk2():
    return build_model("disk", refinement=2)


@pytest.fixture(scope="session")
def sphere2():
    return build_model("sphere", refinement=2)


@pytest.fixture(scope="session")
def rect2():
    return build_model("rectangle", refinement=2)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
