import os

import hypothesis
import numpy as np
import pytest

from ipmsaddle.landscape import GinzburgLandau1D, ToyPotential2D

hypothesis.settings.register_profile("ci", max_examples=100, deadline=None, derandomize=True)
hypothesis.settings.register_profile("dev", max_examples=30, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture(scope="session")
def toy():
    return ToyPotential2D()


@pytest.fixture(scope="session")
def ch():
    return GinzburgLandau1D.cahn_hilliard()


@pytest.fixture(scope="session")
def ac():
    return GinzburgLandau1D.allen_cahn()


def refine_saddle(model, p, steps=20):
    """Newton polish of a rounded saddle location."""
    p = np.array(p, dtype=float)
    for _ in range(steps):
        p = p - np.linalg.solve(model.hessian(p), model.gradient(p))
    return p


@pytest.fixture(scope="session")
def toy_saddles(toy):
    return [refine_saddle(toy, s) for s in ToyPotential2D.SADDLES]


_CRITERIA: list[str] = []


@pytest.fixture(scope="session")
def report():
    """Record one pass/fail line per acceptance criterion."""

    def add(name, passed, detail=""):
        line = f"{name}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        _CRITERIA.append(line)
        print(line)
        return passed

    return add


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
