import numpy as np
import pytest

from quadfunc.sequences import ProblemInstance, constant, explicit, exponential, polynomial


def make_instance(a=1.0, p=1.0, eps=0.1, sigma=0.1, n_max=200, L=1.0, d=1.0, **kw):
    return ProblemInstance.build(
        alpha=polynomial("alpha", a), gamma=polynomial("gamma", p),
        eps=eps, sigma=sigma, L=L, d=d, n_max=n_max, **kw,
    )


def unit_instance(n_max=4, eps=0.0, sigma=0.0, **kw):
    """alpha = gamma = omega = 1, lambda = 1."""
    return ProblemInstance.build(
        alpha=constant("alpha"), gamma=constant("gamma"), eps=eps, sigma=sigma, n_max=n_max, **kw,
    )


@pytest.fixture
def sobolev():
    return make_instance()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


__all__ = ["make_instance", "unit_instance", "constant", "explicit", "exponential", "polynomial"]


def pytest_terminal_summary(terminalreporter):
    from tests.acceptance_report import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
