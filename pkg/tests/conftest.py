import dataclasses

import numpy as np
import pytest
from hypothesis import settings

from vicinity_shift.core import CovariateShiftInstance, Interval, KnownExponents, RegressionFunction, Uniform
from vicinity_shift.scenarios import get_scenario

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("repo")

# Filled by the acceptance module; echoed once at the end of the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def example():
    return get_scenario("example")


@pytest.fixture(scope="session")
def half_tau1():
    return get_scenario("exp-a0.5-t1")


def same_instance(eta=lambda x: 0.5 * np.asarray(x) + 0.5, alpha=1.0, c_alpha=0.5):
    """P = Q = uniform on [-1, 1] with a linear regression function."""
    u = Uniform(-1.0, 1.0)
    reg = RegressionFunction(eta, alpha, c_alpha, name="same")
    return CovariateShiftInstance(u, u, reg, 1.0, 2.0, Interval(-1.0, 1.0), KnownExponents(1.0, 1.0, 1.0, 1.0))


def with_c_alpha(instance, c_alpha):
    return dataclasses.replace(instance, reg=dataclasses.replace(instance.reg, c_alpha=c_alpha))


_curve_cache = {}


def default_curves(name):
    """All measure curves of a shipped scenario on the default radius grid (cached per session)."""
    from vicinity_shift.cli import dissim_curves
    from vicinity_shift.dissim import default_r_grid

    if name not in _curve_cache:
        spec = get_scenario(name)
        _curve_cache[name] = {c.name: c for c in dissim_curves(spec, default_r_grid(spec.instance.ambient.length))}
    return _curve_cache[name]
