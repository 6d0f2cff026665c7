"""Nonparametric classification under covariate shift on the real line.

Dissimilarity measures between source and target marginals, a k-NN
classifier whose k follows the theoretical rates, and the sample-size sweep
that compares the two k-selection rules.
"""

from .core import (
    INF,
    SOURCE,
    TARGET,
    CovariateShiftInstance,
    Interval,
    KnownExponents,
    LabeledSample,
    RegressionFunction,
    Uniform,
)
from .scenarios import get_scenario, scenario_names

__all__ = [
    "INF",
    "SOURCE",
    "TARGET",
    "CovariateShiftInstance",
    "Interval",
    "KnownExponents",
    "LabeledSample",
    "RegressionFunction",
    "Uniform",
    "get_scenario",
    "scenario_names",
]
__version__ = "0.1.0"
