"""Continuous-time transfer entropy for jump and spiking point processes.

The package simulates coupled history-dependent point processes, evaluates
path log-densities and the pathwise transfer entropy with its decomposition
into jump contributions and a non-spiking rate, estimates transfer entropy
rates empirically and from discrete-time binning, and computes
source-marginalized spike rates by Monte Carlo marginalization with an
independent filtering cross-check.
"""

__version__ = "0.1.0"

from . import core, models, simulate, pathmeasure, coarse, estimators, figures  # noqa: F401
from .core import (  # noqa: F401
    ConditionalIntensity,
    HistoryWindows,
    JointSpikeRecord,
    JumpTrajectory,
    SpikeTrain,
)
