"""Zeroth-order optimization with one-point residual feedback.

The main entry points are the estimators in :mod:`zo_residual.estimators`,
the SGD driver in :mod:`zo_residual.optimizer`, the benchmark problems in
:mod:`zo_residual.problems` and the experiment harness behind the ``zo``
command.
"""

from ._kernels import BACKEND
from .errors import (
    ConfigError,
    HorizonTooSmallError,
    IncompatibleComparisonError,
    InsufficientTraceError,
    InvalidBatchError,
    InvalidDimensionError,
    NonFiniteValueError,
    ScheduleUnderspecifiedError,
    UnstabilizableError,
    UnsupportedModeError,
    ZOError,
)
from .estimators import (
    ESTIMATORS,
    EstimatorState,
    GradientEstimate,
    draw_direction,
    estimate,
    one_point,
    residual,
    residual_minibatch,
    two_point_central,
    two_point_forward,
    two_point_stochastic_fixed,
    two_point_stochastic_independent,
)
from .objective import Objective, ObjectiveMeta, additive_noise
from .problems import grid_make, lqr_make, make_qp
from .optimizer import OutputRule, Regime, Schedule, Trace, TraceOptions, make_schedule, run_sgd, select_output
from .smoothing import ApproxBounds, SmoothedEstimate, approx_bounds, smoothed_grad_mc, smoothed_value_mc

__version__ = "0.1.0"
