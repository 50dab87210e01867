"""Zeroth-order gradient estimators built on Gaussian directions.

Each estimator perturbs ``x`` along a standard-normal direction ``u`` with
exploration radius ``delta`` and returns a :class:`GradientEstimate`.  The
residual estimators additionally take and return an :class:`EstimatorState`
holding the previous perturbed value and direction; the caller owns it.

All estimators accept ``x`` of shape ``(d,)`` or ``(n, d)``.  In the second
form the ``n`` rows are independent replicas, each with its own directions
and samples, and ``queries_used`` counts every evaluated point.

Randomness is consumed in a fixed order: directions first, then samples.
Deterministic objectives do not consume samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidBatchError, InvalidDimensionError, NonFiniteValueError, UnsupportedModeError
from .objective import Objective

__all__ = [
    "EstimatorState",
    "GradientEstimate",
    "ESTIMATORS",
    "QUERIES_PER_STEP",
    "draw_direction",
    "estimate",
    "one_point",
    "residual",
    "residual_minibatch",
    "two_point_central",
    "two_point_forward",
    "two_point_stochastic_fixed",
    "two_point_stochastic_independent",
]


@dataclass(frozen=True)
class GradientEstimate:
    """One gradient estimate.

    ``observed`` is the freshly queried perturbed value (batch mean for the
    mini-batch estimator) and ``peak_abs`` the largest magnitude among all
    values queried by the call.
    """

    g: np.ndarray
    queries_used: int
    observed: float | np.ndarray
    peak_abs: float


@dataclass(frozen=True)
class EstimatorState:
    """Residual-feedback memory carried from one call to the next."""

    prev_value: Optional[float | np.ndarray] = None
    prev_direction: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.prev_value is None) != (self.prev_direction is None):
            raise ValueError("prev_value and prev_direction must be both set or both absent")

    @property
    def bootstrapped(self) -> bool:
        return self.prev_value is not None


def draw_direction(rng: np.random.Generator, d: int, n: Optional[int] = None) -> np.ndarray:
    """Standard-normal direction of length ``d`` (``n`` of them if given)."""
    if int(d) != d or d < 1:
        raise InvalidDimensionError(f"direction dimension must be >= 1, got {d!r}")
    shape = (int(d),) if n is None else (int(n), int(d))
    return rng.standard_normal(shape)


def _check_delta(delta):
    if not delta > 0:
        raise ValueError(f"exploration radius must be positive, got {delta!r}")


def _point(obj: Objective, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim not in (1, 2) or x.shape[-1] != obj.dim:
        raise InvalidDimensionError(f"expected x of shape (d,) or (n, d) with d={obj.dim}, got {x.shape}")
    return x


def _direction(rng, x, u):
    if u is None:
        return rng.standard_normal(x.shape)
    u = np.asarray(u, dtype=float)
    if u.shape != x.shape:
        raise InvalidDimensionError(f"injected direction has shape {u.shape}, expected {x.shape}")
    return u


def _sample(obj, rng, lead, xi):
    if xi is not None or not obj.stochastic:
        return xi
    return obj.draw_sample(rng, lead)


def _finite(*values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise NonFiniteValueError("objective returned a nonfinite value")


def _times(coef, u):
    return np.asarray(coef, dtype=float)[..., None] * u


def _n_points(x) -> int:
    return math.prod(x.shape[:-1])


def _peak(*values) -> float:
    return float(max(np.max(np.abs(v)) for v in values))


def one_point(obj: Objective, x, delta: float, rng, *, u=None, xi=None) -> GradientEstimate:
    """``(u / delta) * f(x + delta u)`` from a single query."""
    _check_delta(delta)
    x = _point(obj, x)
    u = _direction(rng, x, u)
    xi = _sample(obj, rng, x.shape[:-1], xi)
    y = obj(x + delta * u, xi)
    _finite(y)
    return GradientEstimate(_times(np.divide(y, delta), u), _n_points(x), y, _peak(y))


def two_point_forward(obj: Objective, x, delta: float, rng, *, u=None, xi=None) -> GradientEstimate:
    """``(u / delta) * (f(x + delta u) - f(x))``.

    On a stochastic objective the two queries use independent fresh
    samples; ``xi`` may inject the pair.
    """
    _check_delta(delta)
    x = _point(obj, x)
    u = _direction(rng, x, u)
    lead = x.shape[:-1]
    xi_a, xi_b = (None, None) if xi is None else xi
    xi_a = _sample(obj, rng, lead, xi_a)
    xi_b = _sample(obj, rng, lead, xi_b)
    y = obj(x + delta * u, xi_a)
    y0 = obj(x, xi_b)
    _finite(y, y0)
    g = _times((np.asarray(y) - y0) / delta, u)
    return GradientEstimate(g, 2 * _n_points(x), y, _peak(y, y0))


def two_point_central(obj: Objective, x, delta: float, rng, *, u=None, xi=None) -> GradientEstimate:
    """``(u / 2 delta) * (f(x + delta u) - f(x - delta u))``."""
    _check_delta(delta)
    x = _point(obj, x)
    u = _direction(rng, x, u)
    lead = x.shape[:-1]
    xi_a, xi_b = (None, None) if xi is None else xi
    xi_a = _sample(obj, rng, lead, xi_a)
    xi_b = _sample(obj, rng, lead, xi_b)
    y_plus = obj(x + delta * u, xi_a)
    y_minus = obj(x - delta * u, xi_b)
    _finite(y_plus, y_minus)
    g = _times((np.asarray(y_plus) - y_minus) / (2.0 * delta), u)
    return GradientEstimate(g, 2 * _n_points(x), y_plus, _peak(y_plus, y_minus))


def two_point_stochastic_fixed(obj: Objective, x, delta: float, rng, *, u=None, xi=None) -> GradientEstimate:
    """Forward difference with one sample held fixed across both queries."""
    if obj.stochastic and not obj.controllable:
        raise UnsupportedModeError(f"{obj.name} does not allow holding a sample fixed")
    _check_delta(delta)
    x = _point(obj, x)
    u = _direction(rng, x, u)
    xi = _sample(obj, rng, x.shape[:-1], xi)
    y = obj(x + delta * u, xi)
    y0 = obj(x, xi)
    _finite(y, y0)
    g = _times((np.asarray(y) - y0) / delta, u)
    return GradientEstimate(g, 2 * _n_points(x), y, _peak(y, y0))


def two_point_stochastic_independent(obj: Objective, x, delta: float, rng, *, u=None, xi=None) -> GradientEstimate:
    """Forward difference with two independent samples ``xi``, ``xi'``."""
    return two_point_forward(obj, x, delta, rng, u=u, xi=xi)


def residual(obj: Objective, x, delta: float, state: EstimatorState, rng, *, u=None, xi=None):
    """One-point residual feedback.

    Queries ``y = F(x + delta u, xi)`` once and returns
    ``(u / delta) * (y - prev_value)`` along with the new state ``(y, u)``.

    An empty state triggers a bootstrap: an extra query at ``x`` along an
    independent direction stands in for the missing previous value, so the
    first call costs two queries and stays unbiased.

    Returns
    -------
    (GradientEstimate, EstimatorState)
    """
    _check_delta(delta)
    x = _point(obj, x)
    lead = x.shape[:-1]
    n = _n_points(x)
    queries = n
    if state.bootstrapped:
        prev = state.prev_value
        peak_prev = 0.0
    else:
        u_prev = rng.standard_normal(x.shape)
        xi_prev = _sample(obj, rng, lead, None)
        prev = obj(x + delta * u_prev, xi_prev)
        _finite(prev)
        peak_prev = _peak(prev)
        queries += n
    u = _direction(rng, x, u)
    xi = _sample(obj, rng, lead, xi)
    y = obj(x + delta * u, xi)
    _finite(y)
    g = _times((np.asarray(y) - prev) / delta, u)
    est = GradientEstimate(g, queries, y, max(peak_prev, _peak(y)))
    return est, EstimatorState(y, u)


def residual_minibatch(obj: Objective, x, delta: float, b: int, state: EstimatorState, rng, *, u=None, xi=None):
    """Mini-batch residual feedback with ``b`` samples per perturbed point.

    ``g = u / (b delta) * (sum_j F(x + delta u, xi_j) - prev_batch_sum)``.
    The state carries the batch sum.  ``b = 1`` reproduces :func:`residual`
    exactly for the same random stream.
    """
    if int(b) != b or b < 1:
        raise InvalidBatchError(f"batch size must be a positive integer, got {b!r}")
    b = int(b)
    _check_delta(delta)
    x = _point(obj, x)
    lead = x.shape[:-1]
    n = _n_points(x)

    def batch_sum(p, samples):
        pts = np.broadcast_to(p[..., None, :], lead + (b, obj.dim))
        vals = obj(pts, samples)
        _finite(vals)
        return np.sum(vals, axis=-1), _peak(vals)

    queries = n * b
    if state.bootstrapped:
        prev = state.prev_value
        peak_prev = 0.0
    else:
        u_prev = rng.standard_normal(x.shape)
        xi_prev = _sample(obj, rng, lead + (b,), None)
        prev, peak_prev = batch_sum(x + delta * u_prev, xi_prev)
        queries += n * b
    u = _direction(rng, x, u)
    xi = _sample(obj, rng, lead + (b,), xi)
    total, peak = batch_sum(x + delta * u, xi)
    if lead == ():
        total = float(total)
    g = _times((np.asarray(total) - prev) / (b * delta), u)
    est = GradientEstimate(g, queries, total / b, max(peak_prev, peak))
    return est, EstimatorState(total, u)


def _stateless(fn):
    def step(obj, x, delta, state, rng, batch_b=1):
        return fn(obj, x, delta, rng), state

    return step


ESTIMATORS = {
    "one_point": _stateless(one_point),
    "two_point_forward": _stateless(two_point_forward),
    "two_point_central": _stateless(two_point_central),
    "two_point_fixed": _stateless(two_point_stochastic_fixed),
    "two_point_independent": _stateless(two_point_stochastic_independent),
    "residual": lambda obj, x, delta, state, rng, batch_b=1: residual(obj, x, delta, state, rng),
    "residual_minibatch": lambda obj, x, delta, state, rng, batch_b=1: residual_minibatch(
        obj, x, delta, batch_b, state, rng
    ),
}

# Queries per step after the first; residual estimators add one extra
# evaluation round on their first call.
QUERIES_PER_STEP = {
    "one_point": 1,
    "two_point_forward": 2,
    "two_point_central": 2,
    "two_point_fixed": 2,
    "two_point_independent": 2,
    "residual": 1,
    "residual_minibatch": 1,  # times the batch size
}


def estimate(name: str, obj: Objective, x, delta: float, state: EstimatorState, rng, batch_b: int = 1):
    """Dispatch to the estimator registered under ``name``."""
    try:
        step = ESTIMATORS[name]
    except KeyError:
        raise ValueError(f"unknown estimator {name!r}; choose from {sorted(ESTIMATORS)}") from None
    return step(obj, x, delta, state, rng, batch_b)


def query_budget(name: str, T: int, batch_b: int = 1) -> int:
    """Total queries used by ``T`` steps of estimator ``name``."""
    per = QUERIES_PER_STEP[name]
    if name == "residual":
        return T + 1
    if name == "residual_minibatch":
        return batch_b * (T + 1)
    return per * T
