"""Monte Carlo oracle for the Gaussian-smoothed objective.

``f_delta(x) = E_u[f(x + delta u)]`` with ``u ~ N(0, I)``.  The routines here
are verification tools: they estimate ``f_delta`` and its gradient by plain
Monte Carlo and evaluate the closed-form approximation bounds that relate
``f_delta`` to ``f``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NonFiniteValueError
from .objective import Objective, ObjectiveMeta

_CHUNK = 1 << 15


@dataclass(frozen=True)
class SmoothedEstimate:
    value_mean: float
    value_stderr: float
    samples: int


@dataclass(frozen=True)
class ApproxBounds:
    """Closed-form gaps between ``f`` and its smoothed version.

    value_gap_bound
        Bound on ``|f_delta(x) - f(x)|``.
    grad_gap_bound
        Bound on ``||grad f_delta(x) - grad f(x)||`` (needs ``L1``).
    smoothed_grad_lipschitz
        Lipschitz constant of ``grad f_delta`` implied by ``L0``.
    """

    value_gap_bound: Optional[float]
    grad_gap_bound: Optional[float]
    smoothed_grad_lipschitz: Optional[float]


def _check(n_samples, delta):
    if n_samples < 2:
        raise ValueError("need at least two samples")
    if not delta > 0:
        raise ValueError("delta must be positive")


def _perturbed_values(obj: Objective, x, delta, n_samples, rng):
    """Yield ``(u, f(x + delta u), offset)`` chunks."""
    x = np.asarray(x, dtype=float)
    done = 0
    while done < n_samples:
        m = min(_CHUNK, n_samples - done)
        u = rng.standard_normal((m, obj.dim))
        xi = obj.draw_sample(rng, (m,))
        y = np.asarray(obj(x + delta * u, xi), dtype=float)
        bad = np.flatnonzero(~np.isfinite(y))
        if bad.size:
            idx = [int(i) + done for i in bad[:10]]
            raise NonFiniteValueError(f"nonfinite objective value at draw(s) {idx}", index=idx[0])
        yield u, y, done
        done += m


def smoothed_value_mc(obj: Objective, x, delta: float, n_samples: int, rng) -> SmoothedEstimate:
    """Mean and standard error of ``f(x + delta u)`` over ``n_samples`` draws."""
    _check(n_samples, delta)
    # shifted sums keep the variance accurate when |f| >> its spread
    shift = None
    s1 = s2 = 0.0
    for _, y, _ in _perturbed_values(obj, x, delta, n_samples, rng):
        if shift is None:
            shift = float(y[0])
        z = y - shift
        s1 += float(np.sum(z))
        s2 += float(np.sum(z * z))
    n = n_samples
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0) * n / (n - 1)
    return SmoothedEstimate(shift + mean, math.sqrt(var / n), n)


def smoothed_grad_mc(obj: Objective, x, delta: float, n_samples: int, rng):
    """Monte Carlo mean of ``(u / delta) f(x + delta u)``.

    Returns
    -------
    mean, stderr : ndarray
        Per-coordinate mean and standard error.
    """
    _check(n_samples, delta)
    d = obj.dim
    s1 = np.zeros(d)
    s2 = np.zeros(d)
    for u, y, _ in _perturbed_values(obj, x, delta, n_samples, rng):
        g = u * (y / delta)[:, None]
        s1 += g.sum(axis=0)
        s2 += (g * g).sum(axis=0)
    n = n_samples
    mean = s1 / n
    var = np.maximum(s2 / n - mean * mean, 0.0) * n / (n - 1)
    return mean, np.sqrt(var / n)


def approx_bounds(meta: ObjectiveMeta, delta: float) -> ApproxBounds:
    """Gaussian-approximation bounds for the constants declared in ``meta``.

    Uses ``delta L0 sqrt(d)`` for Lipschitz functions, ``delta^2 L1 d`` for
    functions with Lipschitz gradient (the smaller one when both apply),
    ``delta L1 (d + 3)^{3/2}`` for the gradient gap and
    ``sqrt(d) L0 / delta`` for the smoothed-gradient Lipschitz constant.
    Unknown constants leave the corresponding field ``None``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    d = meta.dim
    L0 = meta.lipschitz_L0
    L1 = meta.grad_lipschitz_L1
    if L0 == 0.0 and L1 is None:
        L1 = 0.0  # constant function
    candidates = []
    if L0 is not None:
        candidates.append(delta * L0 * math.sqrt(d))
    if L1 is not None:
        candidates.append(delta**2 * L1 * d)
    value_gap = min(candidates) if candidates else None
    grad_gap = delta * L1 * (d + 3) ** 1.5 if L1 is not None else None
    smoothed_lip = math.sqrt(d) * L0 / delta if L0 is not None else None
    return ApproxBounds(value_gap, grad_gap, smoothed_lip)
