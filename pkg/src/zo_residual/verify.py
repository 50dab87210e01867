"""Statistical self-checks of the estimators and smoothing bounds.

Each check draws its own seeded samples and returns a :class:`CheckResult`.
Estimators are exercised on many independent replicas at once (points of
shape ``(n, d)``), so a few hundred thousand draws take well under a second.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .estimators import (
    EstimatorState,
    draw_direction,
    one_point,
    residual,
    residual_minibatch,
    two_point_central,
    two_point_forward,
    two_point_stochastic_fixed,
    two_point_stochastic_independent,
)
from .objective import additive_noise
from .optimizer import Schedule, replica_second_moments
from .problems import make_qp
from .problems.testfuncs import linear, pseudo_huber, quadratic, weighted_l1
from .smoothing import approx_bounds, smoothed_grad_mc, smoothed_value_mc

DEFAULT_SAMPLES = 200_000
Z = 4.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<34} {self.detail}"


def _unit(d, rng):
    x = rng.standard_normal(d)
    return x / np.linalg.norm(x)


def _replicate(x, n):
    return np.tile(x, (n, 1))


def _bootstrapped(est_fn, obj, X, delta, rng):
    """Residual-type sample after one bootstrap call at the frozen point."""
    _, state = est_fn(obj, X, delta, EstimatorState(), rng)
    est, _ = est_fn(obj, X, delta, state, rng)
    return est.g


def estimator_samples(name, obj, x, delta, n, rng, batch_b=4):
    """``n`` independent estimates at the frozen point ``x``, shape ``(n, d)``."""
    X = _replicate(x, n)
    if name == "one_point":
        return one_point(obj, X, delta, rng).g
    if name == "two_point_forward":
        return two_point_forward(obj, X, delta, rng).g
    if name == "two_point_central":
        return two_point_central(obj, X, delta, rng).g
    if name == "two_point_fixed":
        return two_point_stochastic_fixed(obj, X, delta, rng).g
    if name == "two_point_independent":
        return two_point_stochastic_independent(obj, X, delta, rng).g
    if name == "residual":
        return _bootstrapped(lambda o, p, dl, s, r: residual(o, p, dl, s, r), obj, X, delta, rng)
    if name == "residual_minibatch":
        return _bootstrapped(lambda o, p, dl, s, r: residual_minibatch(o, p, dl, batch_b, s, r), obj, X, delta, rng)
    raise ValueError(name)


# Estimator -> whether it is exercised on the noisy twin of the objective.
UNBIASED_CASES = (
    ("one_point", False),
    ("two_point_forward", False),
    ("two_point_central", False),
    ("two_point_fixed", True),
    ("two_point_independent", True),
    ("residual", False),
    ("residual", True),
    ("residual_minibatch", True),
)


def check_directions(samples, seed):
    rng = np.random.default_rng(seed)
    u = draw_direction(rng, 1, samples)[:, 0]
    m, v = float(u.mean()), float(u.var(ddof=1))
    ok = abs(m) <= 0.02 and 0.96 <= v <= 1.04
    return ok, f"mean={m:+.4f} var={v:.4f}"


def check_unbiasedness(samples, seed):
    rng = np.random.default_rng(seed)
    worst = 0.0
    where = ""
    for d in (2, 10):
        base = quadratic(d)
        noisy = additive_noise(base, 0.1)
        for delta in (0.05, 0.5):
            x = _unit(d, rng)
            for name, stochastic in UNBIASED_CASES:
                g = estimator_samples(name, noisy if stochastic else base, x, delta, samples, rng)
                se = g.std(axis=0, ddof=1) / math.sqrt(samples)
                z = float(np.max(np.abs(g.mean(axis=0) - x) / se))
                if z > worst:
                    worst, where = z, f"{name}{'+noise' if stochastic else ''} d={d} delta={delta}"
    return worst <= Z, f"max |z| = {worst:.2f} ({where})"


def check_variance_ordering(samples, seed):
    rng = np.random.default_rng(seed)
    d, delta = 10, 0.05
    obj = quadratic(d)
    x = _unit(d, rng)
    m_res = float(np.mean(np.sum(estimator_samples("residual", obj, x, delta, samples, rng) ** 2, axis=1)))
    m_one = float(np.mean(np.sum(estimator_samples("one_point", obj, x, delta, samples, rng) ** 2, axis=1)))
    return m_res * 5 <= m_one, f"residual {m_res:.1f} vs one-point {m_one:.1f} (ratio {m_one / m_res:.1f})"


def second_moment_margin(stochastic: bool, n_replicas: int, seed: int, steps: int = 50, d: int = 5,
                         eta: float = 0.02, delta: float = 0.05, sigma: float = 0.1):
    """Worst slack of the residual second-moment recursion along SGD.

    Returns ``(ok, worst_ratio, moments, bounds)`` where ``worst_ratio`` is
    the largest ``(empirical - 4 SE) / bound`` over steps.
    """
    L0 = 1.0
    obj = pseudo_huber(d, L0)
    if stochastic:
        obj = additive_noise(obj, sigma, controllable=False)
    rng = np.random.default_rng(seed)
    x0 = 2.0 * _unit(d, rng)
    sched = Schedule(eta, delta, steps)
    mom = replica_second_moments(obj, "residual", sched, x0, n_replicas, rng)
    if stochastic:
        coef = 4 * L0**2 * d * eta**2 / delta**2
        const = 16 * L0**2 * (d + 4) ** 2 + 8 * sigma**2 * d / delta**2
    else:
        coef = 2 * d * L0**2 * eta**2 / delta**2
        const = 8 * L0**2 * (d + 4) ** 2
    bounds = np.empty(steps)
    bounds[0] = const
    bounds[1:] = coef * mom[:-1, 0] + const
    ratio = (mom[:, 0] - Z * mom[:, 1]) / bounds
    worst = float(ratio.max())
    return worst <= 1.0, worst, mom, bounds


def check_second_moment(samples, seed, stochastic):
    n = max(2, min(samples, 10_000))
    ok, worst, mom, bounds = second_moment_margin(stochastic, n, seed)
    return ok, f"max E|g|^2 / bound = {worst:.3f} (peak E|g|^2 {mom[:, 0].max():.1f}, bound {bounds.min():.1f})"


def check_smoothing_bounds(samples, seed):
    rng = np.random.default_rng(seed)
    n = max(2, samples // 10)
    worst = -math.inf
    where = ""
    delta = 0.1
    qp = make_qp(10, seed)
    q_obj = qp.objective()
    w = rng.uniform(0.5, 2.0, 10)
    l1 = weighted_l1(w)
    for label, obj, grad in (("qp", q_obj, qp.gradient), ("weighted_l1", l1, None)):
        b = approx_bounds(obj.meta, delta)
        for _ in range(20):
            x = rng.uniform(-1.0, 3.0, 10)
            est = smoothed_value_mc(obj, x, delta, n, rng)
            f = float(obj(x))
            slack = abs(est.value_mean - f) - (b.value_gap_bound + Z * est.value_stderr)
            if slack > worst:
                worst, where = slack, f"{label} value"
            if grad is not None:
                mean, se = smoothed_grad_mc(obj, x, delta, n, rng)
                gap = float(np.linalg.norm(mean - grad(x)))
                slack = gap - (b.grad_gap_bound + Z * float(np.linalg.norm(se)))
                if slack > worst:
                    worst, where = slack, f"{label} gradient"
        if b.smoothed_grad_lipschitz is not None:
            for _ in range(5):
                x, y = rng.uniform(-1.0, 3.0, (2, 10))
                gx, sx = smoothed_grad_mc(obj, x, delta, n, rng)
                gy, sy = smoothed_grad_mc(obj, y, delta, n, rng)
                lhs = float(np.linalg.norm(gx - gy))
                rhs = b.smoothed_grad_lipschitz * float(np.linalg.norm(x - y))
                slack = lhs - (rhs + Z * float(np.linalg.norm(np.hypot(sx, sy))))
                if slack > worst:
                    worst, where = slack, f"{label} smoothed Lipschitz"
    return worst <= 0.0, f"largest excess over bound = {worst:.3g} ({where})"


def minibatch_noise_moment(b, n, seed, d=5, delta=0.1, sigma=1.0):
    """``E||noise part of g||^2`` for the mini-batch estimator at a frozen point.

    The noise part is the estimate minus its noise-free value computed with
    the same directions.
    """
    rng = np.random.default_rng(seed)
    base = quadratic(d)
    noisy = additive_noise(base, sigma)
    X = _replicate(_unit(d, rng), n)
    _, state = residual_minibatch(noisy, X, delta, b, EstimatorState(), rng)
    u_prev = state.prev_direction
    est, new_state = residual_minibatch(noisy, X, delta, b, state, rng)
    u = new_state.prev_direction
    clean = u * ((base(X + delta * u) - base(X + delta * u_prev)) / delta)[:, None]
    noise = est.g - clean
    return float(np.mean(np.sum(noise**2, axis=1)))


def check_minibatch_scaling(samples, seed):
    n = max(2, min(samples, 100_000))
    m1 = minibatch_noise_moment(1, n, seed)
    m16 = minibatch_noise_moment(16, n, seed + 1)
    ratio = m16 / (m1 / 16)
    return 0.5 <= ratio <= 2.0, f"b=16 / (b=1 / 16) = {ratio:.3f}"


def check_central_exactness(samples, seed):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for d in (1, 3, 10):
        a = rng.standard_normal(d)
        obj = linear(a, rng.standard_normal())
        n = max(2, min(samples, 10_000))
        X = rng.standard_normal((n, d))
        for delta in (1e-3, 0.1, 10.0):
            u = rng.standard_normal((n, d))
            g = two_point_central(obj, X, delta, rng, u=u).g
            ref = u * (u @ a)[:, None]
            worst = max(worst, float(np.max(np.abs(g - ref) / (1.0 + np.abs(ref)))))
    return worst <= 1e-9, f"max relative error {worst:.2e}"


CHECKS: dict[str, Callable] = {
    "directions": check_directions,
    "unbiasedness": check_unbiasedness,
    "variance_ordering": check_variance_ordering,
    "second_moment_deterministic": lambda s, seed: check_second_moment(s, seed, False),
    "second_moment_stochastic": lambda s, seed: check_second_moment(s, seed, True),
    "smoothing_bounds": check_smoothing_bounds,
    "minibatch_noise_scaling": check_minibatch_scaling,
    "central_difference_exactness": check_central_exactness,
}


def run_checks(samples: int = DEFAULT_SAMPLES, seed: int = 0, only=None) -> list:
    results = []
    for k, (name, fn) in enumerate(CHECKS.items()):
        if only and name not in only:
            continue
        start = time.perf_counter()
        ok, detail = fn(samples, seed + 1000 * k)
        results.append(CheckResult(name, bool(ok), detail, time.perf_counter() - start))
    return results
