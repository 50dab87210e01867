"""SGD driver ``x_{t+1} = x_t - eta * g_t`` with theorem step-size schedules.

:func:`make_schedule` turns regularity constants into ``(eta, delta)`` for
each convergence regime, :func:`run_sgd` executes the chain and records a
:class:`Trace`, and :func:`select_output` applies the output rule (uniform
iterate, running average or last iterate).
"""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .errors import (
    HorizonTooSmallError,
    InsufficientTraceError,
    InvalidDimensionError,
    NonFiniteValueError,
    ScheduleUnderspecifiedError,
)
from .estimators import ESTIMATORS, EstimatorState, estimate
from .objective import Objective, ObjectiveMeta

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e9
FULL_STORAGE_LIMIT = 1_000_000
TRACE_HEADER = ("t", "f_obs", "grad_sq_norm", "cum_queries")


class Regime(str, enum.Enum):
    DET_NONCONVEX_C00 = "det-nonconvex-C00"
    DET_NONCONVEX_C11 = "det-nonconvex-C11"
    DET_CONVEX_C00 = "det-convex-C00"
    DET_CONVEX_C11 = "det-convex-C11"
    STOCH_NONCONVEX_C00 = "stoch-nonconvex-C00"
    STOCH_NONCONVEX_C11 = "stoch-nonconvex-C11"
    STOCH_CONVEX_C00 = "stoch-convex-C00"
    STOCH_CONVEX_C11 = "stoch-convex-C11"
    MANUAL = "manual"

    @property
    def default_output(self) -> str:
        if self is Regime.MANUAL:
            return "last_iterate"
        return "running_average" if "-convex-" in self.value else "uniform_iterate"


class OutputRule(str, enum.Enum):
    UNIFORM_ITERATE = "uniform_iterate"
    RUNNING_AVERAGE = "running_average"
    LAST_ITERATE = "last_iterate"


@dataclass(frozen=True)
class Schedule:
    eta: float
    delta: float
    horizon_T: int
    batch_b: int = 1
    regime: Regime = Regime.MANUAL
    epsilon_f: Optional[float] = None

    def __post_init__(self):
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError(f"eta must be positive and finite, got {self.eta!r}")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be positive and finite, got {self.delta!r}")
        if int(self.horizon_T) != self.horizon_T or self.horizon_T < 1:
            raise ValueError(f"horizon_T must be an integer >= 1, got {self.horizon_T!r}")
        if int(self.batch_b) != self.batch_b or self.batch_b < 1:
            raise ValueError(f"batch_b must be an integer >= 1, got {self.batch_b!r}")
        object.__setattr__(self, "regime", Regime(self.regime))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regime"] = self.regime.value
        return d


def _need(regime, value, symbol):
    if value is None:
        raise ScheduleUnderspecifiedError(regime.value, symbol)
    if value == 0:
        raise ScheduleUnderspecifiedError(regime.value, f"a nonzero {symbol} (zero describes a constant function)")
    return float(value)


def make_schedule(regime, meta: ObjectiveMeta, T: int, *, epsilon_f=None, batch_b: int = 1, eta=None,
                  delta=None) -> Schedule:
    """Step size and exploration radius prescribed for ``regime``.

    ``manual`` passes ``eta`` and ``delta`` through; every other regime
    computes both from ``meta`` (``d``, ``L0``, ``L1``) and ``T``.

    Raises
    ------
    ScheduleUnderspecifiedError
        A constant the formula needs is missing.
    HorizonTooSmallError
        ``T`` is below the regime's minimum horizon.
    """
    regime = Regime(regime)
    if int(T) != T or T < 1:
        raise ValueError(f"T must be an integer >= 1, got {T!r}")
    T = int(T)
    d = meta.dim
    R = Regime
    if regime is R.MANUAL:
        return Schedule(_need(regime, eta, "eta"), _need(regime, delta, "delta"), T, batch_b, regime, epsilon_f)

    L0 = _need(regime, meta.lipschitz_L0, "L0")
    if regime in (R.DET_NONCONVEX_C00, R.STOCH_NONCONVEX_C00):
        eps = _need(regime, epsilon_f, "epsilon_f")
        floor = 1.0 / eps if regime is R.DET_NONCONVEX_C00 else 1.0 / (d * eps)
        if not T > floor:
            raise HorizonTooSmallError(f"{regime.value} needs T > {floor:g}, got T = {T}")
        delta_ = eps / (L0 * math.sqrt(d))
        if regime is R.DET_NONCONVEX_C00:
            eta_ = math.sqrt(eps) / (2 * d * L0**2 * math.sqrt(T))
        else:
            eta_ = eps**1.5 / (2 * math.sqrt(2) * L0**2 * d**1.5 * math.sqrt(T))
    elif regime is R.DET_NONCONVEX_C11:
        L1 = _need(regime, meta.grad_lipschitz_L1, "L1")
        L_tilde = max(2 * L0, 32 * L1)
        eta_ = 1.0 / (L_tilde * (d + 4) ** 2 * T ** (1 / 3))
        delta_ = 1.0 / (math.sqrt(d) * T ** (1 / 3))
    elif regime is R.DET_CONVEX_C00:
        eta_ = 1.0 / (2 * d * L0 * math.sqrt(T))
        delta_ = 1.0 / math.sqrt(T)
    elif regime is R.DET_CONVEX_C11:
        L1 = _need(regime, meta.grad_lipschitz_L1, "L1")
        L_tilde = max(L0, 16 * L1)
        eta_ = 1.0 / (2 * L_tilde * (d + 4) ** 2 * T ** (1 / 3))
        delta_ = math.sqrt(d) / T ** (1 / 3)
    elif regime is R.STOCH_NONCONVEX_C11:
        if not T > 2:
            raise HorizonTooSmallError(f"{regime.value} needs T > 2, got T = {T}")
        eta_ = 1.0 / (2 * L0 * d ** (4 / 3) * T ** (2 / 3))
        delta_ = 1.0 / (d ** (5 / 6) * T ** (1 / 6))
    elif regime is R.STOCH_CONVEX_C00:
        eta_ = 1.0 / (2 * math.sqrt(2) * L0 * math.sqrt(d) * T**0.75)
        delta_ = 1.0 / T**0.25
    else:  # STOCH_CONVEX_C11
        eta_ = 1.0 / (2 * math.sqrt(2) * L0 * d ** (2 / 3) * T ** (2 / 3))
        delta_ = 1.0 / (d ** (1 / 6) * T ** (1 / 6))
    return Schedule(eta_, delta_, T, batch_b, regime, epsilon_f)


def estimate_constants(obj: Objective, center, rng, *, n_pairs: int = 200, radius: float = 1.0,
                       safety: float = 1.5) -> tuple:
    """Sampled stand-ins for unknown ``L0`` and ``L1`` near ``center``.

    ``L0`` is the largest observed ``|f(x) - f(y)| / ||x - y||`` over random
    pairs and ``L1`` the largest second difference
    ``|f(x + h) + f(x - h) - 2 f(x)| / ||h||^2``, both times ``safety``.
    Queries spent here are not reset.  Stochastic objectives are probed with
    one held sample when controllable.
    """
    center = np.asarray(center, dtype=float)
    d = obj.dim
    x = center + radius * rng.standard_normal((n_pairs, d))
    h = radius * rng.standard_normal((n_pairs, d))
    xi = None
    if obj.stochastic:
        xi = obj.draw_sample(rng, (n_pairs,))
        if not obj.controllable:
            log.warning("estimating constants of %s with uncontrollable noise; values are noisy", obj.name)
    pts = np.stack([x, x + h, x - h])
    vals = obj(pts, None if xi is None else np.stack([xi, xi, xi]))
    f0, fp, fm = vals
    norm = np.linalg.norm(h, axis=1)
    L0 = safety * float(np.max(np.abs(fp - f0) / norm))
    L1 = safety * float(np.max(np.abs(fp + fm - 2 * f0) / norm**2))
    return L0, L1


@dataclass
class TraceOptions:
    """Controls what :func:`run_sgd` keeps.

    store_iterates
        ``"auto"`` keeps every iterate when ``d * T`` is at most one million
        values and every ``ceil(T / 1000)``-th otherwise; ``"all"`` and
        ``"none"`` force either extreme.
    metric, metric_every
        Optional ``metric(x)`` evaluated after every ``metric_every``-th
        update (and after the last one).
    output_rule, output_seed
        When given, the output is selected at the end of the run; for the
        uniform rule the chosen iterate is kept even if thinning drops its
        neighbours.
    diverge_at
        Largest tolerated magnitude of any observed value.
    use_chain
        Allow the fused compiled loop when the objective provides one.
    """

    store_iterates: str = "auto"
    metric: Optional[Callable] = None
    metric_name: str = "metric"
    metric_every: int = 1
    output_rule: Optional[str] = None
    output_seed: Optional[int] = None
    diverge_at: float = DIVERGENCE_LIMIT
    use_chain: bool = True


@dataclass
class Trace:
    """Per-step records and terminal fields of one SGD run.

    Record ``t`` describes the step taken from ``x_t``: the freshly observed
    value, ``||g_t||^2``, the cumulative query count after the step, and the
    metric evaluated at ``x_{t+1}``.
    """

    estimator: str
    schedule: Schedule
    f_obs: np.ndarray
    grad_sq_norm: np.ndarray
    cum_queries: np.ndarray
    metric: np.ndarray
    metric_name: str
    metric0: float
    iterate_index: np.ndarray
    iterates: np.ndarray
    iterate_stride: int
    x_final: np.ndarray
    x_sum: np.ndarray
    status: str = "ok"
    message: str = ""
    wall_time: float = 0.0
    path: str = "generic"
    seed: Optional[int] = None
    output_rule: Optional[str] = None
    output: Optional[np.ndarray] = None
    output_index: Optional[int] = None
    extra: dict = field(default_factory=dict)

    @property
    def n_records(self) -> int:
        return len(self.f_obs)

    @property
    def total_queries(self) -> int:
        return int(self.cum_queries[-1]) if self.n_records else 0

    @property
    def completed(self) -> bool:
        return self.status == "ok"

    def running_average(self) -> np.ndarray:
        if self.n_records == 0:
            raise InsufficientTraceError("no steps recorded")
        return self.x_sum / self.n_records

    def iterate(self, t: int) -> np.ndarray:
        """``x_t`` for ``0 <= t <= n_records`` (``x_T`` is the final point)."""
        if t == self.n_records:
            return self.x_final
        pos = np.searchsorted(self.iterate_index, t)
        if pos < len(self.iterate_index) and self.iterate_index[pos] == t:
            return self.iterates[pos]
        raise InsufficientTraceError(f"iterate {t} was not stored (stride {self.iterate_stride})")

    def csv_text(self, every: int = 1) -> str:
        """Records as CSV, optionally keeping every ``every``-th plus the last."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        n = self.n_records
        keep = range(0, n, every) if every > 1 else range(n)
        rows = list(keep)
        if every > 1 and n and rows[-1] != n - 1:
            rows.append(n - 1)
        for t in rows:
            w.writerow((t, repr(float(self.f_obs[t])), repr(float(self.grad_sq_norm[t])), int(self.cum_queries[t])))
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {
            "estimator": self.estimator,
            "schedule": self.schedule.to_dict(),
            "regime": self.schedule.regime.value,
            "seed": self.seed,
            "selection_rule": self.output_rule,
            "output_index": self.output_index,
            "status": self.status,
            "message": self.message,
            "records": self.n_records,
            "total_queries": self.total_queries,
            "metric_name": self.metric_name,
            "metric_initial": _finite_or_none(self.metric0),
            "metric_final": _finite_or_none(self.final_metric()),
            "iterate_stride": self.iterate_stride,
            "path": self.path,
            "wall_time": self.wall_time,
            **self.extra,
        }

    def final_metric(self) -> float:
        seen = self.metric[~np.isnan(self.metric)]
        return float(seen[-1]) if seen.size else float(self.metric0)

    def write(self, csv_path, *, every: int = 1, sidecar_extra: Optional[dict] = None):
        """Write the CSV and a ``.json`` sidecar next to it."""
        csv_path = str(csv_path)
        with open(csv_path, "w", newline="") as fh:
            fh.write(self.csv_text(every))
        meta = self.sidecar()
        if sidecar_extra:
            meta.update(sidecar_extra)
        stem = csv_path[:-4] if csv_path.endswith(".csv") else csv_path
        with open(stem + ".json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _finite_or_none(v):
    return float(v) if v is not None and math.isfinite(v) else None


def _iterate_stride(mode, d, T):
    if mode == "all":
        return 1
    if mode == "none":
        return 0
    if mode != "auto":
        raise ValueError(f"store_iterates must be 'auto', 'all' or 'none', got {mode!r}")
    return 1 if d * T <= FULL_STORAGE_LIMIT else math.ceil(T / 1000)


def run_sgd(obj: Objective, estimator: str, schedule: Schedule, x0, rng: np.random.Generator,
            options: Optional[TraceOptions] = None, *, seed=None) -> Trace:
    """Run ``schedule.horizon_T`` updates ``x <- x - eta * g``.

    The residual state is threaded through the whole chain.  A nonfinite
    value, or one larger than ``options.diverge_at`` in magnitude, stops the
    run early with status ``"errored"`` or ``"diverged"``; the update that
    would have used it is not applied.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; choose from {sorted(ESTIMATORS)}")
    opts = options or TraceOptions()
    x = np.array(x0, dtype=float)
    if x.shape != (obj.dim,):
        raise InvalidDimensionError(f"x0 must have shape ({obj.dim},), got {x.shape}")
    T, eta, delta, b = schedule.horizon_T, schedule.eta, schedule.delta, schedule.batch_b
    stride = _iterate_stride(opts.store_iterates, obj.dim, T)
    every = max(1, int(opts.metric_every))

    keep_index = None
    if opts.output_rule == OutputRule.UNIFORM_ITERATE.value and opts.output_seed is not None:
        keep_index = int(np.random.default_rng(opts.output_seed).integers(T))

    f_obs = np.full(T, np.nan)
    gsq = np.full(T, np.nan)
    cum = np.zeros(T, dtype=np.int64)
    metric = np.full(T, np.nan)
    idx, X = [], []
    x_sum = np.zeros(obj.dim)
    metric0 = float(opts.metric(x)) if opts.metric is not None else math.nan
    status, message = "ok", ""
    start = time.perf_counter()

    def stored(t):
        return (stride and t % stride == 0) or t == keep_index

    chain = getattr(obj, "chain", None) if opts.use_chain else None
    fused = (
        chain is not None
        and not obj.stochastic
        and estimator in chain.supports
        and (opts.metric is None or opts.metric == chain.metric_fn)
    )
    path = "fused" if fused else "generic"

    state = EstimatorState()
    queries = 0
    t = 0
    try:
        if fused:
            # The residual bootstrap uses the generic estimator; every later
            # step runs in the compiled loop with identical random draws.
            if estimator == "residual":
                t, queries, state, x, status = _generic_steps(
                    obj, estimator, x, delta, eta, b, state, rng, 0, 1, opts, f_obs, gsq, cum, metric, every,
                    stored, idx, X, x_sum, queries,
                )
            if status == "ok" and t < T:
                t, queries, x, status = _fused_steps(
                    chain, estimator, x, delta, eta, state, rng, t, T, opts, f_obs, gsq, cum, metric, every,
                    stored, stride, keep_index, idx, X, x_sum, queries, obj,
                )
        else:
            t, queries, state, x, status = _generic_steps(
                obj, estimator, x, delta, eta, b, state, rng, 0, T, opts, f_obs, gsq, cum, metric, every,
                stored, idx, X, x_sum, queries,
            )
    except (NonFiniteValueError, FloatingPointError) as exc:
        status, message = "errored", str(exc)
    if status == "diverged" and not message:
        message = f"observed value exceeded {opts.diverge_at:g} at step {t}"
    if status == "errored" and not message:
        message = f"nonfinite value at step {t}"
    if status != "ok":
        log.info("%s run stopped at step %d: %s", estimator, t, message)

    n = t
    if n and np.isnan(metric[n - 1]) and opts.metric is not None:
        metric[n - 1] = float(opts.metric(x))
    trace = Trace(
        estimator=estimator,
        schedule=schedule,
        f_obs=f_obs[:n],
        grad_sq_norm=gsq[:n],
        cum_queries=cum[:n],
        metric=metric[:n],
        metric_name=opts.metric_name,
        metric0=metric0,
        iterate_index=np.asarray(idx, dtype=np.int64),
        iterates=np.asarray(X, dtype=float).reshape(len(X), obj.dim),
        iterate_stride=stride,
        x_final=x,
        x_sum=x_sum,
        status=status,
        message=message,
        wall_time=time.perf_counter() - start,
        path=path,
        seed=seed,
        output_rule=opts.output_rule,
        extra={"backend": _kernels.BACKEND},
    )
    if opts.output_rule is not None and status == "ok":
        out_rng = np.random.default_rng(opts.output_seed)
        trace.output, trace.output_index = _select(trace, opts.output_rule, out_rng)
    return trace


def _generic_steps(obj, estimator, x, delta, eta, b, state, rng, t0, t1, opts, f_obs, gsq, cum, metric, every,
                   stored, idx, X, x_sum, queries):
    T = len(f_obs)
    t = t0
    for t in range(t0, t1):
        try:
            est, state = estimate(estimator, obj, x, delta, state, rng, b)
        except (NonFiniteValueError, FloatingPointError):
            return t, queries, state, x, "errored"
        if est.peak_abs > opts.diverge_at:
            return t, queries, state, x, "diverged"
        g = est.g
        if stored(t):
            idx.append(t)
            X.append(x.copy())
        x_sum += x
        x = x - eta * g
        if not np.all(np.isfinite(x)):
            return t, queries, state, x, "errored"
        queries += est.queries_used
        f_obs[t] = float(est.observed)
        gsq[t] = float(g @ g)
        cum[t] = queries
        if opts.metric is not None and ((t + 1) % every == 0 or t == T - 1):
            metric[t] = float(opts.metric(x))
    return t1, queries, state, x, "ok"


def _fused_steps(chain, estimator, x, delta, eta, state, rng, t0, T, opts, f_obs, gsq, cum, metric, every, stored,
                 stride, keep_index, idx, X, x_sum, queries, obj):
    d = obj.dim
    per = 2 if estimator.startswith("two_point") else 1
    chunk = stride if stride > 1 else 4096
    x = np.ascontiguousarray(x, dtype=float).copy()
    r = chain.residual_of(x)
    prev = float(state.prev_value) if state.bootstrapped else 0.0
    t = t0
    while t < T:
        # Thinned runs use chunks aligned to the stride so that each chunk's
        # entry point is exactly the iterate to keep.
        n = min(chunk - t % chunk if stride > 1 else chunk, T - t)
        U = rng.standard_normal((n, d))
        if stride > 1 and t % stride == 0:
            idx.append(t)
            X.append(x.copy())
        full = stride == 1 or (keep_index is not None and t <= keep_index < t + n)
        out = chain.run(estimator, U, x, r, eta, delta, prev, opts.diverge_at, full)
        done = out["done"]
        sl = slice(t, t + done)
        f_obs[sl] = out["f_obs"]
        gsq[sl] = out["gsq"]
        cum[sl] = queries + per * np.arange(1, done + 1)
        queries += per * done
        # A step stopped by the guard has still spent its queries.
        obj.add_queries(per * (done + (out["status"] != 0)))
        x_sum += out["xsum"]
        prev = out["prev"]
        if opts.metric is not None:
            steps = np.arange(t, t + done)
            due = ((steps + 1) % every == 0) | (steps == T - 1)
            metric[sl] = np.where(due, out["gap"], np.nan)
        if full:
            for k in range(done):
                tk = t + k
                if stride == 1 or (tk == keep_index and tk % stride):
                    idx.append(tk)
                    X.append(out["X"][k].copy())
        t += done
        if out["status"] != 0:
            return t, queries, x, "diverged" if out["status"] == 1 else "errored"
    return t, queries, x, "ok"


def _select(trace: Trace, rule, rng):
    rule = OutputRule(rule)
    T = trace.n_records
    if T == 0:
        raise InsufficientTraceError("no steps recorded")
    if rule is OutputRule.LAST_ITERATE:
        return trace.x_final.copy(), T
    if rule is OutputRule.RUNNING_AVERAGE:
        return trace.running_average(), None
    t = int(rng.integers(T))
    return trace.iterate(t).copy(), t


def select_output(trace: Trace, rule, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Output point of a finished run.

    ``uniform_iterate`` draws ``t`` uniformly from ``0..T-1`` and returns
    ``x_t``; ``running_average`` returns the mean of ``x_0..x_{T-1}``;
    ``last_iterate`` returns ``x_T``.

    Raises
    ------
    InsufficientTraceError
        The drawn iterate was dropped by trace thinning.
    """
    if rng is None:
        rng = np.random.default_rng()
    return _select(trace, rule, rng)[0]


def grad_diagnostic(obj: Objective, x, *, delta=None, rng=None, n_samples: int = 200_000):
    """``||grad f(x)||^2`` with a label naming what was measured.

    Uses the objective's verification gradient when present; otherwise the
    Monte Carlo gradient of the smoothed function at radius ``delta``.
    """
    x = np.asarray(x, dtype=float)
    if obj.has_gradient:
        g = np.asarray(obj.gradient(x), dtype=float)
        return float(g @ g), "grad_f:analytic"
    if delta is None or rng is None:
        raise ValueError("objective has no analytic gradient; pass delta and rng for the smoothed estimate")
    from .smoothing import smoothed_grad_mc

    mean, _ = smoothed_grad_mc(obj, x, delta, n_samples, rng)
    return float(mean @ mean), "grad_f_delta:monte_carlo"


def replica_second_moments(obj: Objective, estimator: str, schedule: Schedule, x0, n_replicas: int, rng):
    """Per-step ``E||g_t||^2`` over independent SGD chains run in lockstep.

    Returns an array of shape ``(T, 2)`` holding the sample mean and its
    standard error at each step.
    """
    x = np.tile(np.asarray(x0, dtype=float), (int(n_replicas), 1))
    state = EstimatorState()
    out = np.empty((schedule.horizon_T, 2))
    for t in range(schedule.horizon_T):
        est, state = estimate(estimator, obj, x, schedule.delta, state, rng, schedule.batch_b)
        sq = np.einsum("ij,ij->i", est.g, est.g)
        out[t] = sq.mean(), sq.std(ddof=1) / math.sqrt(len(sq))
        x = x - schedule.eta * est.g
    return out
