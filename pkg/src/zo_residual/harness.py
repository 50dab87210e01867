"""Multi-trial experiments, summaries and estimator comparisons.

An experiment is described by a YAML file (see :class:`ExperimentConfig`).
:func:`run_experiment` runs ``n_trials`` seeded SGD runs, writes one trace
per trial, a ``summary.json`` and a ``curve.csv`` of the median metric on a
log-spaced query grid.  :func:`compare_estimators` runs several configs on
the same problem and ranks them by median queries to a threshold.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .errors import ConfigError, IncompatibleComparisonError, ZOError
from .estimators import ESTIMATORS, QUERIES_PER_STEP
from .objective import ObjectiveMeta
from .optimizer import OutputRule, Regime, TraceOptions, estimate_constants, make_schedule, run_sgd
from .problems import grid_make, lqr_initial_gain, lqr_make, make_qp, problem_from_dict

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
OUTPUT_ENV = "ZO_OUTPUT_DIR"
DEFAULT_OUTPUT = "zo_runs"
GRID_POINTS = 200
FAILED_FRACTION = 0.5

_KNOWN_KEYS = {
    "schema_version", "name", "problem", "estimator", "schedule", "T", "budget", "batch_b", "n_trials", "seed",
    "selection", "init", "threshold", "metric_every", "trace", "output_dir",
}


@dataclass
class ExperimentConfig:
    """Everything needed to rerun an experiment bit-exactly.

    ``schedule.eta`` may be a list; each value is run over all trials and
    the one with the smallest median queries-to-threshold is reported.
    Exactly one of ``T`` and ``budget`` (total queries per trial) is set.
    """

    name: str
    problem: dict
    estimator: str
    schedule: dict
    T: Optional[int] = None
    budget: Optional[int] = None
    batch_b: int = 1
    n_trials: int = 1
    seed: int = 0
    selection: Optional[str] = None
    init: dict = field(default_factory=lambda: {"kind": "zeros"})
    threshold: Optional[dict] = None
    metric_every: int = 1
    trace: dict = field(default_factory=dict)
    output_dir: Optional[str] = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version!r} (expected {SCHEMA_VERSION})")
        if not isinstance(self.problem, dict) or "kind" not in self.problem:
            raise ConfigError("problem must be a mapping with a 'kind'")
        if self.problem["kind"] not in ("qp", "lqr", "grid", "file"):
            raise ConfigError(f"unknown problem kind {self.problem['kind']!r}")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {self.estimator!r}; choose from {sorted(ESTIMATORS)}")
        if not isinstance(self.schedule, dict) or "regime" not in self.schedule:
            raise ConfigError("schedule must be a mapping with a 'regime'")
        try:
            Regime(self.schedule["regime"])
        except ValueError:
            raise ConfigError(f"unknown regime {self.schedule['regime']!r}") from None
        if (self.T is None) == (self.budget is None):
            raise ConfigError("set exactly one of T and budget")
        for key in ("T", "budget"):
            v = getattr(self, key)
            if v is not None and (not isinstance(v, int) or v < 1):
                raise ConfigError(f"{key} must be a positive integer")
        if not isinstance(self.n_trials, int) or self.n_trials < 1:
            raise ConfigError("n_trials must be an integer >= 1")
        if not isinstance(self.batch_b, int) or self.batch_b < 1:
            raise ConfigError("batch_b must be an integer >= 1")
        if self.selection is not None:
            try:
                OutputRule(self.selection)
            except ValueError:
                raise ConfigError(f"unknown selection rule {self.selection!r}") from None
        if self.threshold is not None and not (
            isinstance(self.threshold, dict) and set(self.threshold) <= {"relative", "absolute"}
            and len(self.threshold) == 1
        ):
            raise ConfigError("threshold must be {relative: r} or {absolute: v}")
        if not isinstance(self.metric_every, int) or self.metric_every < 1:
            raise ConfigError("metric_every must be an integer >= 1")
        if self.schedule["regime"] == "manual":
            for key in ("eta", "delta"):
                if key not in self.schedule:
                    raise ConfigError(f"manual schedule needs {key}")
        for eta in self.etas:
            if eta is not None and not (isinstance(eta, (int, float)) and eta > 0):
                raise ConfigError(f"eta values must be positive numbers, got {eta!r}")

    @property
    def etas(self) -> list:
        eta = self.schedule.get("eta")
        return list(eta) if isinstance(eta, (list, tuple)) else [eta]

    @property
    def horizon(self) -> int:
        """Number of SGD steps per trial."""
        if self.T is not None:
            return self.T
        per = QUERIES_PER_STEP[self.estimator] * self.batch_b
        T = self.budget // per
        if self.estimator.startswith("residual"):
            T -= 1  # bootstrap round
        if T < 1:
            raise ConfigError(f"budget {self.budget} is too small for one {self.estimator} step")
        return T

    @property
    def query_budget(self) -> int:
        return self.budget if self.budget is not None else _budget_of(self.estimator, self.T, self.batch_b)

    @property
    def output_rule(self) -> str:
        return self.selection or Regime(self.schedule["regime"]).default_output

    def to_dict(self) -> dict:
        out = {k: copy.deepcopy(getattr(self, k)) for k in sorted(_KNOWN_KEYS)}
        return {k: v for k, v in out.items() if v is not None}

    @classmethod
    def from_dict(cls, doc) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(doc) - _KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("name", "problem", "estimator", "schedule"):
            if key not in doc:
                raise ConfigError(f"missing config key {key!r}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                doc = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path} is not valid YAML: {exc}") from None
        cfg = cls.from_dict(doc)
        # Relative problem files resolve against the config's directory.
        if cfg.problem.get("kind") == "file" and not os.path.isabs(cfg.problem["path"]):
            cfg.problem["path"] = str(Path(path).parent / cfg.problem["path"])
        return cfg

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


def _budget_of(estimator, T, b):
    if estimator == "residual":
        return T + 1
    if estimator == "residual_minibatch":
        return b * (T + 1)
    return QUERIES_PER_STEP[estimator] * T


def build_problem(spec: dict):
    """Problem instance from a config ``problem`` mapping."""
    spec = dict(spec)
    kind = spec.pop("kind")
    try:
        if kind == "qp":
            problem = make_qp(spec.pop("d", 30), spec.pop("seed", 0))
        elif kind == "lqr":
            problem = lqr_make(
                spec.pop("n_x", 3), spec.pop("n_u", 3), spec.pop("gamma", 0.5), spec.pop("noise_std", 0.1),
                spec.pop("seed", 0), horizon_H=spec.pop("horizon_H", 50), x0_std=spec.pop("x0_std", 1.0),
                x0_mean=spec.pop("x0_mean", None),
            )
        elif kind == "grid":
            options = {k: spec.pop(k) for k in ("noise_std", "gamma", "horizon_K", "initial_stock") if k in spec}
            problem = grid_make(spec.pop("seed", 0), **options)
        elif kind == "file":
            with open(spec.pop("path")) as fh:
                problem = problem_from_dict(json.load(fh))
        else:
            raise ConfigError(f"unknown problem kind {kind!r}")
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise ConfigError(f"bad problem spec: {exc}") from None
    if spec:
        raise ConfigError(f"unused problem keys: {sorted(spec)}")
    return problem


def problem_digest(problem) -> str:
    text = json.dumps(problem.to_dict(), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


_METRIC_NAMES = {"qp": "value_gap", "lqr": "value_gap", "grid": "neg_expected_return"}


def _objective_and_metric(problem, cfg: ExperimentConfig):
    return problem.objective(), problem.value_gap, _METRIC_NAMES[problem.to_dict()["kind"]]


def _initial_point(problem, cfg: ExperimentConfig, trial_seed: int):
    init = dict(cfg.init or {"kind": "zeros"})
    kind = init.get("kind", "zeros")
    rng = np.random.default_rng([trial_seed, 1])
    dim = problem.objective().dim
    if kind == "zeros":
        return np.zeros(dim)
    if kind == "normal":
        return float(init.get("scale", 1.0)) * rng.standard_normal(dim)
    if kind == "fixed_normal":
        # Same random start for every trial.
        return float(init.get("scale", 1.0)) * np.random.default_rng(init.get("seed", 0)).standard_normal(dim)
    if kind == "point":
        x = np.asarray(init["value"], dtype=float)
        if x.shape != (dim,):
            raise ConfigError(f"init point must have {dim} entries")
        return x
    if kind == "perturbed_optimum":
        if not hasattr(problem, "K_star"):
            raise ConfigError("perturbed_optimum init only applies to LQR problems")
        return lqr_initial_gain(problem, rng, float(init.get("spread", 0.2))).ravel()
    raise ConfigError(f"unknown init kind {kind!r}")


def _schedule(cfg: ExperimentConfig, obj, eta, x0, trial_seed):
    sched = dict(cfg.schedule)
    regime = Regime(sched["regime"])
    T = cfg.horizon
    meta = obj.meta
    estimated = False
    if regime is not Regime.MANUAL:
        need_L1 = regime in (Regime.DET_NONCONVEX_C11, Regime.DET_CONVEX_C11)
        L0 = sched.get("L0", meta.lipschitz_L0)
        L1 = sched.get("L1", meta.grad_lipschitz_L1)
        if L0 is None or (need_L1 and L1 is None):
            est_L0, est_L1 = estimate_constants(obj, x0, np.random.default_rng([trial_seed, 2]))
            obj.reset_queries()
            L0 = est_L0 if L0 is None else L0
            L1 = est_L1 if L1 is None else L1
            estimated = True
        meta = ObjectiveMeta(
            dim=meta.dim, lipschitz_L0=L0, grad_lipschitz_L1=L1, noise_sigma=meta.noise_sigma,
            grad_noise_sigma=meta.grad_noise_sigma, convex=meta.convex, smooth=meta.smooth,
        )
    s = make_schedule(regime, meta, T, epsilon_f=sched.get("epsilon_f"), batch_b=cfg.batch_b, eta=eta,
                      delta=sched.get("delta"))
    return s, estimated


@dataclass
class TrialResult:
    index: int
    seed: int
    eta: Optional[float]
    status: str
    message: str = ""
    total_queries: int = 0
    metric_initial: Optional[float] = None
    metric_final: Optional[float] = None
    queries_to_threshold: Optional[int] = None
    curve: Optional[list] = None  # metric on the query grid, None beyond the run
    constants_estimated: bool = False

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "index", "seed", "eta", "status", "message", "total_queries", "metric_initial", "metric_final",
            "queries_to_threshold", "constants_estimated")}
        return d


def query_grid(budget: int, points: int = GRID_POINTS) -> np.ndarray:
    """Distinct integer query counts, log-spaced from 1 to ``budget``."""
    return np.unique(np.round(np.logspace(0, math.log10(max(budget, 1)), points)).astype(np.int64))


def align_curve(cum_queries, metric, metric0, grid) -> list:
    """Metric carried forward onto ``grid``.

    The value at ``q`` is the last metric observed with at most ``q``
    cumulative queries (``metric0`` before the first step).  Grid points past
    the run's final query count are ``None``.
    """
    cum = np.asarray(cum_queries)
    vals = np.asarray(metric, dtype=float)
    seen = ~np.isnan(vals)
    cum, vals = cum[seen], vals[seen]
    last_q = int(cum[-1]) if cum.size else 0
    out = []
    pos = np.searchsorted(cum, grid, side="right")
    for q, p in zip(grid, pos):
        if q > last_q:
            out.append(None)
        else:
            v = float(vals[p - 1]) if p > 0 else float(metric0)
            out.append(v if math.isfinite(v) else None)
    return out


def _first_crossing(cum_queries, metric, level) -> Optional[int]:
    vals = np.asarray(metric, dtype=float)
    hit = np.nonzero(vals <= level)[0]
    return int(cum_queries[hit[0]]) if hit.size else None


_PROBLEM_CACHE: dict = {}


def _cached_problem(doc_key: str, doc: dict):
    if doc_key not in _PROBLEM_CACHE:
        _PROBLEM_CACHE.clear()
        _PROBLEM_CACHE[doc_key] = problem_from_dict(doc)
    return _PROBLEM_CACHE[doc_key]


def _run_trial(cfg_doc: dict, problem_key: str, problem_doc: dict, eta, index: int, trace_dir: Optional[str],
               grid_budget: int) -> TrialResult:
    cfg = ExperimentConfig.from_dict(cfg_doc)
    problem = _cached_problem(problem_key, problem_doc)
    seed = cfg.seed + index
    try:
        obj, metric, metric_name = _objective_and_metric(problem, cfg)
        x0 = _initial_point(problem, cfg, seed)
        schedule, estimated = _schedule(cfg, obj, eta, x0, seed)
        opts = TraceOptions(
            store_iterates=cfg.trace.get("store_iterates", "auto"),
            metric=metric,
            metric_name=metric_name,
            metric_every=cfg.metric_every,
            output_rule=cfg.output_rule,
            output_seed=seed,
        )
        trace = run_sgd(obj, cfg.estimator, schedule, x0, np.random.default_rng(seed), opts, seed=seed)
    except ZOError as exc:
        return TrialResult(index, seed, eta, "errored", str(exc))
    except Exception as exc:  # noqa: BLE001 - a broken trial must not sink the experiment
        log.exception("trial %d failed", index)
        return TrialResult(index, seed, eta, "errored", f"{type(exc).__name__}: {exc}")

    final = trace.final_metric()
    if trace.output is not None and cfg.output_rule != "last_iterate":
        final = float(metric(trace.output))
    level = None
    if cfg.threshold:
        level = cfg.threshold.get("absolute")
        if level is None:
            level = cfg.threshold["relative"] * trace.metric0
    q_hit = None
    if level is not None and trace.n_records:
        q_hit = _first_crossing(trace.cum_queries, trace.metric, level)
    curve = align_curve(trace.cum_queries, trace.metric, trace.metric0, query_grid(grid_budget))
    if trace_dir is not None:
        every = int(cfg.trace.get("records_every", 1))
        trace.write(Path(trace_dir) / f"trial_{index:04d}.csv", every=every,
                    sidecar_extra={"trial": index, "constants_estimated": estimated, "problem_sha256": problem_key,
                                   "metric_kind": "value_gap" if metric_name == "value_gap" else metric_name})
    return TrialResult(
        index, seed, eta, trace.status, trace.message, trace.total_queries,
        _finite(trace.metric0), _finite(final), q_hit, curve, estimated,
    )


def _finite(v):
    return float(v) if v is not None and math.isfinite(v) else None


def _median(values):
    vals = [v for v in values if v is not None]
    return float(np.median(vals)) if vals else None


def _median_queries(results) -> Optional[float]:
    """Median over successful trials, counting unreached trials as infinite."""
    vals = [r.queries_to_threshold if r.queries_to_threshold is not None else math.inf for r in results if r.ok]
    if not vals:
        return None
    m = float(np.median(vals))
    return m if math.isfinite(m) else None


@dataclass
class Summary:
    name: str
    estimator: str
    status: str
    eta: Optional[float]
    problem_sha256: str
    query_budget: int
    trials: list
    grid: list
    median: list
    q25: list
    q75: list
    median_queries_to_threshold: Optional[float]
    median_final_metric: Optional[float]
    metric_name: str
    sweep: list
    config: dict
    output_dir: Optional[str] = None
    trace_dir: Optional[str] = None

    @property
    def n_failed(self) -> int:
        return sum(not t.ok for t in self.trials)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "estimator": self.estimator,
            "status": self.status,
            "eta": self.eta,
            "problem_sha256": self.problem_sha256,
            "query_budget": self.query_budget,
            "metric_name": self.metric_name,
            "n_trials": len(self.trials),
            "n_failed": self.n_failed,
            "median_queries_to_threshold": self.median_queries_to_threshold,
            "threshold_reached": self.median_queries_to_threshold is not None,
            "median_final_metric": self.median_final_metric,
            "sweep": self.sweep,
            "trials": [t.to_dict() for t in self.trials],
            "trace_dir": self.trace_dir,
            "curve": {"queries": self.grid, "median": self.median, "q25": self.q25, "q75": self.q75},
            "config": self.config,
        }

    def curve_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("queries", "median", "q25", "q75"))
        for row in zip(self.grid, self.median, self.q25, self.q75):
            w.writerow(["" if v is None else repr(v) for v in row])
        return buf.getvalue()

    def median_at(self, queries: int) -> Optional[float]:
        """Median metric at the largest grid point not above ``queries``."""
        pos = int(np.searchsorted(self.grid, queries, side="right")) - 1
        return None if pos < 0 else self.median[pos]


def _reduce(results, grid):
    ok = [r for r in results if r.ok]
    med, lo, hi = [], [], []
    for j in range(len(grid)):
        col = [r.curve[j] for r in ok if r.curve is not None and r.curve[j] is not None]
        if col:
            q = np.percentile(col, [50, 25, 75])
            med.append(float(q[0]))
            lo.append(float(q[1]))
            hi.append(float(q[2]))
        else:
            med.append(None)
            lo.append(None)
            hi.append(None)
    return med, lo, hi


def resolve_output_dir(cfg: ExperimentConfig, override=None) -> Path:
    base = override or cfg.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT
    return Path(base) / cfg.name


def run_experiment(cfg: ExperimentConfig, *, output_dir=None, jobs: int = 1, write: bool = True,
                   grid_budget: Optional[int] = None) -> Summary:
    """Run every trial of ``cfg`` (for each candidate step size) and summarise.

    Trials use seeds ``cfg.seed + i``.  Failed trials are reported but never
    enter medians; if more than half fail the summary status is ``"failed"``.
    """
    problem = build_problem(cfg.problem)
    problem_doc = problem.to_dict()
    key = problem_digest(problem)
    budget = grid_budget or cfg.query_budget
    grid = query_grid(budget)
    out = resolve_output_dir(cfg, output_dir) if write else None
    etas = cfg.etas
    cfg_doc = cfg.to_dict()

    runs = []
    for k, eta in enumerate(etas):
        trace_dir = None
        if out is not None:
            trace_dir = out / ("traces" if len(etas) == 1 else f"traces_eta{k}")
            trace_dir.mkdir(parents=True, exist_ok=True)
        args = [(cfg_doc, key, problem_doc, eta, i, None if trace_dir is None else str(trace_dir), budget)
                for i in range(cfg.n_trials)]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_run_trial, *zip(*args)))
        else:
            results = [_run_trial(*a) for a in args]
        results.sort(key=lambda r: r.index)
        runs.append((eta, results))
        log.info("%s eta=%s: %d/%d trials ok", cfg.name, eta, sum(r.ok for r in results), len(results))

    def score(item):
        k, (eta, results) = item
        mq = _median_queries(results)
        mf = _median([r.metric_final for r in results if r.ok])
        n_ok = sum(r.ok for r in results)
        return (n_ok * 2 <= len(results), math.inf if mq is None else mq, math.inf if mf is None else mf, k)

    best_k, (best_eta, best) = min(enumerate(runs), key=score)
    sweep = [
        {"eta": eta, "n_failed": sum(not r.ok for r in res), "median_queries_to_threshold": _median_queries(res),
         "median_final_metric": _median([r.metric_final for r in res if r.ok])}
        for eta, res in runs
    ]
    med, lo, hi = _reduce(best, grid)
    failed = sum(not r.ok for r in best)
    status = "failed" if failed > FAILED_FRACTION * len(best) else "ok"
    metric_name = _METRIC_NAMES[problem_doc["kind"]]
    summary = Summary(
        name=cfg.name,
        estimator=cfg.estimator,
        status=status,
        eta=best_eta,
        problem_sha256=key,
        query_budget=cfg.query_budget,
        trials=best,
        grid=[int(q) for q in grid],
        median=med,
        q25=lo,
        q75=hi,
        median_queries_to_threshold=_median_queries(best),
        median_final_metric=_median([r.metric_final for r in best if r.ok]),
        metric_name=metric_name,
        sweep=sweep,
        config=cfg_doc,
        output_dir=None if out is None else str(out),
        trace_dir=None if out is None else ("traces" if len(etas) == 1 else f"traces_eta{best_k}"),
    )
    if out is not None:
        _write_json(out / "problem.json", problem_doc)
        _write_json(out / "summary.json", summary.to_dict())
        (out / "curve.csv").write_text(summary.curve_csv())
        (out / "config.yaml").write_text(cfg.dump())
    return summary


def _write_json(path, doc):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


@dataclass
class Comparison:
    rows: list
    grid: list
    summaries: list

    def table(self) -> str:
        lines = [f"{'rank':>4}  {'estimator':<22} {'eta':>10}  {'median queries':>15}  {'final metric':>13}  failed"]
        for i, r in enumerate(self.rows, 1):
            mq = "unreached" if r["median_queries_to_threshold"] is None else f"{r['median_queries_to_threshold']:.0f}"
            mf = "n/a" if r["median_final_metric"] is None else f"{r['median_final_metric']:.4g}"
            eta = "n/a" if r["eta"] is None else f"{r['eta']:.3g}"
            lines.append(f"{i:>4}  {r['estimator']:<22} {eta:>10}  {mq:>15}  {mf:>13}  {r['n_failed']}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"ranking": self.rows, "grid": self.grid}

    def combined_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["queries"] + [f"{s.name}_median" for s in self.summaries])
        for j, q in enumerate(self.grid):
            w.writerow([q] + ["" if s.median[j] is None else repr(s.median[j]) for s in self.summaries])
        return buf.getvalue()


def compare_estimators(configs, *, output_dir=None, jobs: int = 1, write: bool = True) -> Comparison:
    """Run configs that share one problem and rank them.

    Ranking is by median queries to the threshold (unreached last), then by
    median final metric, then by estimator name.  All summaries share one query grid sized to the
    largest budget.

    Raises
    ------
    IncompatibleComparisonError
        The configs describe different problems.
    """
    configs = list(configs)
    if not configs:
        raise ConfigError("nothing to compare")
    digests = {problem_digest(build_problem(c.problem)) for c in configs}
    if len(digests) > 1:
        raise IncompatibleComparisonError("configs describe different problem instances")
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ConfigError("compared configs must have distinct names")
    budget = max(c.query_budget for c in configs)
    summaries = [run_experiment(c, output_dir=output_dir, jobs=jobs, write=write, grid_budget=budget) for c in configs]
    rows = [
        {"name": s.name, "estimator": s.estimator, "eta": s.eta, "status": s.status, "n_failed": s.n_failed,
         "median_queries_to_threshold": s.median_queries_to_threshold,
         "threshold_reached": s.median_queries_to_threshold is not None,
         "median_final_metric": s.median_final_metric}
        for s in summaries
    ]
    rows.sort(key=lambda r: (r["median_queries_to_threshold"] is None,
                             r["median_queries_to_threshold"] or 0.0,
                             math.inf if r["median_final_metric"] is None else r["median_final_metric"],
                             r["estimator"], r["name"]))
    cmp = Comparison(rows, summaries[0].grid, summaries)
    if write:
        base = Path(output_dir or configs[0].output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
        _write_json(base / "comparison.json", cmp.to_dict())
        (base / "comparison.csv").write_text(cmp.combined_csv())
    return cmp
