"""Acceptance criteria, one test per criterion.

Oracles are computed here from closed forms (the Gaussian-smoothed gradient
of a quadratic is the plain gradient; the bounds below are written out from
their formulas) rather than taken from the package.  Tolerances and runtime
limits are fixed by the criteria and must not be loosened.
"""

import dataclasses
import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from zo_residual import harness
from zo_residual.estimators import (
    EstimatorState,
    one_point,
    residual,
    residual_minibatch,
    two_point_central,
    two_point_forward,
    two_point_stochastic_fixed,
    two_point_stochastic_independent,
)
from zo_residual.objective import additive_noise
from zo_residual.optimizer import Schedule, TraceOptions, make_schedule, replica_second_moments, run_sgd
from zo_residual.problems import grid_make, make_qp
from zo_residual.problems.testfuncs import log_bowl, pseudo_huber, quadratic, weighted_l1
from zo_residual.smoothing import approx_bounds, smoothed_grad_mc, smoothed_value_mc

pytestmark = pytest.mark.acceptance

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
Z = 4.0  # standard errors allowed wherever a Monte Carlo mean is compared


def _unit(rng, d):
    x = rng.standard_normal(d)
    return x / np.linalg.norm(x)


def _frozen(name, obj, x, delta, n, rng):
    """``n`` independent estimates at the fixed point ``x``."""
    X = np.tile(x, (n, 1))
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
        _, s = residual(obj, X, delta, EstimatorState(), rng)
        return residual(obj, X, delta, s, rng)[0].g
    if name == "residual_minibatch":
        _, s = residual_minibatch(obj, X, delta, 4, EstimatorState(), rng)
        return residual_minibatch(obj, X, delta, 4, s, rng)[0].g
    raise ValueError(name)


def test_criterion_01_unbiasedness(criterion_report):
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    n = 200_000
    cases = [
        ("one_point", False), ("two_point_forward", False), ("two_point_central", False),
        ("two_point_fixed", True), ("two_point_independent", True), ("residual", False),
        ("residual", True), ("residual_minibatch", True),
    ]
    worst, where = 0.0, ""
    for d in (2, 10):
        base = quadratic(d)
        noisy = additive_noise(base, 0.1)
        for delta in (0.05, 0.5):
            x = _unit(rng, d)
            for name, stochastic in cases:
                g = _frozen(name, noisy if stochastic else base, x, delta, n, rng)
                z = np.abs(g.mean(axis=0) - x) / (g.std(axis=0, ddof=1) / math.sqrt(n))
                if z.max() > worst:
                    worst, where = float(z.max()), f"{name} d={d} delta={delta}"
    elapsed = time.perf_counter() - start
    ok = worst <= Z and elapsed < 30
    criterion_report(1, ok, f"max |z| {worst:.2f} at {where}; {elapsed:.1f}s")
    assert worst <= Z
    assert elapsed < 30


def test_criterion_02_variance_ordering(criterion_report):
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    d, delta, n = 10, 0.05, 100_000
    obj = quadratic(d)
    x = _unit(rng, d)
    assert float(obj(x)) == pytest.approx(0.5)
    m_res = float(np.mean(np.sum(_frozen("residual", obj, x, delta, n, rng) ** 2, axis=1)))
    m_one = float(np.mean(np.sum(_frozen("one_point", obj, x, delta, n, rng) ** 2, axis=1)))
    elapsed = time.perf_counter() - start
    ok = m_res <= m_one / 5 and elapsed < 10
    criterion_report(2, ok, f"residual {m_res:.1f}, one-point {m_one:.1f}, ratio {m_one / m_res:.1f}; {elapsed:.1f}s")
    assert m_res <= m_one / 5
    assert elapsed < 10


def _second_moment_worst(stochastic):
    d, steps, n, eta, delta, sigma, L0 = 5, 50, 10_000, 0.02, 0.05, 0.1, 1.0
    rng = np.random.default_rng(303 + stochastic)
    obj = pseudo_huber(d, L0)
    if stochastic:
        obj = additive_noise(obj, sigma, controllable=False)
    x0 = 2.0 * _unit(rng, d)
    mom = replica_second_moments(obj, "residual", Schedule(eta, delta, steps), x0, n, rng)
    if stochastic:
        coef = 4 * L0**2 * d * eta**2 / delta**2
        const = 16 * L0**2 * (d + 4) ** 2 + 8 * sigma**2 * d / delta**2
    else:
        coef = 2 * d * L0**2 * eta**2 / delta**2
        const = 8 * L0**2 * (d + 4) ** 2
    bound = np.concatenate([[const], coef * mom[:-1, 0] + const])
    return float(np.max((mom[:, 0] - Z * mom[:, 1]) / bound)), float(mom[:, 0].max())


def test_criterion_03_second_moment_bounds(criterion_report):
    start = time.perf_counter()
    det, det_peak = _second_moment_worst(False)
    sto, sto_peak = _second_moment_worst(True)
    elapsed = time.perf_counter() - start
    ok = det <= 1.0 and sto <= 1.0 and elapsed < 120
    criterion_report(3, ok, f"worst empirical/bound: deterministic {det:.3f} (peak {det_peak:.1f}), "
                   f"stochastic {sto:.3f} (peak {sto_peak:.1f}); {elapsed:.1f}s")
    assert det <= 1.0 and sto <= 1.0
    assert elapsed < 120


def test_criterion_04_smoothing_bounds(criterion_report):
    start = time.perf_counter()
    rng = np.random.default_rng(404)
    d, delta, n = 10, 0.1, 20_000
    qp = make_qp(d, 7)
    q_obj = qp.objective()
    L1 = float(np.linalg.eigvalsh(qp.M).max())
    w = rng.uniform(0.5, 2.0, d)
    l1 = weighted_l1(w)
    L0 = float(np.linalg.norm(w))
    # closed-form bounds, written out independently of the package
    qp_value_bound = delta**2 * L1 * d
    qp_grad_bound = delta * L1 * (d + 3) ** 1.5
    l1_value_bound = delta * L0 * math.sqrt(d)
    l1_lip = math.sqrt(d) * L0 / delta
    assert approx_bounds(q_obj.meta, delta).value_gap_bound == pytest.approx(qp_value_bound)
    assert approx_bounds(l1.meta, delta).smoothed_grad_lipschitz == pytest.approx(l1_lip)

    worst, where = -math.inf, ""

    def note(slack, label):
        nonlocal worst, where
        if slack > worst:
            worst, where = slack, label

    for _ in range(20):
        x = rng.uniform(-1.0, 3.0, d)
        est = smoothed_value_mc(q_obj, x, delta, n, rng)
        # exact smoothed QP value: f(x) + delta^2 tr(M) / 2
        exact = float(q_obj(x)) + 0.5 * delta**2 * np.trace(qp.M)
        note(abs(est.value_mean - exact) - Z * est.value_stderr - 1e-9 * abs(exact), "qp value vs closed form")
        note(abs(exact - float(q_obj(x))) - qp_value_bound, "qp value gap")
        mean, se = smoothed_grad_mc(q_obj, x, delta, n, rng)
        note(float(np.linalg.norm(mean - qp.gradient(x))) - qp_grad_bound - Z * float(np.linalg.norm(se)),
             "qp gradient gap")
        est = smoothed_value_mc(l1, x, delta, n, rng)
        note(abs(est.value_mean - float(l1(x))) - l1_value_bound - Z * est.value_stderr, "l1 value gap")
    for _ in range(20):
        x, y = rng.uniform(-1.0, 3.0, (2, d))
        gx, sx = smoothed_grad_mc(l1, x, delta, n, rng)
        gy, sy = smoothed_grad_mc(l1, y, delta, n, rng)
        note(float(np.linalg.norm(gx - gy)) - l1_lip * float(np.linalg.norm(x - y))
             - Z * float(np.linalg.norm(np.hypot(sx, sy))), "l1 smoothed Lipschitz")
    elapsed = time.perf_counter() - start
    ok = worst <= 0.0 and elapsed < 60
    criterion_report(4, ok, f"largest excess over bound {worst:.3g} ({where}); {elapsed:.1f}s")
    assert worst <= 0.0
    assert elapsed < 60


def _compare(names, tmp_path):
    configs = [harness.ExperimentConfig.load(CONFIGS / f"{n}.yaml") for n in names]
    cmp = harness.compare_estimators(configs, output_dir=tmp_path)
    return {s.estimator: s for s in cmp.summaries}


def test_criterion_05_qp_reproduction(tmp_path, criterion_report):
    start = time.perf_counter()
    s = _compare(["qp_residual", "qp_two_point_forward", "qp_one_point"], tmp_path)
    res = s["residual"].median_queries_to_threshold
    two = s["two_point_forward"].median_queries_to_threshold
    one = s["one_point"].median_queries_to_threshold
    elapsed = time.perf_counter() - start
    within = res is not None and two is not None and res <= 3 * two and two <= 3 * res
    one_slow = res is not None and (one is None or one >= 5 * res)
    ok = within and one_slow and elapsed < 300
    criterion_report(5, ok, f"median queries to 0.1 f(x0): residual {res}, two-point {two}, "
                   f"one-point {one if one is not None else 'unreached'}; {elapsed:.0f}s")
    assert within
    assert one_slow
    assert elapsed < 300


def test_criterion_06_rate_exponent(criterion_report):
    start = time.perf_counter()
    d = 5
    obj = log_bowl(d)
    horizons = (1_000, 10_000, 100_000)
    medians = []
    for T in horizons:
        sched = make_schedule("det-nonconvex-C11", obj.meta, T)
        vals = []
        for seed in range(20):
            tr = run_sgd(obj, "residual", sched, np.ones(d), np.random.default_rng(seed),
                         TraceOptions(output_rule="uniform_iterate", output_seed=seed + 1_000_000), seed=seed)
            g = obj.gradient(tr.output)
            vals.append(float(g @ g))
        medians.append(float(np.median(vals)))
    slope = float(np.polyfit(np.log10(horizons), np.log10(medians), 1)[0])
    elapsed = time.perf_counter() - start
    ok = -1.0 <= slope <= -0.4 and elapsed < 300
    criterion_report(6, ok, f"medians {['%.4g' % m for m in medians]}, slope {slope:.3f}; {elapsed:.0f}s")
    assert -1.0 <= slope <= -0.4
    assert elapsed < 300


def test_criterion_07_lqr_reproduction(tmp_path, criterion_report):
    start = time.perf_counter()
    s = _compare(["lqr_residual", "lqr_two_point_independent", "lqr_one_point"], tmp_path)
    at = 20_000
    res = s["residual"].median_at(at)
    two = s["two_point_independent"].median_at(at)
    one = s["one_point"].median_at(at)
    fail_frac = max(v.n_failed / len(v.trials) for v in s.values())
    elapsed = time.perf_counter() - start
    vs_two = res <= 3 * two and two <= 3 * res
    vs_one = res <= one / 3
    ok = vs_two and vs_one and fail_frac <= 0.2 and elapsed < 600
    criterion_report(7, ok, f"median value gap at {at} queries: residual {res:.4g}, two-point {two:.4g}, "
                   f"one-point {one:.4g}; worst failed fraction {fail_frac:.2f}; {elapsed:.0f}s")
    assert fail_frac <= 0.2
    assert vs_two
    assert vs_one
    assert elapsed < 600


def test_criterion_08_minibatch_noise_scaling(criterion_report):
    start = time.perf_counter()
    d, delta, sigma, n = 5, 0.1, 1.0, 100_000

    def noise_moment(b, seed):
        rng = np.random.default_rng(seed)
        base = quadratic(d)
        noisy = additive_noise(base, sigma)
        X = np.tile(_unit(rng, d), (n, 1))
        _, state = residual_minibatch(noisy, X, delta, b, EstimatorState(), rng)
        u_prev = state.prev_direction
        est, new = residual_minibatch(noisy, X, delta, b, state, rng)
        u = new.prev_direction
        clean = u * ((base(X + delta * u) - base(X + delta * u_prev)) / delta)[:, None]
        return float(np.mean(np.sum((est.g - clean) ** 2, axis=1)))

    m1, m16 = noise_moment(1, 801), noise_moment(16, 802)
    # oracle: two independent N(0, sigma^2 / b) means, times u / delta
    oracle1 = 2 * sigma**2 * d / delta**2
    ratio = m16 / (m1 / 16)
    elapsed = time.perf_counter() - start
    ok = 0.5 <= ratio <= 2.0 and elapsed < 60
    criterion_report(8, ok, f"b=1 {m1:.1f} (oracle {oracle1:.1f}), b=16 {m16:.2f}, ratio to 1/16 {ratio:.3f}; {elapsed:.1f}s")
    assert m1 == pytest.approx(oracle1, rel=0.05)
    assert 0.5 <= ratio <= 2.0
    assert elapsed < 60


def test_criterion_09_grid_sanity(tmp_path, criterion_report):
    start = time.perf_counter()
    g = grid_make(0)
    assert g.dim == 576
    rng = np.random.default_rng(909)
    theta = rng.standard_normal(g.dim)
    traj = g.trajectory(theta, g.sample(rng))
    probs = traj["probs"]
    assert (probs >= 0).all()
    assert np.allclose(np.add.reduceat(probs, g.offset[:-1], axis=1), 1.0)
    returns = g.returns(rng.standard_normal((16, g.dim)), g.sample(rng, (16,)))
    assert (returns <= 0).all()
    quiet = dataclasses.replace(g, amp=np.zeros_like(g.amp), noise_std=0.0)
    stock = quiet.trajectory(theta, quiet.sample(rng))["stock"]
    assert np.allclose(stock.sum(axis=1), stock[0].sum(), rtol=0, atol=1e-9)

    s = _compare(["grid_residual", "grid_one_point"], tmp_path)
    j0 = -s["residual"].median[0]
    assert j0 == pytest.approx(-s["one_point"].median[0])
    gain_res = -s["residual"].median_final_metric - j0
    gain_one = -s["one_point"].median_final_metric - j0
    elapsed = time.perf_counter() - start
    ok = gain_res > 0 and gain_one < gain_res and elapsed < 600
    criterion_report(9, ok, f"J0 {j0:.4f}; median J gain residual {gain_res:+.4f}, one-point {gain_one:+.4f}; {elapsed:.0f}s")
    assert gain_res > 0
    assert gain_one < gain_res
    assert elapsed < 600


def test_criterion_10_determinism(tmp_path, criterion_report):
    cfg = CONFIGS / "smoke.yaml"
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        proc = subprocess.run([sys.executable, "-m", "zo_residual.cli", "run", str(cfg), "--output-dir", str(out)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outs.append((out / "smoke" / "summary.json").read_bytes())
    identical = outs[0] == outs[1]
    json.loads(outs[0])
    proc = subprocess.run([sys.executable, "-m", "zo_residual.cli", "verify"], capture_output=True, text=True)
    ok = identical and proc.returncode == 0
    criterion_report(10, ok, f"summaries identical: {identical}; zo verify exit {proc.returncode}")
    assert identical
    assert proc.returncode == 0, proc.stdout
