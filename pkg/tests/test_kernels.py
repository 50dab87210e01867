"""Compiled and pure-Python kernels must agree."""

import numpy as np
import pytest

from zo_residual import _kernels
from zo_residual._kernels import _fallback
from zo_residual.problems import grid_make, lqr_initial_gain, lqr_make, make_qp
from zo_residual.problems.qp import QpChain

native = _kernels.backends().get("native")
needs_native = pytest.mark.skipif(native is None, reason="compiled extension not built")


@needs_native
@pytest.mark.parametrize("kind", sorted(_kernels.CHAIN_KINDS))
@pytest.mark.parametrize("store", [False, True])
def test_qp_chain(kind, store):
    qp = make_qp(12, 4)
    chain = QpChain(qp)
    rng = np.random.default_rng(0)
    U = rng.standard_normal((200, 12))
    outs = []
    for mod in (native, _fallback):
        x = np.zeros(12)
        r = chain.residual_of(x)
        f_obs, gsq, gap = np.empty(200), np.empty(200), np.empty(200)
        X = np.empty((200 if store else 0, 12))
        xsum = np.zeros(12)
        res = mod.qp_chain(_kernels.CHAIN_KINDS[kind], chain.P, U, x, r, 1e-4, 0.1, 3.0, 1e9,
                           f_obs, gsq, gap, X, xsum, store)
        outs.append((res, x, f_obs, gsq, gap, X, xsum))
    (ra, *a), (rb, *b) = outs
    assert ra[:2] == rb[:2]
    assert ra[2] == pytest.approx(rb[2], rel=1e-10)
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, rtol=1e-9, atol=1e-12)


@needs_native
def test_qp_chain_guard_agrees():
    qp = make_qp(12, 4)
    chain = QpChain(qp)
    U = np.random.default_rng(1).standard_normal((500, 12))
    results = []
    for mod in (native, _fallback):
        x = np.zeros(12)
        bufs = [np.empty(500) for _ in range(3)]
        results.append(mod.qp_chain(0, chain.P, U, x, chain.residual_of(x), 1.0, 0.1, 0.0, 1e6, *bufs,
                                    np.empty((0, 12)), np.zeros(12), False)[:2])
    assert results[0] == results[1] and results[0][1] != 0


@needs_native
def test_lqr_rollouts():
    p = lqr_make(4, 3, 0.5, 0.1, 0)
    rng = np.random.default_rng(2)
    K = np.stack([lqr_initial_gain(p, rng) for _ in range(8)])
    X0 = rng.standard_normal((8, 4))
    W = 0.1 * rng.standard_normal((8, 50, 4))
    K[0] += 50.0  # blows up and hits the clip
    args = (p.A, p.B, p.Q, p.R, np.ascontiguousarray(K), X0, W, 0.5, 1e10)
    np.testing.assert_allclose(native.lqr_rollouts(*args), _fallback.lqr_rollouts(*args), rtol=1e-10)


@needs_native
def test_grid_episodes():
    g = grid_make(3, initial_stock=1.0)
    rng = np.random.default_rng(5)
    th = np.ascontiguousarray(rng.standard_normal((6, g.n_actions, g.n_features)))
    noise = np.ascontiguousarray(g.sample(rng, (6,)))
    args = (th, noise, g.owner, g.target, g.offset, np.ascontiguousarray(g.centers), g.amp, g.omega, g.phase,
            g.m0, g.noise_std, g.gamma, g.horizon_K)
    a, b = native.grid_episodes(*args), _fallback.grid_episodes(*args)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)
    for k in range(6):
        assert b[k] == pytest.approx(_fallback.grid_trajectory(th[k], noise[k], *args[2:])["J"], rel=1e-12)


def test_backend_selection_env(monkeypatch):
    import importlib
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-c", "import zo_residual; print(zo_residual.BACKEND)"],
                         env={**__import__("os").environ, "ZO_RESIDUAL_PURE_PYTHON": "1"},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert importlib.import_module("zo_residual").BACKEND in ("native", "python")
