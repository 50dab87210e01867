"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best-of-N wall time for each backend.
"""

import argparse
import timeit

import numpy as np

from zo_residual import _kernels
from zo_residual.problems import grid_make, lqr_initial_gain, lqr_make, make_qp
from zo_residual.problems.qp import QpChain


def qp_case(mod):
    qp = make_qp(30, 0)
    chain = QpChain(qp)
    U = np.random.default_rng(0).standard_normal((20_000, 30))

    def run():
        x = np.zeros(30)
        bufs = [np.empty(len(U)) for _ in range(3)]
        mod.qp_chain(3, chain.P, U, x, chain.residual_of(x), 1e-5, 0.1, 0.0, 1e9, *bufs,
                     np.empty((0, 30)), np.zeros(30), False)

    return run, "qp_chain      residual, d=30, 20000 steps"


def lqr_case(mod):
    p = lqr_make(6, 6, 0.5, 0.1, 0)
    rng = np.random.default_rng(0)
    n = 2000
    K = np.ascontiguousarray(np.broadcast_to(lqr_initial_gain(p, rng), (n, 6, 6)))
    X0 = rng.standard_normal((n, 6))
    W = 0.1 * rng.standard_normal((n, 50, 6))

    def run():
        mod.lqr_rollouts(p.A, p.B, p.Q, p.R, K, X0, W, 0.5, 1e10)

    return run, "lqr_rollouts  6x6, H=50, 2000 episodes"


def grid_case(mod):
    g = grid_make(0)
    rng = np.random.default_rng(0)
    n = 200
    th = np.ascontiguousarray(0.1 * rng.standard_normal((n, g.n_actions, g.n_features)))
    noise = np.ascontiguousarray(g.sample(rng, (n,)))

    def run():
        mod.grid_episodes(th, noise, g.owner, g.target, g.offset, np.ascontiguousarray(g.centers), g.amp,
                          g.omega, g.phase, g.m0, g.noise_std, g.gamma, g.horizon_K)

    return run, "grid_episodes 4x4 grid, K=30, 200 episodes"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = _kernels.backends()
    if "native" not in backends:
        print("compiled extension not built; only the fallback is available")
    for case in (qp_case, lqr_case, grid_case):
        times = {}
        label = ""
        for name, mod in backends.items():
            fn, label = case(mod)
            times[name] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        cols = "  ".join(f"{k} {v * 1e3:9.2f} ms" for k, v in times.items())
        speed = f"  speedup {times['python'] / times['native']:6.1f}x" if "native" in times else ""
        print(f"{label:<45} {cols}{speed}")


if __name__ == "__main__":
    main()
