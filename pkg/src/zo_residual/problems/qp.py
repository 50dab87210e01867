"""Random convex quadratic program ``0.5 (x - c)^T M (x - c)``.

``M = P P^T`` with ``P`` of shape ``d x (d - 1)``, so ``M`` is rank
deficient; the optimal value is exactly zero and is attained at ``x = c``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import _kernels
from ..errors import InvalidDimensionError
from ..objective import Objective, ObjectiveMeta


@dataclass(frozen=True, eq=False)
class QpProblem:
    M: np.ndarray
    c: np.ndarray
    P: np.ndarray
    d: int
    seed: Optional[int] = None

    f_star = 0.0

    def value(self, x):
        z = (np.asarray(x, dtype=float) - self.c) @ self.P
        return 0.5 * np.sum(z * z, axis=-1)

    def gradient(self, x):
        return (np.asarray(x, dtype=float) - self.c) @ self.M

    def value_gap(self, x) -> float:
        return float(self.value(x)) - self.f_star

    def meta(self) -> ObjectiveMeta:
        lam_max = float(np.linalg.eigvalsh(self.M)[-1])
        return ObjectiveMeta(dim=self.d, grad_lipschitz_L1=lam_max, convex=True, smooth=True)

    def objective(self) -> Objective:
        obj = Objective(
            self.value, self.meta(), vectorized=True, gradient=self.gradient, name=f"qp(d={self.d})"
        )
        obj.chain = QpChain(self)
        return obj

    def to_dict(self) -> dict:
        return {
            "kind": "qp",
            "seed": self.seed,
            "d": self.d,
            "generation": {"c": "uniform[0,2]", "P": "uniform[0,1] d x (d-1)", "M": "P P^T"},
            "c": self.c.tolist(),
            "P": self.P.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "QpProblem":
        P = np.asarray(doc["P"], dtype=float)
        return cls(M=P @ P.T, c=np.asarray(doc["c"], dtype=float), P=P, d=int(doc["d"]), seed=doc.get("seed"))


def make_qp(d: int, seed) -> QpProblem:
    """Draw ``c ~ U[0, 2]^d`` and ``P ~ U[0, 1]^{d x (d-1)}`` from ``seed``."""
    if int(d) != d or d < 2:
        raise InvalidDimensionError(f"QP dimension must be >= 2, got {d!r}")
    d = int(d)
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.0, 2.0, d)
    P = rng.uniform(0.0, 1.0, (d, d - 1))
    return QpProblem(M=P @ P.T, c=c, P=P, d=d, seed=seed)


def qp_eval(problem: QpProblem, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.d,):
        raise InvalidDimensionError(f"expected x of shape ({problem.d},), got {x.shape}")
    return float(problem.value(x))


class QpChain:
    """Fused SGD steps on a QP, run by the compiled kernel.

    Only deterministic estimators whose per-step randomness is a single
    direction draw are supported, which keeps the random stream identical to
    the generic step-by-step loop.
    """

    supports = frozenset(_kernels.CHAIN_KINDS)

    def __init__(self, problem: QpProblem):
        self.problem = problem
        self.P = np.ascontiguousarray(problem.P)
        self.metric_fn = problem.value_gap

    def residual_of(self, x):
        return np.ascontiguousarray((x - self.problem.c) @ self.P)

    def run(self, name, U, x, r, eta, delta, prev, diverge_at, store):
        n = U.shape[0]
        f_obs = np.empty(n)
        gsq = np.empty(n)
        gap = np.empty(n)
        X = np.empty((n if store else 0, self.problem.d))
        xsum = np.zeros(self.problem.d)
        done, status, prev = _kernels.qp_chain(
            _kernels.CHAIN_KINDS[name], self.P, np.ascontiguousarray(U), x, r,
            float(eta), float(delta), float(prev), float(diverge_at),
            f_obs, gsq, gap, X, xsum, bool(store),
        )
        return {
            "done": int(done), "status": int(status), "prev": float(prev),
            "f_obs": f_obs[:done], "gsq": gsq[:done], "gap": gap[:done],
            "X": X[:done] if store else None, "xsum": xsum,
        }
