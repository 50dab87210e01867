"""Discounted linear-quadratic regulator as a noisy policy-search objective.

The policy is a static gain ``u_k = K x_k``; the objective is the discounted
cost of one finite-horizon episode under process noise and an initial state
``x_0 = x0_mean + x0_std * N(0, I)`` (by default ``x0_mean = 0``,
``x0_std = 1``).  ``lqr_true_value`` gives the exact infinite-horizon expected cost for
reporting optimality gaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .. import _kernels
from ..errors import InvalidDimensionError, UnstabilizableError
from ..objective import Objective, ObjectiveMeta

COST_CLIP = 1e10


def discounted_riccati(A, B, Q, R, gamma, tol=1e-10, max_iter=10_000):
    """Fixed-point iteration of the discounted Riccati equation.

    Iterates on ``(sqrt(gamma) A, sqrt(gamma) B)`` from ``P = Q`` until the
    largest entrywise change drops below ``tol``.

    Returns
    -------
    P : ndarray
        Cost-to-go matrix.
    K : ndarray
        Optimal gain for ``u = K x``.
    """
    As = math.sqrt(gamma) * np.asarray(A, dtype=float)
    Bs = math.sqrt(gamma) * np.asarray(B, dtype=float)
    P = np.array(Q, dtype=float)
    for _ in range(max_iter):
        BtP = Bs.T @ P
        gain = np.linalg.solve(R + BtP @ Bs, BtP @ As)
        P_next = Q + As.T @ P @ As - As.T @ P @ Bs @ gain
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            break
        if np.max(np.abs(P_next - P)) < tol:
            P = P_next
            BtP = Bs.T @ P
            K = -np.linalg.solve(R + BtP @ Bs, BtP @ As)
            return P, K
        P = P_next
    raise UnstabilizableError(f"Riccati iteration did not converge in {max_iter} iterations")


@dataclass(frozen=True, eq=False)
class LqrProblem:
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    gamma: float
    noise_std: float
    horizon_H: int
    K_star: np.ndarray
    x0_std: float = 1.0
    seed: Optional[int] = None
    generation: dict = field(default_factory=dict)
    x0_mean: Optional[np.ndarray] = None

    def __post_init__(self):
        mean = np.zeros(self.A.shape[0]) if self.x0_mean is None else np.asarray(self.x0_mean, dtype=float)
        if mean.shape != (self.A.shape[0],):
            raise InvalidDimensionError(f"x0_mean must have {self.A.shape[0]} entries")
        object.__setattr__(self, "x0_mean", mean)

    def initial_second_moment(self) -> np.ndarray:
        """``E[x_0 x_0^T]``."""
        return self.x0_std**2 * np.eye(self.n_x) + np.outer(self.x0_mean, self.x0_mean)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def dim(self) -> int:
        return self.n_x * self.n_u

    @classmethod
    def from_matrices(cls, A, B, Q=None, R=None, *, gamma=1.0, noise_std=0.0, horizon_H=50, x0_std=1.0, seed=None,
                      generation=None, x0_mean=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        n_x, n_u = B.shape
        Q = np.eye(n_x) if Q is None else np.atleast_2d(np.asarray(Q, dtype=float))
        R = np.eye(n_u) if R is None else np.atleast_2d(np.asarray(R, dtype=float))
        _check_gamma(gamma)
        _, K = discounted_riccati(A, B, Q, R, gamma)
        return cls(A, B, Q, R, float(gamma), float(noise_std), int(horizon_H), K, float(x0_std), seed,
                   dict(generation or {}), x0_mean)

    def gain(self, theta) -> np.ndarray:
        return np.asarray(theta, dtype=float).reshape(self.n_u, self.n_x)

    def value_gap(self, theta) -> float:
        return abs(lqr_true_value(self, self.gain(theta)) - lqr_true_value(self, self.K_star))

    def sample(self, rng, shape=()):
        """Standard-normal episode randomness: initial state then ``H`` noises."""
        return rng.standard_normal(tuple(shape) + (self.horizon_H + 1, self.n_x))

    def costs(self, thetas, xi) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        n = thetas.shape[0]
        K = np.ascontiguousarray(thetas.reshape(n, self.n_u, self.n_x))
        X0 = np.ascontiguousarray(self.x0_mean + self.x0_std * xi[:, 0, :])
        W = np.ascontiguousarray(self.noise_std * xi[:, 1:, :])
        return _kernels.lqr_rollouts(self.A, self.B, self.Q, self.R, K, X0, W, self.gamma, COST_CLIP)

    def objective(self, *, controllable=False) -> Objective:
        meta = ObjectiveMeta(dim=self.dim, noise_sigma=None)
        return Objective(
            self.costs,
            meta,
            sampler=self.sample,
            sample_shape=(self.horizon_H + 1, self.n_x),
            controllable=controllable,
            vectorized=True,
            name=f"lqr(n_x={self.n_x}, n_u={self.n_u})",
        )

    def to_dict(self) -> dict:
        return {
            "kind": "lqr",
            "seed": self.seed,
            "gamma": self.gamma,
            "noise_std": self.noise_std,
            "horizon_H": self.horizon_H,
            "x0_std": self.x0_std,
            "x0_mean": self.x0_mean.tolist(),
            "generation": self.generation,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "Q": self.Q.tolist(),
            "R": self.R.tolist(),
            "K_star": self.K_star.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LqrProblem":
        arr = lambda k: np.asarray(doc[k], dtype=float)  # noqa: E731
        return cls(arr("A"), arr("B"), arr("Q"), arr("R"), float(doc["gamma"]), float(doc["noise_std"]),
                   int(doc["horizon_H"]), arr("K_star"), float(doc.get("x0_std", 1.0)), doc.get("seed"),
                   dict(doc.get("generation", {})), doc.get("x0_mean"))


def _check_gamma(gamma):
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"discount must lie in (0, 1], got {gamma!r}")


def lqr_make(n_x: int, n_u: int, gamma: float, noise_std: float, seed, horizon_H: int = 50,
             max_attempts: int = 100, *, x0_std: float = 1.0, x0_mean=None) -> LqrProblem:
    """Random instance with ``Q = R = I``.

    Entries of ``A`` and ``B`` are drawn from ``U[-0.5, 0.5]``; ``A`` is then
    rescaled to spectral radius 0.95.  Draws whose Riccati iteration fails
    are discarded and redrawn from the same stream.  ``x0_std = 0`` with a
    given ``x0_mean`` makes every episode start from the same state.
    """
    if n_x < 1 or n_u < 1:
        raise InvalidDimensionError("n_x and n_u must be >= 1")
    _check_gamma(gamma)
    rng = np.random.default_rng(seed)
    Q, R = np.eye(n_x), np.eye(n_u)
    generation = {"A": "uniform[-0.5,0.5], rescaled to spectral radius 0.95", "B": "uniform[-0.5,0.5]",
                  "Q": "identity", "R": "identity", "x0": "x0_mean + x0_std * N(0, I)"}
    for attempt in range(max_attempts):
        A = rng.uniform(-0.5, 0.5, (n_x, n_x))
        rho = max(abs(np.linalg.eigvals(A)))
        if rho > 0:
            A *= 0.95 / rho
        B = rng.uniform(-0.5, 0.5, (n_x, n_u))
        try:
            _, K = discounted_riccati(A, B, Q, R, gamma)
        except UnstabilizableError:
            continue
        generation["attempts"] = attempt + 1
        return LqrProblem(A, B, Q, R, float(gamma), float(noise_std), int(horizon_H), K, float(x0_std), seed,
                          generation, x0_mean)
    raise UnstabilizableError(f"no stabilizable instance in {max_attempts} draws")


def _closed_loop(problem: LqrProblem, K):
    K = np.asarray(K, dtype=float).reshape(problem.n_u, problem.n_x)
    return problem.A + problem.B @ K, problem.Q + K.T @ problem.R @ K


def is_stabilizing(problem: LqrProblem, K) -> bool:
    A_K, _ = _closed_loop(problem, K)
    return math.sqrt(problem.gamma) * max(abs(np.linalg.eigvals(A_K))) < 1.0


def lqr_true_value(problem: LqrProblem, K) -> float:
    """Exact discounted infinite-horizon expected cost ``V(K)``.

    Solves ``P = S + gamma A_K^T P A_K`` and returns
    ``tr(P E[x0 x0^T]) + gamma / (1 - gamma) noise_std^2 tr(P)``.  A gain
    that does not stabilize ``sqrt(gamma) A_K`` has infinite cost, as does
    any noisy undiscounted problem.
    """
    if not is_stabilizing(problem, K):
        return math.inf
    A_K, S = _closed_loop(problem, K)
    P = scipy.linalg.solve_discrete_lyapunov(math.sqrt(problem.gamma) * A_K.T, S)
    tr = float(np.trace(P))
    g = problem.gamma
    if problem.noise_std > 0 and g >= 1.0:
        return math.inf
    noise = g / (1.0 - g) * problem.noise_std**2 * tr if problem.noise_std > 0 else 0.0
    return float(np.sum(P * problem.initial_second_moment())) + noise


def lqr_horizon_value(problem: LqrProblem, K) -> float:
    """Exact expected cost of one ``H``-step episode (what a rollout averages to)."""
    A_K, S = _closed_loop(problem, K)
    cov = problem.initial_second_moment()
    noise = problem.noise_std**2 * np.eye(problem.n_x)
    total, disc = 0.0, 1.0
    for _ in range(problem.horizon_H):
        total += disc * float(np.trace(S @ cov))
        disc *= problem.gamma
        cov = A_K @ cov @ A_K.T + noise
    return total


def lqr_rollout_cost(problem: LqrProblem, K, rng) -> float:
    """Cost of one noisy episode under gain ``K``."""
    K = np.asarray(K, dtype=float)
    if K.size != problem.dim:
        raise InvalidDimensionError(f"gain must have {problem.n_u}x{problem.n_x} entries")
    xi = problem.sample(rng, (1,))
    return float(problem.costs(K.reshape(1, -1), xi)[0])


def lqr_initial_gain(problem: LqrProblem, rng, spread: float = 0.2, max_attempts: int = 1000) -> np.ndarray:
    """``K* + U[0, spread]`` entrywise, redrawn until stabilizing."""
    for _ in range(max_attempts):
        K0 = problem.K_star + rng.uniform(0.0, spread, problem.K_star.shape)
        if is_stabilizing(problem, K0):
            return K0
    raise UnstabilizableError("could not draw a stabilizing initial gain")
