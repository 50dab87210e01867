"""Multi-agent resource sharing on a 4 x 4 grid.

Each agent holds stock ``m_i`` and faces a sinusoidal demand
``A_i sin(omega_i k + phi_i) + noise``.  At every step it splits its stock
between itself and its grid neighbours according to a softmax policy whose
logits are linear in squared-distance features of its observation
``(m_i, d_i)``.  Negative stock is penalised quadratically; the return is
the discounted sum of those penalties, so it is never positive.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import _kernels
from ..errors import InvalidDimensionError
from ..objective import Objective, ObjectiveMeta


def _grid_layout(rows, cols):
    """Action tables: each agent's neighbours (up, down, left, right) then itself."""
    owner, target, offset = [], [], [0]
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            nbrs = []
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols:
                    nbrs.append(rr * cols + cc)
            for j in nbrs + [i]:
                owner.append(i)
                target.append(j)
            offset.append(len(owner))
    as_long = lambda v: np.asarray(v, dtype=np.int_)  # noqa: E731
    return as_long(owner), as_long(target), as_long(offset)


@dataclass(frozen=True, eq=False)
class GridAllocationProblem:
    amp: np.ndarray
    omega: np.ndarray
    phase: np.ndarray
    m0: np.ndarray
    centers: np.ndarray
    noise_std: float = 0.1
    gamma: float = 0.75
    horizon_K: int = 30
    rows: int = 4
    cols: int = 4
    seed: Optional[int] = None

    def __post_init__(self):
        owner, target, offset = _grid_layout(self.rows, self.cols)
        object.__setattr__(self, "owner", owner)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "offset", offset)

    @property
    def n_agents(self) -> int:
        return self.rows * self.cols

    @property
    def n_actions(self) -> int:
        return int(self.offset[-1])

    @property
    def n_features(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.n_actions * self.n_features

    def neighbors(self, i) -> list:
        lo, hi = self.offset[i], self.offset[i + 1]
        return [int(j) for j in self.target[lo:hi] if j != i]

    def demand(self, k, noise=None) -> np.ndarray:
        d = self.amp * np.sin(self.omega * k + self.phase)
        return d if noise is None else d + self.noise_std * np.asarray(noise)

    def sample(self, rng, shape=()):
        return rng.standard_normal(tuple(shape) + (self.horizon_K + 1, self.n_agents))

    def returns(self, thetas, xi) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        n = thetas.shape[0]
        th = np.ascontiguousarray(thetas.reshape(n, self.n_actions, self.n_features))
        return _kernels.grid_episodes(
            th, np.ascontiguousarray(xi, dtype=float), self.owner, self.target, self.offset,
            np.ascontiguousarray(self.centers), self.amp, self.omega, self.phase, self.m0,
            float(self.noise_std), float(self.gamma), int(self.horizon_K),
        )

    def trajectory(self, theta, noise) -> dict:
        """Full history of one episode (stock, demand, action probabilities)."""
        th = np.asarray(theta, dtype=float).reshape(self.n_actions, self.n_features)
        return _kernels.grid_trajectory(
            th, np.asarray(noise, dtype=float), self.owner, self.target, self.offset, self.centers,
            self.amp, self.omega, self.phase, self.m0, self.noise_std, self.gamma, self.horizon_K,
        )

    def objective(self) -> Objective:
        """Cost objective ``-J(theta)`` (minimised by the optimizer)."""
        meta = ObjectiveMeta(dim=self.dim, noise_sigma=None)
        return Objective(
            lambda th, xi: -self.returns(th, xi),
            meta,
            sampler=self.sample,
            sample_shape=(self.horizon_K + 1, self.n_agents),
            controllable=False,
            vectorized=True,
            name="grid_allocation",
        )

    def expected_return(self, theta, n_episodes: int = 64, seed: int = 12345) -> float:
        """Average return over a fixed set of noise draws (common random numbers)."""
        xi = self.sample(np.random.default_rng(seed), (n_episodes,))
        th = np.broadcast_to(np.asarray(theta, dtype=float), (n_episodes, self.dim))
        return float(np.mean(self.returns(th, xi)))

    def value_gap(self, theta) -> float:
        """Negated expected return, the quantity the optimizer drives down."""
        return -self.expected_return(theta)

    def to_dict(self) -> dict:
        return {
            "kind": "grid",
            "seed": self.seed,
            "rows": self.rows,
            "cols": self.cols,
            "noise_std": self.noise_std,
            "gamma": self.gamma,
            "horizon_K": self.horizon_K,
            "generation": {"amp": "U[0,1]", "omega": "U[0.1,0.5]", "phase": "U[0,2pi]", "m0": 5.0,
                           "centers": "3x3 lattice on [-5,10]x[-1,2]", "self_action": True},
            "amp": self.amp.tolist(),
            "omega": self.omega.tolist(),
            "phase": self.phase.tolist(),
            "m0": self.m0.tolist(),
            "centers": self.centers.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GridAllocationProblem":
        arr = lambda k: np.asarray(doc[k], dtype=float)  # noqa: E731
        return cls(arr("amp"), arr("omega"), arr("phase"), arr("m0"), arr("centers"), float(doc["noise_std"]),
                   float(doc["gamma"]), int(doc["horizon_K"]), int(doc["rows"]), int(doc["cols"]), doc.get("seed"))


def grid_make(seed, *, noise_std=0.1, gamma=0.75, horizon_K=30, initial_stock=5.0) -> GridAllocationProblem:
    rng = np.random.default_rng(seed)
    n = 16
    amp = rng.uniform(0.0, 1.0, n)
    omega = rng.uniform(0.1, 0.5, n)
    phase = rng.uniform(0.0, 2 * np.pi, n)
    ms, ds = np.linspace(-5.0, 10.0, 3), np.linspace(-1.0, 2.0, 3)
    centers = np.array([(m, d) for m in ms for d in ds])
    return GridAllocationProblem(amp, omega, phase, np.full(n, float(initial_stock)), centers,
                                 float(noise_std), float(gamma), int(horizon_K), seed=seed)


def grid_episode_return(problem: GridAllocationProblem, theta, rng) -> float:
    """Return ``J(theta)`` of one episode with fresh demand noise."""
    theta = np.asarray(theta, dtype=float)
    if theta.size != problem.dim:
        raise InvalidDimensionError(f"theta must have {problem.dim} entries, got {theta.size}")
    return float(problem.returns(theta.reshape(1, -1), problem.sample(rng, (1,)))[0])
