"""Queryable objectives with query accounting.

An :class:`Objective` wraps a value function ``f(x)`` (deterministic) or a
sampled value ``F(x, xi)`` (stochastic).  Every evaluation goes through
:meth:`Objective.__call__`, which counts one query per evaluated point.

Points may carry leading batch axes: ``x`` of shape ``(..., d)`` evaluates
``prod(x.shape[:-1])`` independent points and counts that many queries.
Samples follow the same leading shape, followed by the objective's
``sample_shape``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidDimensionError


def _check_constant(name, value):
    if value is None:
        return
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be a finite nonnegative number, got {value!r}")


@dataclass(frozen=True)
class ObjectiveMeta:
    """Dimension and declared regularity constants of an objective.

    ``None`` marks a constant as unknown.  A zero Lipschitz constant is
    accepted and describes a constant function.
    """

    dim: int
    lipschitz_L0: Optional[float] = None
    grad_lipschitz_L1: Optional[float] = None
    noise_sigma: float = 0.0
    grad_noise_sigma: float = 0.0
    convex: bool = False
    smooth: bool = False

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidDimensionError(f"dim must be a positive integer, got {self.dim!r}")
        _check_constant("lipschitz_L0", self.lipschitz_L0)
        _check_constant("grad_lipschitz_L1", self.grad_lipschitz_L1)
        _check_constant("noise_sigma", self.noise_sigma)
        _check_constant("grad_noise_sigma", self.grad_noise_sigma)

    def to_dict(self):
        return {
            "dim": self.dim,
            "lipschitz_L0": self.lipschitz_L0,
            "grad_lipschitz_L1": self.grad_lipschitz_L1,
            "noise_sigma": self.noise_sigma,
            "grad_noise_sigma": self.grad_noise_sigma,
            "convex": self.convex,
            "smooth": self.smooth,
        }


Sampler = Callable[[np.random.Generator, tuple], np.ndarray]


class Objective:
    """A zeroth-order oracle with a global query counter.

    Parameters
    ----------
    fn : callable
        ``fn(x)`` for deterministic objectives, ``fn(x, xi)`` for stochastic
        ones.  With ``vectorized=True`` it receives ``x`` of shape ``(n, d)``
        (and ``xi`` of shape ``(n, *sample_shape)``) and returns ``n`` values.
    meta : ObjectiveMeta
    sampler : callable, optional
        ``sampler(rng, shape)`` returns samples of shape
        ``shape + sample_shape``.  Its presence makes the objective stochastic.
    controllable : bool
        Whether one sample may be reused at two different points.
    gradient : callable, optional
        Analytic gradient of ``E[F(x, xi)]``; verification only, never used
        on the optimization path.
    """

    def __init__(
        self,
        fn,
        meta: ObjectiveMeta,
        *,
        sampler: Optional[Sampler] = None,
        sample_shape: tuple = (),
        controllable: bool = True,
        vectorized: bool = False,
        gradient=None,
        name: str = "objective",
    ):
        self.fn = fn
        self.meta = meta
        self.sampler = sampler
        self.sample_shape = tuple(sample_shape)
        self.controllable = controllable
        self.vectorized = vectorized
        self.name = name
        self._gradient = gradient
        self._queries = 0
        self._lock = threading.Lock()
        # Set by problems that ship a fused compiled SGD chain.
        self.chain = None

    @property
    def dim(self) -> int:
        return self.meta.dim

    @property
    def stochastic(self) -> bool:
        return self.sampler is not None

    @property
    def queries(self) -> int:
        return self._queries

    def reset_queries(self):
        with self._lock:
            self._queries = 0

    def add_queries(self, n: int):
        with self._lock:
            self._queries += int(n)

    def draw_sample(self, rng: np.random.Generator, shape: tuple = ()):
        """Draw fresh samples for points with leading shape ``shape``.

        Deterministic objectives return ``None`` and leave ``rng`` untouched.
        """
        if self.sampler is None:
            return None
        return self.sampler(rng, tuple(shape))

    def __call__(self, x, xi=None):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            raise InvalidDimensionError(
                f"{self.name}: expected points of dimension {self.dim}, got shape {x.shape}"
            )
        lead = x.shape[:-1]
        n = math.prod(lead)
        self.add_queries(n)
        if self.stochastic and xi is None:
            raise ValueError(f"{self.name} is stochastic; a sample is required")
        flat = x.reshape(n, self.dim)
        if xi is not None and self.stochastic:
            xi = np.asarray(xi, dtype=float).reshape((n,) + self.sample_shape)
        if self.vectorized:
            vals = self.fn(flat, xi) if self.stochastic else self.fn(flat)
            vals = np.asarray(vals, dtype=float).reshape(n)
        elif self.stochastic:
            vals = np.fromiter((self.fn(flat[i], xi[i]) for i in range(n)), float, n)
        else:
            vals = np.fromiter((self.fn(flat[i]) for i in range(n)), float, n)
        if lead == ():
            return float(vals[0])
        return vals.reshape(lead)

    def gradient(self, x):
        if self._gradient is None:
            raise NotImplementedError(f"{self.name} has no verification gradient")
        return self._gradient(np.asarray(x, dtype=float))

    @property
    def has_gradient(self) -> bool:
        return self._gradient is not None

    def __repr__(self):
        kind = "stochastic" if self.stochastic else "deterministic"
        return f"Objective({self.name!r}, dim={self.dim}, {kind}, queries={self.queries})"


def additive_noise(base: Objective, sigma: float, *, controllable: bool = True) -> Objective:
    """Stochastic twin ``F(x, xi) = f(x) + xi`` with ``xi ~ N(0, sigma^2)``.

    The wrapped function is evaluated without touching ``base``'s counter.
    """
    if base.stochastic:
        raise ValueError("base objective must be deterministic")
    sigma = float(sigma)
    f = base.fn

    if base.vectorized:
        def fn(x, xi):
            return np.asarray(f(x), dtype=float) + xi
    else:
        def fn(x, xi):
            return f(x) + float(xi)

    def sampler(rng, shape):
        return sigma * rng.standard_normal(shape)

    meta = ObjectiveMeta(
        dim=base.meta.dim,
        lipschitz_L0=base.meta.lipschitz_L0,
        grad_lipschitz_L1=base.meta.grad_lipschitz_L1,
        noise_sigma=sigma,
        grad_noise_sigma=0.0,
        convex=base.meta.convex,
        smooth=base.meta.smooth,
    )
    return Objective(
        fn,
        meta,
        sampler=sampler,
        controllable=controllable,
        vectorized=base.vectorized,
        gradient=base._gradient,
        name=f"{base.name}+noise({sigma:g})",
    )
