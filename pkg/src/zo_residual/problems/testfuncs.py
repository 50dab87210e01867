"""Small analytic objectives with known regularity constants."""

import math

import numpy as np

from ..objective import Objective, ObjectiveMeta


def quadratic(d, center=None):
    """``0.5 ||x - center||^2``; smoothing leaves its gradient unchanged."""
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)

    def fn(x):
        z = x - c
        return 0.5 * np.einsum("ij,ij->i", z, z)

    meta = ObjectiveMeta(dim=d, grad_lipschitz_L1=1.0, convex=True, smooth=True)
    return Objective(fn, meta, vectorized=True, gradient=lambda x: x - c, name=f"quadratic(d={d})")


def linear(a, b=0.0):
    a = np.asarray(a, dtype=float)
    meta = ObjectiveMeta(
        dim=a.size, lipschitz_L0=float(np.linalg.norm(a)), grad_lipschitz_L1=0.0, convex=True, smooth=True
    )
    return Objective(
        lambda x: x @ a + b, meta, vectorized=True, gradient=lambda x: np.broadcast_to(a, np.shape(x)), name="linear"
    )


def constant(value, d):
    meta = ObjectiveMeta(dim=d, lipschitz_L0=0.0, grad_lipschitz_L1=0.0, convex=True, smooth=True)
    return Objective(
        lambda x: np.full(x.shape[0], float(value)),
        meta,
        vectorized=True,
        gradient=np.zeros_like,
        name=f"constant({value:g})",
    )


def weighted_l1(w):
    """``sum_i w_i |x_i|``: convex, nonsmooth, Lipschitz with ``L0 = ||w||``."""
    w = np.abs(np.asarray(w, dtype=float))
    meta = ObjectiveMeta(dim=w.size, lipschitz_L0=float(np.linalg.norm(w)), convex=True)
    return Objective(lambda x: np.abs(x) @ w, meta, vectorized=True, name="weighted_l1")


def pseudo_huber(d, L0=1.0):
    """``L0 (sqrt(1 + ||x||^2) - 1)``; ``L0``-Lipschitz with ``L1 = L0``."""

    def fn(x):
        return L0 * (np.sqrt(1.0 + np.einsum("ij,ij->i", x, x)) - 1.0)

    def grad(x):
        return L0 * x / np.sqrt(1.0 + np.sum(x * x, axis=-1, keepdims=True))

    meta = ObjectiveMeta(dim=d, lipschitz_L0=float(L0), grad_lipschitz_L1=float(L0), convex=True, smooth=True)
    return Objective(fn, meta, vectorized=True, gradient=grad, name=f"pseudo_huber(d={d})")


def log_bowl(d):
    """``sum_i log(1 + x_i^2)``: smooth, nonconvex, minimum 0 at the origin.

    Each partial derivative is bounded by 1 (so ``L0 = sqrt(d)``) and the
    curvature lies in ``[-1/4, 2]`` (so ``L1 = 2``).
    """

    def fn(x):
        return np.sum(np.log1p(x * x), axis=-1)

    def grad(x):
        return 2.0 * x / (1.0 + x * x)

    meta = ObjectiveMeta(dim=d, lipschitz_L0=math.sqrt(d), grad_lipschitz_L1=2.0, smooth=True)
    return Objective(fn, meta, vectorized=True, gradient=grad, name=f"log_bowl(d={d})")
