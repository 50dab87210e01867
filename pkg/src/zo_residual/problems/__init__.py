"""Benchmark objectives: random QP, discounted LQR, grid resource sharing."""

from .grid import GridAllocationProblem, grid_episode_return, grid_make
from .lqr import (
    LqrProblem,
    discounted_riccati,
    is_stabilizing,
    lqr_horizon_value,
    lqr_initial_gain,
    lqr_make,
    lqr_rollout_cost,
    lqr_true_value,
)
from .qp import QpProblem, make_qp, qp_eval
from . import testfuncs


def problem_from_dict(doc: dict):
    """Rebuild a problem instance from its JSON document."""
    kinds = {"qp": QpProblem, "lqr": LqrProblem, "grid": GridAllocationProblem}
    try:
        cls = kinds[doc["kind"]]
    except KeyError:
        raise ValueError(f"unknown problem kind {doc.get('kind')!r}") from None
    return cls.from_dict(doc)


__all__ = [
    "GridAllocationProblem",
    "LqrProblem",
    "QpProblem",
    "discounted_riccati",
    "grid_episode_return",
    "grid_make",
    "is_stabilizing",
    "lqr_horizon_value",
    "lqr_initial_gain",
    "lqr_make",
    "lqr_rollout_cost",
    "lqr_true_value",
    "make_qp",
    "problem_from_dict",
    "qp_eval",
    "testfuncs",
]
