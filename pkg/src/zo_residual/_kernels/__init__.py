"""Hot-loop kernels with a compiled backend and a numpy fallback.

The compiled extension is preferred; set ``ZO_RESIDUAL_PURE_PYTHON=1`` to
force the fallback.  ``BACKEND`` names the active implementation.
"""

import importlib
import os

from . import _fallback


def _load_native():
    try:
        return importlib.import_module(__name__ + "._native")
    except ImportError:  # extension not built
        return None


_compiled = _load_native()
_impl = _fallback if (_compiled is None or os.environ.get("ZO_RESIDUAL_PURE_PYTHON")) else _compiled
BACKEND = "native" if _impl is _compiled else "python"

qp_chain = _impl.qp_chain
lqr_rollouts = _impl.lqr_rollouts
grid_episodes = _impl.grid_episodes
grid_trajectory = _fallback.grid_trajectory

CHAIN_KINDS = {"one_point": 0, "two_point_forward": 1, "two_point_central": 2, "residual": 3}


def backends():
    """Available backend modules keyed by name."""
    out = {"python": _fallback}
    if _compiled is not None:
        out["native"] = _compiled
    return out
