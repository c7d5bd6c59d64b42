"""Backend selection for the planning hot loops.

The compiled extension is used when it imports; set ``IPPAL_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("IPPAL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

summed_area = _impl.summed_area
rect_sums = _impl.rect_sums
path_objective = _impl.path_objective
mcts_rollout = _impl.mcts_rollout
flight_time = _pykernels.flight_time

__all__ = ["BACKEND", "summed_area", "rect_sums", "path_objective", "mcts_rollout", "flight_time"]
