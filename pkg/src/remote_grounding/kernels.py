"""Backend selection for the graph/geometry kernels.

The compiled extension is used when it was built; otherwise the pure-Python
twins are used. Set ``REMOTE_GROUNDING_PURE=1`` to force the fallback.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("REMOTE_GROUNDING_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels


def get_backend(name=None):
    """Return the kernel module for ``name`` ("cython" / "python"), or the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")


def bfs_hops(indptr, indices, sources, max_depth=-1):
    """Hop distance from the nearest of ``sources``; -1 where unreached (or beyond ``max_depth``)."""
    return _impl.bfs_hops(indptr, indices, [int(s) for s in sources], int(max_depth))


def dijkstra(indptr, indices, weights, source):
    """Single-source shortest paths. Returns ``(dist, pred)``; pred is -1 for the source/unreached."""
    return _impl.dijkstra(indptr, indices, weights, int(source))


def box_iou(lo, hi, tlo, thi):
    """Axis-aligned 3D IoU of each box ``(lo[i], hi[i])`` against one target box."""
    lo = np.ascontiguousarray(lo, dtype=np.float64).reshape(-1, 3)
    hi = np.ascontiguousarray(hi, dtype=np.float64).reshape(-1, 3)
    tlo = np.ascontiguousarray(tlo, dtype=np.float64)
    thi = np.ascontiguousarray(thi, dtype=np.float64)
    return _impl.box_iou(lo, hi, tlo, thi)
