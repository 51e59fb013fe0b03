"""Numeric kernels with a compiled fast path.

The heavy inner loops (ray casting, point-to-surface distances, voxel
rasterization) exist twice: a Cython extension (``_core``) and a pure numpy
fallback (``_pure``) with identical semantics and bit-identical outputs.
The extension is preferred when importable; set ``AMTAMPER_KERNELS=python``
or ``=compiled`` to force a backend.
"""

import os

import numpy as np

from . import _pure

try:
    from . import _core
except ImportError:
    _core = None

_requested = os.environ.get("AMTAMPER_KERNELS", "").strip().lower()
if _requested in {"python", "pure"}:
    _impl = _pure
elif _requested in {"compiled", "cython", "c"}:
    if _core is None:
        raise ImportError(
            "AMTAMPER_KERNELS=compiled, but amtamper._kernels._core is not built"
        )
    _impl = _core
elif _requested:
    raise ImportError(f"unknown AMTAMPER_KERNELS value: {_requested!r}")
else:
    _impl = _core if _core is not None else _pure

BACKEND = "compiled" if _impl is _core else "python"


def available_backends():
    """Importable backend modules keyed by name."""
    backends = {"python": _pure}
    if _core is not None:
        backends["compiled"] = _core
    return backends


def _f64(a, cols):
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != cols:
        raise ValueError(f"expected an (n, {cols}) array, got shape {arr.shape}")
    return arr


def _i32(a):
    arr = np.ascontiguousarray(a, dtype=np.int32)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) index array, got shape {arr.shape}")
    return arr


def ray_crossings(vertices, facets, origins, direction, impl=None):
    """Strict crossing counts plus graze flags; see ``_pure.ray_crossings``."""
    d = np.ascontiguousarray(direction, dtype=np.float64)
    if d.shape != (3,):
        raise ValueError("direction must be a 3-vector")
    impl = impl or _impl
    return impl.ray_crossings(_f64(vertices, 3), _i32(facets), _f64(origins, 3), d)


def surface_distances(vertices, facets, points, impl=None):
    """Distance from each point to the nearest point on the facet set."""
    impl = impl or _impl
    return impl.surface_distances(_f64(vertices, 3), _i32(facets), _f64(points, 3))


def voxelize_segments(starts, ends, origin, resolution, dims, radius,
                      half_height, bits=None, impl=None):
    """Rasterize segments into a little-endian packed occupancy bitset."""
    starts = _f64(starts, 3)
    ends = _f64(ends, 3)
    if starts.shape != ends.shape:
        raise ValueError("starts and ends must have matching shapes")
    origin = np.ascontiguousarray(origin, dtype=np.float64)
    dims = np.ascontiguousarray(dims, dtype=np.int64)
    if origin.shape != (3,) or dims.shape != (3,):
        raise ValueError("origin and dims must be 3-vectors")
    n_cells = int(dims[0]) * int(dims[1]) * int(dims[2])
    if bits is None:
        bits = np.zeros((n_cells + 7) // 8, dtype=np.uint8)
    impl = impl or _impl
    impl.voxelize_segments(starts, ends, origin, float(resolution), dims,
                           float(radius), float(half_height), bits)
    return bits
