"""Backend selection for the raster kernels.

The compiled Cython extension is preferred; if it was not built the numpy
fallback is used.  ``use_backend`` switches explicitly (benchmarks, tests).
"""

from __future__ import annotations

import logging
from types import ModuleType

import numpy as np

from smokeynet import _fallback

logger = logging.getLogger(__name__)

try:
    from smokeynet import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_active: ModuleType = _compiled if _compiled is not None else _fallback


def compiled_available() -> bool:
    return _compiled is not None


def backend_name() -> str:
    return "compiled" if _active is _compiled else "python"


def use_backend(name: str) -> None:
    """Select ``"compiled"`` or ``"python"`` kernels for subsequent calls."""
    global _active
    if name == "python":
        _active = _fallback
    elif name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        _active = _compiled
    else:
        raise ValueError(f"unknown kernel backend {name!r}")


def get_backend(name: str) -> ModuleType:
    if name == "python":
        return _fallback
    if name == "compiled" and _compiled is not None:
        return _compiled
    raise RuntimeError(f"kernel backend {name!r} unavailable")


def fill_polygon(mask: np.ndarray, xs, ys) -> None:
    """Fill a closed polygon into a C-contiguous uint8 ``mask`` in place."""
    if mask.dtype != np.uint8 or not mask.flags.c_contiguous:
        raise TypeError("mask must be a C-contiguous uint8 array")
    _active.fill_polygon(
        mask,
        np.ascontiguousarray(xs, dtype=np.float64),
        np.ascontiguousarray(ys, dtype=np.float64),
    )


def tile_counts(mask: np.ndarray, tile: int, stride: int, rows: int, cols: int) -> np.ndarray:
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    return np.asarray(_active.tile_counts(mask, tile, stride, rows, cols), dtype=np.int64)


def abs_diff_threshold(prev: np.ndarray, cur: np.ndarray, threshold: float) -> np.ndarray:
    return np.asarray(
        _active.abs_diff_threshold(
            np.ascontiguousarray(prev, dtype=np.float32),
            np.ascontiguousarray(cur, dtype=np.float32),
            float(threshold),
        )
    )
