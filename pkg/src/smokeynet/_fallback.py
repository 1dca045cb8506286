"""Numpy implementations of the raster kernels.

Same contracts as the compiled ``_kernels`` module; used when the extension
is not built.
"""

import numpy as np


def fill_polygon(mask: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> None:
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    n = xs.shape[0]
    if n < 3 or ys.shape[0] != n:
        return
    height, width = mask.shape
    r0 = max(int(np.ceil(ys.min() - 0.5)), 0)
    r1 = min(int(np.floor(ys.max() - 0.5)), height - 1)
    if r0 > r1:
        return

    x0, y0 = xs, ys
    x1, y1 = np.roll(xs, -1), np.roll(ys, -1)
    rows = np.arange(r0, r1 + 1)
    y = (rows + 0.5)[:, None]
    dy = y1 - y0
    safe_dy = np.where(dy == 0, 1.0, dy)
    with np.errstate(invalid="ignore"):
        x = x0 + (y - y0) * (x1 - x0) / safe_dy

    # even-odd interior: a pixel is inside when an odd number of crossings
    # lie at or left of its center
    half_open = ((y0 <= y) & (y < y1)) | ((y1 <= y) & (y < y0))
    rr, ee = np.nonzero(half_open)
    start = np.clip(np.ceil(x[rr, ee] - 0.5), 0, width).astype(np.int64)
    toggles = np.zeros((rows.size, width + 1), dtype=np.int64)
    np.add.at(toggles, (rr, start), 1)
    inside = (np.cumsum(toggles[:, :width], axis=1) & 1).astype(bool)

    # centers lying exactly on a sloped or vertical edge
    closed = (dy != 0) & (((y0 <= y) & (y <= y1)) | ((y1 <= y) & (y <= y0)))
    xb = np.where(y == y1, x1, np.where(y == y0, x0, x))
    cb = xb - 0.5
    on_edge = closed & (cb == np.floor(cb)) & (cb >= 0) & (cb < width)
    rr, ee = np.nonzero(on_edge)
    inside[rr, cb[rr, ee].astype(np.int64)] = True

    # horizontal edges lying on a row of centers
    for i in np.nonzero(dy == 0)[0]:
        yc = y0[i] - 0.5
        if yc != np.floor(yc) or not r0 <= yc <= r1:
            continue
        lo, hi = sorted((x0[i], x1[i]))
        c0 = max(int(np.ceil(lo - 0.5)), 0)
        c1 = min(int(np.floor(hi - 0.5)), width - 1)
        if c0 <= c1:
            inside[int(yc) - r0, c0 : c1 + 1] = True

    mask[r0 : r1 + 1] |= inside.astype(mask.dtype)


def tile_counts(mask: np.ndarray, tile: int, stride: int, rows: int, cols: int) -> np.ndarray:
    height, width = mask.shape
    if (rows - 1) * stride + tile > height or (cols - 1) * stride + tile > width:
        raise ValueError("tile grid exceeds mask bounds")
    integral = np.zeros((height + 1, width + 1), dtype=np.int64)
    integral[1:, 1:] = np.cumsum(np.cumsum(mask != 0, axis=0, dtype=np.int64), axis=1)
    y0 = np.arange(rows) * stride
    x0 = np.arange(cols) * stride
    ya, yb = y0[:, None], (y0 + tile)[:, None]
    xa, xb = x0[None, :], (x0 + tile)[None, :]
    counts = integral[yb, xb] - integral[ya, xb] - integral[yb, xa] + integral[ya, xa]
    return counts.reshape(-1)


def abs_diff_threshold(prev: np.ndarray, cur: np.ndarray, threshold: float) -> np.ndarray:
    if prev.shape != cur.shape:
        raise ValueError("frame shapes differ")
    diff = np.abs(cur.astype(np.float32) - prev.astype(np.float32))
    return (diff > np.float32(threshold)).astype(np.float32)
