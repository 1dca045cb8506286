"""Slow, obviously-correct reference implementations used by the tests."""

import math

import numpy as np


def on_segment(px, py, x0, y0, x1, y1) -> bool:
    cross = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
    if cross != 0:
        return False
    return min(x0, x1) <= px <= max(x0, x1) and min(y0, y1) <= py <= max(y0, y1)


def point_in_polygon(px, py, poly) -> bool:
    """Even-odd ray cast to the right; points on an edge count as inside."""
    n = len(poly)
    inside = False
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        if on_segment(px, py, x0, y0, x1, y1):
            return True
        if (y0 > py) != (y1 > py):
            xi = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
            if px < xi:
                inside = not inside
    return inside


def brute_force_mask(polys, shape) -> np.ndarray:
    """Union of polygons sampled at pixel centers ``(c + 0.5, r + 0.5)``."""
    h, w = shape
    mask = np.zeros(shape, dtype=np.uint8)
    for poly in polys:
        xs = [p[0] for p in poly]
        ys = [p[1] for p in poly]
        r0 = max(int(math.floor(min(ys))) - 1, 0)
        r1 = min(int(math.ceil(max(ys))) + 1, h)
        c0 = max(int(math.floor(min(xs))) - 1, 0)
        c1 = min(int(math.ceil(max(xs))) + 1, w)
        for r in range(r0, r1):
            for c in range(c0, c1):
                if point_in_polygon(c + 0.5, r + 0.5, poly):
                    mask[r, c] = 1
    return mask


def brute_force_tile_counts(mask, tile, stride, rows, cols) -> np.ndarray:
    out = []
    for r in range(rows):
        for c in range(cols):
            total = 0
            for y in range(r * stride, r * stride + tile):
                total += int(np.count_nonzero(mask[y, c * stride : c * stride + tile]))
            out.append(total)
    return np.array(out, dtype=np.int64)


def random_polygon(rng, size=64, max_vertices=12, step=0.5):
    """Random (possibly self-intersecting) polygon on a ``step`` lattice in
    ``[0, size]``; lattice coordinates keep the edge arithmetic exact."""
    n = int(rng.integers(3, max_vertices + 1))
    pts = rng.integers(0, int(size / step) + 1, size=(n, 2)) * step
    return [(float(x), float(y)) for x, y in pts]
