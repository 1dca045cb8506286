"""Per-fire prediction grid: one row per fire, one cell per frame offset."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Sequence

import cv2
import numpy as np

CORRECT, INCORRECT, MISSING = "correct", "incorrect", "missing"
COLORS = {  # RGB
    CORRECT: (0, 170, 0),
    INCORRECT: (210, 0, 0),
    MISSING: (255, 255, 255),
}


def grid_cells(fires: Mapping[str, tuple[Sequence[int], Sequence[int], Sequence[int]]],
               offsets: Sequence[int] | None = None) -> tuple[list[str], list[int], list[list[str]]]:
    """Cell states per fire (sorted by id) over the sorted offset columns.

    ``fires`` maps fire id -> (offsets, labels, predictions).  Columns are
    ``offsets`` if given, else every offset seen in any fire.
    """
    ids = sorted(fires)
    if offsets is None:
        offsets = sorted({int(o) for f in ids for o in fires[f][0]})
    else:
        offsets = sorted(int(o) for o in offsets)
    rows = []
    for fire_id in ids:
        offs, labels, preds = fires[fire_id]
        state = {int(o): CORRECT if int(y) == int(p) else INCORRECT for o, y, p in zip(offs, labels, preds)}
        rows.append([state.get(o, MISSING) for o in offsets])
    return ids, list(offsets), rows


def render_fire_grid(fires: Mapping[str, tuple[Sequence[int], Sequence[int], Sequence[int]]],
                     out_png: str | Path, out_tsv: str | Path | None = None,
                     offsets: Sequence[int] | None = None, cell: int = 8, gap: int = 1) -> np.ndarray:
    """Write the grid as a PNG (green correct, red incorrect, white missing)
    and, optionally, a TSV with one line per cell.  Returns the RGB raster."""
    ids, columns, rows = grid_cells(fires, offsets)
    pitch = cell + gap
    height = max(len(ids) * pitch + gap, 1)
    width = max(len(columns) * pitch + gap, 1)
    img = np.full((height, width, 3), 128, dtype=np.uint8)  # grey grid lines
    for r, states in enumerate(rows):
        for c, state in enumerate(states):
            y, x = gap + r * pitch, gap + c * pitch
            img[y : y + cell, x : x + cell] = COLORS[state]
    if not cv2.imwrite(str(out_png), cv2.cvtColor(img, cv2.COLOR_RGB2BGR)):
        raise OSError(f"cannot write {out_png}")

    if out_tsv is not None:
        lookup = {}
        for fire_id in ids:
            offs, labels, preds = fires[fire_id]
            lookup[fire_id] = {int(o): (int(y), int(p)) for o, y, p in zip(offs, labels, preds)}
        with open(out_tsv, "w", newline="") as fh:
            writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
            writer.writerow(("fire_id", "offset_seconds", "state", "label", "prediction"))
            for fire_id, states in zip(ids, rows):
                for offset, state in zip(columns, states):
                    y, p = lookup[fire_id].get(offset, ("", ""))
                    writer.writerow((fire_id, offset, state, y, p))
    return img


def read_grid_table(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))
