"""Turn indexed fires into model-ready temporal groups of tiles."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch.utils.data import Dataset

from smokeynet.data import (
    DEFAULT_OFFSET_PATTERN,
    AnnotationSet,
    FireSequence,
    SplitManifest,
    SupervisionKind,
    index_archive,
    load_split_manifest,
    resolve_supervision,
)
from smokeynet.preprocess import (
    FIGLIB,
    AugmentationPolicy,
    BackgroundSubtractor,
    Geometry,
    TileGrid,
    augment_group,
    background_channel,
    load_image,
    normalize,
    rasterize_regions,
    resize_and_crop,
    tile,
    tile_labels,
    transform_annotation,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Example:
    """One labeled frame plus the frames it is paired with, oldest first."""

    fire_id: str
    offset_seconds: int
    image_label: int
    supervision: SupervisionKind
    group: tuple[Path, ...]  # num_frames paths, the labeled frame last
    before: Path  # frame preceding group[0], or group[0] itself
    annotation: AnnotationSet | None


def build_examples(fires: Sequence[FireSequence], num_frames: int) -> list[Example]:
    """Pair every frame with its ``num_frames - 1`` predecessors.

    Predecessors are the nearest earlier frames actually present, so gaps
    are bridged; the first frame of a fire repeats itself.
    """
    if num_frames < 1:
        raise ValueError("num_frames must be >= 1")
    out = []
    for fire in fires:
        paths = [f.image_path for f in fire.frames]
        for i, frame in enumerate(fire.frames):
            idx = [max(i - k, 0) for k in range(num_frames - 1, -1, -1)]
            out.append(Example(
                fire_id=fire.fire_id,
                offset_seconds=frame.offset_seconds,
                image_label=frame.image_label,
                supervision=resolve_supervision(frame),
                group=tuple(paths[j] for j in idx),
                before=paths[max(idx[0] - 1, 0)],
                annotation=frame.annotation,
            ))
    return out


class TileSequenceDataset(Dataset):
    """Items are dicts with ``x`` of shape ``(T, tiles, C, t, t)``, ``tile_labels``
    (``-1`` where the frame has no tile supervision), ``image_label``,
    ``has_tiles`` and ``index``.

    With an augmentation policy the transform for item ``i`` is seeded from
    ``(seed, epoch, i)``; call :meth:`set_epoch` between epochs.
    """

    def __init__(self, fires: Sequence[FireSequence], geometry: Geometry = FIGLIB, num_frames: int = 2,
                 background: bool = False, augment: AugmentationPolicy | None = None, seed: int = 0,
                 subtractor: BackgroundSubtractor | None = None, cache: bool = True):
        self.fires = list(fires)
        self.geometry = geometry
        self.grid = TileGrid.from_geometry(geometry)
        self.num_frames = num_frames
        self.background = background
        self.augment = augment
        self.seed = seed
        self.epoch = 0
        self.subtractor = subtractor
        self.examples = build_examples(self.fires, num_frames)
        self._cache: dict[Path, tuple[np.ndarray, tuple[int, int]]] | None = {} if cache else None

    def __len__(self) -> int:
        return len(self.examples)

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    @property
    def has_tile_supervision(self) -> bool:
        return any(e.supervision is not SupervisionKind.EXCLUDED for e in self.examples)

    def _frame(self, path: Path) -> tuple[np.ndarray, tuple[int, int]]:
        if self._cache is not None and path in self._cache:
            return self._cache[path]
        raw = load_image(path)
        item = (resize_and_crop(raw, self.geometry), raw.shape[:2])
        if self._cache is not None:
            self._cache[path] = item
        return item

    def mask(self, example: Example, source_shape: tuple[int, int]) -> np.ndarray:
        if example.supervision is SupervisionKind.EXCLUDED or example.annotation is None:
            return np.zeros(self.geometry.shape, dtype=np.uint8)
        ann = transform_annotation(example.annotation, source_shape, self.geometry)
        return rasterize_regions(ann, self.geometry.shape, example.supervision)

    def __getitem__(self, index: int) -> dict:
        ex = self.examples[index]
        frames = [self._frame(p)[0] for p in ex.group]
        source_shape = self._frame(ex.group[-1])[1]
        mask = self.mask(ex, source_shape)

        extra = []
        if self.background:
            # items are read in any order, so stateful subtractors restart per item
            if self.subtractor is not None:
                self.subtractor.reset()
            prev = [self._frame(ex.before)[0]] + frames[:-1]
            extra = [background_channel(p, f, self.subtractor)[..., None] for p, f in zip(prev, frames)]

        if self.augment is not None:
            seed = np.random.SeedSequence([self.seed, self.epoch, index])
            frames, mask, extra = augment_group(frames, mask, self.augment, seed, extra)

        stacked = []
        for j, f in enumerate(frames):
            img = normalize(f)
            if self.background:
                img = np.concatenate([img, extra[j]], axis=-1)
            stacked.append(tile(img, self.geometry)[1])
        x = torch.from_numpy(np.stack(stacked)).permute(0, 1, 4, 2, 3).contiguous()

        has_tiles = ex.supervision is not SupervisionKind.EXCLUDED
        if has_tiles:
            labels = torch.from_numpy(tile_labels(mask, self.grid, self.geometry.smoke_threshold).astype(np.int64))
        else:
            labels = torch.full((self.grid.rows * self.grid.cols,), -1, dtype=torch.int64)
        return {
            "x": x,
            "tile_labels": labels,
            "image_label": torch.tensor(ex.image_label, dtype=torch.int64),
            "has_tiles": torch.tensor(has_tiles),
            "index": torch.tensor(index),
        }


@dataclass
class PreparedData:
    root: Path
    geometry: Geometry
    fires: dict[str, FireSequence]
    manifest: SplitManifest

    def split(self, name: str) -> list[FireSequence]:
        return [self.fires[f] for f in sorted(self.manifest.split(name)) if f in self.fires]


def prepare_splits(root: str | Path, manifest_path: str | Path | None = None, geometry: Geometry = FIGLIB,
                   pattern: str = DEFAULT_OFFSET_PATTERN) -> PreparedData:
    """Index an archive and attach its split manifest (``<root>/splits.txt`` by default)."""
    root = Path(root)
    index = index_archive(root, pattern)
    manifest = load_split_manifest(manifest_path or root / "splits.txt", index)
    return PreparedData(root=root, geometry=geometry, fires={f.fire_id: f for f in index}, manifest=manifest)
