"""Synthetic FIgLib-layout corpus with known ground truth.

Each fire is a fixed camera view (sky above a horizon row, textured ground
below) with drifting cloud-like distractors in the sky band.  From offset 0
a translucent plume grows out of an ignition point below the horizon.  The
plume is a star-shaped polygon scaled about the ignition point, so every
frame's plume contains the previous one and its pixel count never shrinks.
The polygon is written verbatim as the frame's contour annotation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from smokeynet import _fallback
from smokeynet.data import (
    AnnotationSet,
    SupervisionKind,
    frame_name,
    label_from_offset,
    write_annotations,
    write_split_manifest,
    ANNOTATION_FILE,
)
from smokeynet.preprocess import FIGLIB, Geometry, save_image, transform_annotation

GROUND_TRUTH_FILE = "ground_truth.tsv"
MANIFEST_FILE = "splits.txt"


@dataclass(frozen=True)
class SyntheticSpec:
    num_fires: int = 4
    frames_per_fire: int = 81
    spacing_seconds: int = 60
    geometry: Geometry = FIGLIB
    plume: bool = True
    horizon_fraction: float = 0.1  # of visible height below the crop line
    num_distractors: int = 3
    box_only_fraction: float = 0.0
    unannotated_fraction: float = 0.0
    missing_frames: int = 0  # dropped interior frames per fire
    splits: tuple[int, int, int, int] | None = None  # train, val, test, omit
    seed: int = 0

    @property
    def source_shape(self) -> tuple[int, int]:
        return self.geometry.source_sizes[0]

    def offsets(self) -> list[int]:
        before = self.frames_per_fire // 2
        return [(i - before) * self.spacing_seconds for i in range(self.frames_per_fire)]

    def split_counts(self) -> tuple[int, int, int, int]:
        if self.splits is not None:
            if sum(self.splits) != self.num_fires:
                raise ValueError("split counts must sum to num_fires")
            return self.splits
        train = self.num_fires // 2
        val = (self.num_fires - train) // 2
        return train, val, self.num_fires - train - val, 0


@dataclass
class GroundTruthFrame:
    fire_id: str
    frame_id: str
    offset_seconds: int
    image_label: int
    supervision: SupervisionKind
    tile_labels: np.ndarray | None


@dataclass
class SyntheticCorpus:
    root: Path
    manifest: Path
    fires: list[str]
    frames: list[GroundTruthFrame] = field(default_factory=list)

    def by_frame(self) -> dict[tuple[str, str], GroundTruthFrame]:
        return {(f.fire_id, f.frame_id): f for f in self.frames}


def fire_id_for(index: int) -> str:
    month, day = 6 + index % 6, 1 + (7 * index) % 28
    return f"2020{month:02d}{day:02d}_SynthFire{index:02d}_syn{index % 5}-{'nesw'[index % 4]}-mobo-c"


def _smooth_noise(rng: np.random.Generator, shape: tuple[int, int], cells: int) -> np.ndarray:
    coarse = rng.random((cells, max(2, int(cells * shape[1] / shape[0])))).astype(np.float32)
    return cv2.resize(coarse, (shape[1], shape[0]), interpolation=cv2.INTER_CUBIC)


def _background(rng: np.random.Generator, shape: tuple[int, int], horizon: int) -> np.ndarray:
    h, w = shape
    img = np.empty((h, w, 3), dtype=np.float32)
    rows = np.arange(h, dtype=np.float32)[:, None]
    sky_top = np.array([0.35, 0.55, 0.85], dtype=np.float32) + rng.uniform(-0.05, 0.05, 3).astype(np.float32)
    sky = sky_top + (rows / max(horizon, 1))[..., None] * np.float32(0.15)
    img[:] = sky
    ground_color = np.array([0.35, 0.30, 0.20], dtype=np.float32) + rng.uniform(-0.05, 0.05, 3).astype(np.float32)
    texture = 0.6 * _smooth_noise(rng, shape, 12) + 0.4 * _smooth_noise(rng, shape, 40)
    ground = ground_color * (0.6 + 0.6 * texture[..., None])
    img[horizon:] = ground[horizon:]
    return np.clip(img, 0, 1)


def _blob(shape: tuple[int, int], cx: float, cy: float, rx: float, ry: float) -> np.ndarray:
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float32)
    d = ((xs + 0.5 - cx) / rx) ** 2 + ((ys + 0.5 - cy) / ry) ** 2
    return np.exp(-2.0 * d).astype(np.float32)


@dataclass
class _Fire:
    fire_id: str
    background: np.ndarray
    horizon: int
    base: tuple[float, float]
    radii: np.ndarray  # unit-scale radial profile
    angles: np.ndarray
    r0: float
    r1: float
    clouds: list[tuple[float, float, float, float, float]]  # cx, cy, rx, ry, drift px/min
    smoke_color: np.ndarray


def _plan_fire(spec: SyntheticSpec, index: int, rng: np.random.Generator) -> _Fire:
    h, w = spec.source_shape
    g = spec.geometry
    scale_y = h / g.resize_height
    crop_raw = g.crop_top * scale_y
    visible = h - crop_raw
    horizon = int(round(crop_raw + spec.horizon_fraction * visible))

    k = 14
    angles = np.linspace(0, 2 * math.pi, k, endpoint=False)
    wobble = 1.0 + 0.25 * rng.uniform(-1, 1, k)
    upward = 1.0 + 0.9 * np.clip(-np.sin(angles), 0, None)  # image y points down
    radii = wobble * upward
    r0 = 0.018 * w
    r1 = 0.075 * w
    extent_x = r1 * radii.max()
    extent_down = r1 * (wobble.max())
    bx = float(rng.uniform(extent_x + 2, w - extent_x - 2))
    lo = max(horizon + 0.35 * (h - horizon), r1 * radii.max() + 2)
    by = float(rng.uniform(lo, h - extent_down - 2))

    clouds = []
    for _ in range(spec.num_distractors):
        clouds.append((
            float(rng.uniform(0, w)),
            float(rng.uniform(crop_raw - 0.05 * visible, horizon)),
            float(rng.uniform(0.04, 0.09) * w),
            float(rng.uniform(0.015, 0.03) * h),
            float(rng.uniform(-0.004, 0.004) * w),
        ))
    return _Fire(
        fire_id=fire_id_for(index),
        background=_background(rng, (h, w), horizon),
        horizon=horizon,
        base=(bx, by),
        radii=radii,
        angles=angles,
        r0=r0,
        r1=r1,
        clouds=clouds,
        smoke_color=np.array([0.82, 0.82, 0.86], dtype=np.float32) + rng.uniform(-0.04, 0.04, 3).astype(np.float32),
    )


def plume_polygon(fire: _Fire, minutes: float, max_minutes: float) -> list[tuple[float, float]]:
    frac = min(max(minutes / max_minutes, 0.0), 1.0) if max_minutes > 0 else 1.0
    scale = fire.r0 + (fire.r1 - fire.r0) * frac
    bx, by = fire.base
    return [
        (round(bx + scale * r * math.cos(a), 3), round(by + scale * r * math.sin(a), 3))
        for r, a in zip(fire.radii, fire.angles)
    ]


def _render(spec: SyntheticSpec, fire: _Fire, offset: int, rng: np.random.Generator,
            polygon: list[tuple[float, float]] | None) -> np.ndarray:
    h, w = spec.source_shape
    img = fire.background.copy()
    minutes = offset / 60.0
    for cx, cy, rx, ry, drift in fire.clouds:
        alpha = 0.7 * _blob((h, w), (cx + drift * minutes) % w, cy, rx, ry)[..., None]
        img = img * (1 - alpha) + alpha * np.float32(0.95)
    if polygon is not None:
        mask = np.zeros((h, w), dtype=np.uint8)
        _fallback.fill_polygon(mask, np.array([p[0] for p in polygon]), np.array([p[1] for p in polygon]))
        soft = cv2.GaussianBlur(mask.astype(np.float32), (3, 3), 0)
        alpha = (0.55 * np.maximum(soft, mask)).astype(np.float32)[..., None]
        img = img * (1 - alpha) + alpha * fire.smoke_color
    img = img + rng.normal(0, 0.01, img.shape).astype(np.float32)
    return np.clip(img, 0, 1)


def _ground_truth_labels(spec: SyntheticSpec, ann: AnnotationSet, kind: SupervisionKind) -> np.ndarray:
    """Tile labels computed directly: transform, rasterize (numpy kernel), window sums."""
    g = spec.geometry
    crop = transform_annotation(ann, spec.source_shape, g)
    mask = np.zeros(g.shape, dtype=np.uint8)
    if kind is SupervisionKind.BOX_FILL:
        polys = [[(x0, y0), (x1, y0), (x1, y1), (x0, y1)] for x0, y0, x1, y1 in crop.boxes]
    else:
        polys = [list(p) for p in crop.contours]
    for poly in polys:
        _fallback.fill_polygon(mask, np.array([p[0] for p in poly]), np.array([p[1] for p in poly]))
    labels = []
    for r in range(g.rows):
        for c in range(g.cols):
            y0, x0 = r * g.stride, c * g.stride
            count = int(mask[y0 : y0 + g.tile_size, x0 : x0 + g.tile_size].sum())
            labels.append(1 if count > g.smoke_threshold else 0)
    return np.array(labels, dtype=np.uint8)


def generate_synthetic_corpus(spec: SyntheticSpec, out: str | Path) -> SyntheticCorpus:
    """Write the archive, annotation sidecars, split manifest and ground truth."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    root_seq = np.random.SeedSequence(spec.seed)
    fire_seqs = root_seq.spawn(spec.num_fires)

    offsets = spec.offsets()
    if not spec.plume:
        offsets = [o for o in offsets if o < 0]
    max_minutes = max(max(offsets) / 60.0, 1.0) if offsets else 1.0
    corpus = SyntheticCorpus(root=out, manifest=out / MANIFEST_FILE, fires=[])

    for index, seq in enumerate(fire_seqs):
        plan_rng, frame_rng, ann_rng, drop_rng = (np.random.default_rng(s) for s in seq.spawn(4))
        fire = _plan_fire(spec, index, plan_rng)
        corpus.fires.append(fire.fire_id)
        fire_dir = out / fire.fire_id
        fire_dir.mkdir(exist_ok=True)

        keep = list(offsets)
        if spec.missing_frames and len(keep) > 2:
            interior = keep[1:-1]
            drop = set(drop_rng.choice(interior, size=min(spec.missing_frames, len(interior)), replace=False).tolist())
            keep = [o for o in keep if o not in drop]

        base_ts = 1_560_000_000 + index * 86_400
        annotations: dict[str, AnnotationSet] = {}
        for offset in keep:
            label = label_from_offset(offset)
            polygon = plume_polygon(fire, offset / 60.0, max_minutes) if (spec.plume and label) else None
            image = _render(spec, fire, offset, frame_rng, polygon)
            name = frame_name(base_ts + offset, offset, ".png")
            save_image(fire_dir / name, image)
            frame_id = Path(name).stem

            kind = SupervisionKind.CONTOUR
            ann = AnnotationSet()
            if polygon is not None:
                u = ann_rng.random()
                if u < spec.unannotated_fraction:
                    kind = SupervisionKind.EXCLUDED
                elif u < spec.unannotated_fraction + spec.box_only_fraction:
                    xs = [p[0] for p in polygon]
                    ys = [p[1] for p in polygon]
                    ann = AnnotationSet(boxes=((min(xs), min(ys), max(xs), max(ys)),))
                    kind = SupervisionKind.BOX_FILL
                else:
                    ann = AnnotationSet(contours=(tuple(polygon),))
                if kind is not SupervisionKind.EXCLUDED:
                    annotations[frame_id] = ann
            tiles = None if kind is SupervisionKind.EXCLUDED else _ground_truth_labels(spec, ann, kind)
            corpus.frames.append(GroundTruthFrame(fire.fire_id, frame_id, offset, label, kind, tiles))
        write_annotations(fire_dir / ANNOTATION_FILE, annotations)

    train, val, test, omit = spec.split_counts()
    ids = corpus.fires
    write_split_manifest(corpus.manifest, {
        "train": ids[:train],
        "val": ids[train : train + val],
        "test": ids[train + val : train + val + test],
        "omit": ids[train + val + test :],
    })
    write_ground_truth(out / GROUND_TRUTH_FILE, corpus.frames)
    return corpus


def write_ground_truth(path: Path, frames: list[GroundTruthFrame]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(("fire_id", "frame_id", "offset_seconds", "image_label", "supervision", "tile_labels"))
        for f in frames:
            tiles = "-" if f.tile_labels is None else "".join(str(int(v)) for v in f.tile_labels)
            writer.writerow((f.fire_id, f.frame_id, f.offset_seconds, f.image_label, f.supervision.value, tiles))


def read_ground_truth(path: str | Path) -> list[GroundTruthFrame]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh, delimiter="\t"):
            tiles = None if row["tile_labels"] == "-" else np.array([int(c) for c in row["tile_labels"]], dtype=np.uint8)
            out.append(GroundTruthFrame(
                row["fire_id"], row["frame_id"], int(row["offset_seconds"]), int(row["image_label"]),
                SupervisionKind(row["supervision"]), tiles,
            ))
    return out
