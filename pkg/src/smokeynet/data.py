"""FIgLib-style archive indexing, image labels, split manifests and
tile-supervision sources.

Archive layout::

    <root>/<fire_id>/<timestamp>_<+/-offset>.jpg
    <root>/<fire_id>/annotations.json      (optional)

``fire_id`` follows the FIgLib naming ``<date>_<FireName>_<camera>``; the
camera id is the last underscore-separated token and the station is the
camera id's first dash-separated token.
"""

from __future__ import annotations

import enum
import json
import logging
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

DEFAULT_OFFSET_PATTERN = r"_(?P<offset>[+-]\d+)\.[A-Za-z0-9]+$"
IMAGE_SUFFIXES = frozenset({".jpg", ".jpeg", ".png"})
ANNOTATION_FILE = "annotations.json"
FRAME_SPACING_SECONDS = 60
NOMINAL_OFFSETS = tuple(range(-2400, 2401, FRAME_SPACING_SECONDS))

SPLIT_SECTIONS = ("train", "val", "test", "omit")


class ArchiveError(Exception):
    """Fatal ingest error (unreadable archive directory)."""


class FrameNameError(ValueError):
    """A frame file name carries no offset token."""


class ManifestError(ValueError):
    """Split manifest is malformed or inconsistent with the archive index."""


def frame_name(timestamp: int, offset_seconds: int, suffix: str = ".jpg") -> str:
    """Canonical frame file name, e.g. ``1563305245_+00060.jpg``."""
    return f"{timestamp}_{offset_seconds:+06d}{suffix}"


def parse_frame_offset(name: str, pattern: str | re.Pattern = DEFAULT_OFFSET_PATTERN) -> int:
    """Signed offset in seconds encoded in a frame file name."""
    regex = re.compile(pattern) if isinstance(pattern, str) else pattern
    match = regex.search(Path(name).name)
    if match is None:
        raise FrameNameError(f"no offset token in frame name {name!r}")
    return int(match.group("offset"))


def label_from_offset(offset_seconds: int) -> int:
    """Image label: 1 (smoke) at or after ignition, 0 before."""
    return 1 if offset_seconds >= 0 else 0


@dataclass(frozen=True)
class AnnotationSet:
    """Smoke annotations for one frame in original image pixel coordinates."""

    contours: tuple[tuple[tuple[float, float], ...], ...] = ()
    boxes: tuple[tuple[float, float, float, float], ...] = ()

    @classmethod
    def from_json(cls, obj: dict) -> "AnnotationSet":
        contours = tuple(tuple((float(x), float(y)) for x, y in poly) for poly in obj.get("contours", []))
        boxes = tuple(tuple(float(v) for v in box) for box in obj.get("boxes", []))
        for box in boxes:
            if len(box) != 4:
                raise ValueError(f"box needs 4 values, got {box}")
        return cls(contours=contours, boxes=boxes)  # type: ignore[arg-type]

    def to_json(self) -> dict:
        return {
            "contours": [[list(v) for v in poly] for poly in self.contours],
            "boxes": [list(b) for b in self.boxes],
        }

    @property
    def is_empty(self) -> bool:
        return not self.contours and not self.boxes

    def validate(self, height: int, width: int) -> None:
        for poly in self.contours:
            if len(poly) < 3:
                raise ValueError("contour polygon needs at least 3 vertices")
            for x, y in poly:
                if not (0 <= x <= width and 0 <= y <= height):
                    raise ValueError(f"vertex ({x}, {y}) outside {height}x{width} image")
        for xmin, ymin, xmax, ymax in self.boxes:
            if not (0 <= xmin <= xmax <= width and 0 <= ymin <= ymax <= height):
                raise ValueError(f"box {(xmin, ymin, xmax, ymax)} outside {height}x{width} image")


@dataclass
class FrameRecord:
    frame_id: str
    offset_seconds: int
    image_path: Path
    image_label: int
    annotation: AnnotationSet | None = None


@dataclass
class FireSequence:
    fire_id: str
    camera_id: str
    frames: list[FrameRecord]
    station: str | None = None
    missing_offsets: tuple[int, ...] = ()
    skipped_files: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        offsets = [f.offset_seconds for f in self.frames]
        if any(b <= a for a, b in zip(offsets, offsets[1:])):
            raise ValueError(f"{self.fire_id}: frames not strictly ordered by offset")

    @property
    def missing_frames(self) -> int:
        return len(self.missing_offsets)

    def __len__(self) -> int:
        return len(self.frames)


def camera_from_fire_id(fire_id: str) -> tuple[str, str | None]:
    camera = fire_id.rsplit("_", 1)[-1]
    station = camera.split("-", 1)[0] if "-" in camera else None
    return camera, station


def missing_offsets(offsets: Iterable[int], nominal: Sequence[int] = NOMINAL_OFFSETS,
                    spacing: int = FRAME_SPACING_SECONDS) -> tuple[int, ...]:
    """Nominal slots with no frame within half a spacing."""
    present = sorted(offsets)
    half = spacing / 2
    out = []
    j = 0
    for slot in nominal:
        while j < len(present) and present[j] < slot - half:
            j += 1
        if j >= len(present) or abs(present[j] - slot) > half:
            out.append(slot)
    return tuple(out)


def read_annotations(path: Path) -> dict[str, AnnotationSet]:
    with open(path) as fh:
        doc = json.load(fh)
    frames = doc.get("frames", doc)
    return {frame_id: AnnotationSet.from_json(obj) for frame_id, obj in frames.items()}


def write_annotations(path: Path, annotations: dict[str, AnnotationSet]) -> None:
    doc = {"frames": {fid: ann.to_json() for fid, ann in sorted(annotations.items())}}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def index_fire(fire_dir: Path, pattern: str | re.Pattern = DEFAULT_OFFSET_PATTERN,
               nominal: Sequence[int] = NOMINAL_OFFSETS) -> FireSequence:
    regex = re.compile(pattern) if isinstance(pattern, str) else pattern
    try:
        entries = sorted(fire_dir.iterdir())
    except OSError as exc:
        raise ArchiveError(f"cannot read fire directory {fire_dir}: {exc}") from exc

    ann_path = fire_dir / ANNOTATION_FILE
    annotations = read_annotations(ann_path) if ann_path.exists() else {}

    frames: dict[int, FrameRecord] = {}
    skipped = []
    for path in entries:
        if path.suffix.lower() not in IMAGE_SUFFIXES or not path.is_file():
            continue
        try:
            offset = parse_frame_offset(path.name, regex)
        except FrameNameError:
            logger.warning("skipping %s: no offset token in name", path)
            skipped.append(path.name)
            continue
        if offset in frames:
            logger.warning("skipping %s: duplicate offset %+d", path, offset)
            skipped.append(path.name)
            continue
        frames[offset] = FrameRecord(
            frame_id=path.stem,
            offset_seconds=offset,
            image_path=path,
            image_label=label_from_offset(offset),
            annotation=annotations.get(path.stem),
        )

    camera, station = camera_from_fire_id(fire_dir.name)
    ordered = [frames[k] for k in sorted(frames)]
    return FireSequence(
        fire_id=fire_dir.name,
        camera_id=camera,
        station=station,
        frames=ordered,
        missing_offsets=missing_offsets(frames, nominal),
        skipped_files=tuple(skipped),
    )


def index_archive(root: str | Path, pattern: str | re.Pattern = DEFAULT_OFFSET_PATTERN,
                  nominal: Sequence[int] = NOMINAL_OFFSETS) -> list[FireSequence]:
    """One :class:`FireSequence` per fire directory under ``root``, sorted by fire id."""
    root = Path(root)
    try:
        fire_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    except OSError as exc:
        raise ArchiveError(f"cannot read archive root {root}: {exc}") from exc
    fires = [index_fire(d, pattern, nominal) for d in fire_dirs]
    skipped = sum(len(f.skipped_files) for f in fires)
    if skipped:
        logger.warning("%d frame files skipped across %d fires", skipped, len(fires))
    return fires


class SupervisionKind(enum.Enum):
    CONTOUR = "contour"
    BOX_FILL = "box_fill"
    EXCLUDED = "excluded"


def resolve_supervision(frame: FrameRecord) -> SupervisionKind:
    """Where a frame's tile labels come from.

    Negative frames always supervise with an empty mask.
    """
    if frame.image_label == 0:
        return SupervisionKind.CONTOUR
    ann = frame.annotation
    if ann is not None and ann.contours:
        return SupervisionKind.CONTOUR
    if ann is not None and ann.boxes:
        return SupervisionKind.BOX_FILL
    return SupervisionKind.EXCLUDED


@dataclass
class SplitManifest:
    train_fires: frozenset[str]
    val_fires: frozenset[str]
    test_fires: frozenset[str]
    omitted_fires: frozenset[str]
    counts: dict[str, tuple[int, int]] = field(default_factory=dict)

    def split(self, name: str) -> frozenset[str]:
        return {
            "train": self.train_fires,
            "val": self.val_fires,
            "test": self.test_fires,
            "omit": self.omitted_fires,
        }[name]

    def split_of(self, fire_id: str) -> str | None:
        for name in SPLIT_SECTIONS:
            if fire_id in self.split(name):
                return name
        return None


def parse_split_manifest(text: str) -> dict[str, list[str]]:
    sections: dict[str, list[str]] = {name: [] for name in SPLIT_SECTIONS}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in sections:
                raise ManifestError(f"line {lineno}: unknown section [{current}]")
            continue
        if current is None:
            raise ManifestError(f"line {lineno}: fire id outside any section")
        sections[current].append(line)
    return sections


def write_split_manifest(path: str | Path, splits: dict[str, Iterable[str]]) -> None:
    lines = []
    for name in SPLIT_SECTIONS:
        lines.append(f"[{name}]")
        lines.extend(sorted(splits.get(name, ())))
        lines.append("")
    Path(path).write_text("\n".join(lines))


def load_split_manifest(path: str | Path, index: Sequence[FireSequence] | None = None,
                        require_coverage: bool = True) -> SplitManifest:
    """Parse and validate a sectioned split manifest.

    With an ``index`` the manifest is cross-checked against the archive:
    every listed fire must exist and (``require_coverage``) every indexed
    fire must be listed.  Per-split ``(fires, images)`` counts are filled in.
    """
    sections = parse_split_manifest(Path(path).read_text())

    seen: dict[str, str] = {}
    overlaps = []
    for name in SPLIT_SECTIONS:
        for fire in sections[name]:
            if fire in seen and seen[fire] != name:
                overlaps.append(f"{fire} ({seen[fire]}, {name})")
            elif fire in seen:
                overlaps.append(f"{fire} (listed twice in {name})")
            seen[fire] = name
    if overlaps:
        raise ManifestError("fires in more than one split: " + ", ".join(overlaps))

    manifest = SplitManifest(
        train_fires=frozenset(sections["train"]),
        val_fires=frozenset(sections["val"]),
        test_fires=frozenset(sections["test"]),
        omitted_fires=frozenset(sections["omit"]),
    )
    if index is None:
        return manifest

    by_id = {f.fire_id: f for f in index}
    unknown = sorted(set(seen) - set(by_id))
    if unknown:
        raise ManifestError("fires in manifest but not in archive: " + ", ".join(unknown))
    if require_coverage:
        unlisted = sorted(set(by_id) - set(seen))
        if unlisted:
            raise ManifestError("fires in archive but not in manifest: " + ", ".join(unlisted))
    for name in SPLIT_SECTIONS:
        fires = manifest.split(name)
        manifest.counts[name] = (len(fires), sum(len(by_id[f]) for f in fires))
    return manifest
