"""Geometric pipeline (resize, crop, tile, rasterize, tile labels),
augmentation, normalization and the background-subtraction channel.

Images are ``float32`` arrays of shape ``(H, W, C)`` with values in [0, 1]
unless stated otherwise.  Continuous pixel coordinates place pixel ``(r, c)``
over ``[c, c+1) x [r, r+1)``, so resizing scales coordinates directly.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol, Sequence

import cv2
import numpy as np

from smokeynet import kernels
from smokeynet.data import AnnotationSet, SupervisionKind

logger = logging.getLogger(__name__)


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Geometry:
    """Resize target, top crop, tile grid and tile-label threshold.

    The default is the full FIgLib geometry: resize to 1392x1856, drop the
    top 352 rows, tile 1040x1856 into 5x9 tiles of 224 px overlapping by 20.
    """

    resize_height: int = 1392
    resize_width: int = 1856
    crop_top: int = 352
    tile_size: int = 224
    overlap: int = 20
    rows: int = 5
    cols: int = 9
    smoke_threshold: int = 250
    source_sizes: tuple[tuple[int, int], ...] = ((1536, 2048), (2048, 3072))

    def __post_init__(self) -> None:
        if self.crop_top >= self.resize_height:
            raise GeometryError(
                f"crop of {self.crop_top} rows leaves nothing of a {self.resize_height}-row image"
            )
        if self.stride * (self.rows - 1) + self.tile_size != self.height:
            raise GeometryError(f"{self.rows} tile rows do not span height {self.height} exactly")
        if self.stride * (self.cols - 1) + self.tile_size != self.width:
            raise GeometryError(f"{self.cols} tile cols do not span width {self.width} exactly")

    @property
    def stride(self) -> int:
        return self.tile_size - self.overlap

    @property
    def height(self) -> int:
        return self.resize_height - self.crop_top

    @property
    def width(self) -> int:
        return self.resize_width

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def num_tiles(self) -> int:
        return self.rows * self.cols


FIGLIB = Geometry()

# Desk-scale geometry: 1/7.25 of the FIgLib resize target, same 5x9 grid.
# Tiles of 32 px overlap by 4; the threshold keeps 0.5% of tile area.
DESK = Geometry(
    resize_height=192,
    resize_width=256,
    crop_top=48,
    tile_size=32,
    overlap=4,
    smoke_threshold=5,
    source_sizes=((192, 256),),
)

GEOMETRIES = {"figlib": FIGLIB, "desk": DESK}


@dataclass(frozen=True)
class TileGrid:
    tile_size: int
    overlap: int
    rows: int
    cols: int
    tiles: tuple[tuple[int, int, int, int], ...] = field(default=(), repr=False)

    @classmethod
    def from_geometry(cls, geometry: Geometry = FIGLIB) -> "TileGrid":
        stride = geometry.stride
        tiles = tuple(
            (r, c, r * stride, c * stride) for r in range(geometry.rows) for c in range(geometry.cols)
        )
        return cls(geometry.tile_size, geometry.overlap, geometry.rows, geometry.cols, tiles)

    @property
    def stride(self) -> int:
        return self.tile_size - self.overlap

    @property
    def source_shape(self) -> tuple[int, int]:
        return (
            self.stride * (self.rows - 1) + self.tile_size,
            self.stride * (self.cols - 1) + self.tile_size,
        )

    def __len__(self) -> int:
        return self.rows * self.cols

    def covering(self, y: int, x: int) -> list[tuple[int, int]]:
        """Grid cells whose window contains pixel ``(y, x)``."""
        t = self.tile_size
        return [(r, c) for r, c, y0, x0 in self.tiles if y0 <= y < y0 + t and x0 <= x < x0 + t]


def _resize(image: np.ndarray, height: int, width: int, interpolation=cv2.INTER_LINEAR) -> np.ndarray:
    if image.shape[:2] == (height, width):
        return image.copy()
    out = cv2.resize(image, (width, height), interpolation=interpolation)
    if image.ndim == 3 and out.ndim == 2:
        out = out[:, :, None]
    return out


def resize_and_crop(image: np.ndarray, geometry: Geometry = FIGLIB) -> np.ndarray:
    """Bilinear resize to the geometry's resize target, then drop the top rows."""
    if image.shape[:2] not in geometry.source_sizes:
        logger.warning(
            "unexpected source size %sx%s; resizing anyway", image.shape[0], image.shape[1]
        )
    resized = _resize(image, geometry.resize_height, geometry.resize_width)
    if resized.shape[0] <= geometry.crop_top:
        raise GeometryError(f"image of {resized.shape[0]} rows cannot lose {geometry.crop_top}")
    return resized[geometry.crop_top :]


def transform_annotation(ann: AnnotationSet, source_shape: tuple[int, int],
                         geometry: Geometry = FIGLIB) -> AnnotationSet:
    """Map annotation coordinates through the same scale-then-translate as
    :func:`resize_and_crop`.  Vertices may land outside the crop; the
    rasterizer clips them."""
    sy = geometry.resize_height / source_shape[0]
    sx = geometry.resize_width / source_shape[1]
    top = geometry.crop_top

    contours = tuple(tuple((x * sx, y * sy - top) for x, y in poly) for poly in ann.contours)
    boxes = tuple((x0 * sx, y0 * sy - top, x1 * sx, y1 * sy - top) for x0, y0, x1, y1 in ann.boxes)
    return AnnotationSet(contours=contours, boxes=boxes)


def tile(image: np.ndarray, geometry: Geometry = FIGLIB) -> tuple[TileGrid, np.ndarray]:
    """Split an ``(H, W, ...)`` image into ``(rows*cols, t, t, ...)`` tiles, row-major."""
    if image.shape[:2] != geometry.shape:
        raise GeometryError(
            f"expected a {geometry.height}x{geometry.width} image, got "
            f"{image.shape[0]}x{image.shape[1]}"
        )
    grid = TileGrid.from_geometry(geometry)
    t = grid.tile_size
    tiles = np.stack([image[y0 : y0 + t, x0 : x0 + t] for _, _, y0, x0 in grid.tiles])
    return grid, tiles


def untile(tiles: np.ndarray, grid: TileGrid) -> np.ndarray:
    """Inverse of :func:`tile`; overlapping pixels are written by every tile."""
    height, width = grid.source_shape
    out = np.zeros((height, width) + tiles.shape[3:], dtype=tiles.dtype)
    t = grid.tile_size
    for (_, _, y0, x0), patch in zip(grid.tiles, tiles):
        out[y0 : y0 + t, x0 : x0 + t] = patch
    return out


def _distinct_vertices(poly: Sequence[tuple[float, float]]) -> int:
    return len({(float(x), float(y)) for x, y in poly})


def rasterize_regions(ann: AnnotationSet | None, shape: tuple[int, int],
                      kind: SupervisionKind = SupervisionKind.CONTOUR) -> np.ndarray:
    """Binary smoke mask (uint8) from contours, or from boxes for ``BOX_FILL``.

    Even-odd fill of each polygon, pixel centers on edges included; the mask
    is the union over polygons.
    """
    mask = np.zeros(shape, dtype=np.uint8)
    if ann is None or kind is SupervisionKind.EXCLUDED:
        return mask
    if kind is SupervisionKind.BOX_FILL:
        polys = [((x0, y0), (x1, y0), (x1, y1), (x0, y1)) for x0, y0, x1, y1 in ann.boxes]
    else:
        polys = list(ann.contours)
    for poly in polys:
        if _distinct_vertices(poly) < 3:
            logger.warning("skipping degenerate polygon with %d distinct vertices", _distinct_vertices(poly))
            continue
        xs = [p[0] for p in poly]
        ys = [p[1] for p in poly]
        kernels.fill_polygon(mask, xs, ys)
    return mask


def tile_pixel_counts(mask: np.ndarray, grid: TileGrid) -> np.ndarray:
    if mask.shape != grid.source_shape:
        raise GeometryError(f"mask {mask.shape} does not match grid source {grid.source_shape}")
    return kernels.tile_counts(mask, grid.tile_size, grid.stride, grid.rows, grid.cols)


def tile_labels(mask: np.ndarray, grid: TileGrid, threshold: int = 250) -> np.ndarray:
    """Row-major tile labels: 1 where the tile holds more than ``threshold`` smoke pixels."""
    return (tile_pixel_counts(mask, grid) > threshold).astype(np.uint8)


def normalize(image: np.ndarray) -> np.ndarray:
    """Map [0, 1] to [-1, 1] (mean 0.5, std 0.5 per channel)."""
    return (image - np.float32(0.5)) / np.float32(0.5)


def denormalize(image: np.ndarray) -> np.ndarray:
    return image * np.float32(0.5) + np.float32(0.5)


# -- augmentation -----------------------------------------------------------


@dataclass(frozen=True)
class AugmentationPolicy:
    hflip_p: float = 0.5
    vcrop_p: float = 0.5
    vcrop_max_fraction: float = 0.1
    color_p: float = 0.5
    saturation: float = 0.1
    brightness_contrast_p: float = 0.5
    brightness: float = 0.1
    contrast: float = 0.1
    blur_p: float = 0.5
    blur_max_radius: int = 2

    @classmethod
    def identity(cls) -> "AugmentationPolicy":
        return cls(hflip_p=0.0, vcrop_p=0.0, color_p=0.0, brightness_contrast_p=0.0, blur_p=0.0)

    def only(self, **probabilities: float) -> "AugmentationPolicy":
        """Identity policy except for the given ``<name>_p`` probabilities."""
        return replace(AugmentationPolicy.identity(), **probabilities)


@dataclass(frozen=True)
class _Sample:
    hflip: bool = False
    crop: tuple[int, int] | None = None  # (start row, kept rows)
    saturation: float | None = None
    brightness: float | None = None
    contrast: float | None = None
    blur_radius: int = 0

    @property
    def is_identity(self) -> bool:
        return self == _Sample()


def _draw(policy: AugmentationPolicy, height: int, rng: np.random.Generator) -> _Sample:
    # every draw happens regardless of outcome so streams stay aligned
    u = rng.random(5)
    hflip = bool(u[0] < policy.hflip_p)

    crop = None
    max_cut = int(policy.vcrop_max_fraction * height)
    cut = int(rng.integers(1, max_cut + 1)) if max_cut >= 1 else 0
    start = int(rng.integers(0, cut + 1))
    if u[1] < policy.vcrop_p and cut > 0:
        crop = (start, height - cut)

    sat = float(rng.uniform(1 - policy.saturation, 1 + policy.saturation))
    bri = float(rng.uniform(1 - policy.brightness, 1 + policy.brightness))
    con = float(rng.uniform(1 - policy.contrast, 1 + policy.contrast))
    radius = int(rng.integers(1, max(policy.blur_max_radius, 1) + 1))
    return _Sample(
        hflip=hflip,
        crop=crop,
        saturation=sat if u[2] < policy.color_p else None,
        brightness=bri if u[3] < policy.brightness_contrast_p else None,
        contrast=con if u[3] < policy.brightness_contrast_p else None,
        blur_radius=radius if u[4] < policy.blur_p and policy.blur_max_radius > 0 else 0,
    )


def _geometric(arr: np.ndarray, sample: _Sample, interpolation) -> np.ndarray:
    if sample.hflip:
        arr = arr[:, ::-1]
    if sample.crop is not None:
        start, kept = sample.crop
        height, width = arr.shape[:2]
        arr = _resize(np.ascontiguousarray(arr[start : start + kept]), height, width, interpolation)
    return np.ascontiguousarray(arr)


def _gray(img: np.ndarray) -> np.ndarray:
    if img.shape[-1] == 1:
        return img
    return (img[..., :3] @ np.array([0.299, 0.587, 0.114], dtype=np.float32))[..., None]


def _photometric(img: np.ndarray, sample: _Sample) -> np.ndarray:
    out = img
    if sample.saturation is not None and img.shape[-1] == 3:
        gray = _gray(out)
        out = gray + np.float32(sample.saturation) * (out - gray)
    if sample.brightness is not None:
        out = out * np.float32(sample.brightness)
    if sample.contrast is not None:
        mean = _gray(out).mean()
        out = mean + np.float32(sample.contrast) * (out - mean)
    if sample.blur_radius:
        k = 2 * sample.blur_radius + 1
        out = cv2.GaussianBlur(np.ascontiguousarray(out), (k, k), 0)
        if out.ndim == 2:
            out = out[:, :, None]
    return np.clip(out, 0.0, 1.0).astype(np.float32, copy=False)


def augment_group(frames: Sequence[np.ndarray], mask: np.ndarray, policy: AugmentationPolicy,
                  rng_seed, extra: Sequence[np.ndarray] = ()) -> tuple[list[np.ndarray], np.ndarray, list[np.ndarray]]:
    """Apply one sampled augmentation to a temporal frame group.

    Geometric transforms hit every frame, the mask and ``extra`` channels
    identically; photometric transforms hit frames only.  Returns
    ``(frames, mask, extra)``.
    """
    height, width = mask.shape
    for f in frames:
        if f.shape[:2] != (height, width):
            raise GeometryError("frames and mask differ in size")
    rng = np.random.default_rng(rng_seed)
    sample = _draw(policy, height, rng)
    if sample.is_identity:
        return [f.copy() for f in frames], mask.copy(), [e.copy() for e in extra]
    out_frames = [_photometric(_geometric(f, sample, cv2.INTER_LINEAR), sample) for f in frames]
    out_mask = _geometric(mask, sample, cv2.INTER_NEAREST)
    out_extra = [_geometric(e, sample, cv2.INTER_NEAREST) for e in extra]
    return out_frames, out_mask, out_extra


# -- background channel -----------------------------------------------------


class BackgroundSubtractor(Protocol):
    def apply(self, prev: np.ndarray, cur: np.ndarray) -> np.ndarray:
        """Single-channel foreground in [0, 1] with the frames' spatial shape."""
        ...

    def reset(self) -> None:
        ...


class FrameDifferenceSubtractor:
    """Thresholded absolute difference of grayscale frames."""

    def __init__(self, threshold: float = 0.1):
        self.threshold = threshold

    def apply(self, prev: np.ndarray, cur: np.ndarray) -> np.ndarray:
        return kernels.abs_diff_threshold(_gray(prev)[..., 0], _gray(cur)[..., 0], self.threshold)

    def reset(self) -> None:
        pass


class Mog2Subtractor:
    """OpenCV's Gaussian-mixture (MOG2) model behind the subtractor interface.

    Stateful: one instance per camera sequence.  The first call also feeds
    ``prev`` so the model has seen a background frame.
    """

    def __init__(self, history: int = 500, var_threshold: float = 16.0):
        self.history = history
        self.var_threshold = var_threshold
        self.reset()

    def reset(self) -> None:
        self._model = cv2.createBackgroundSubtractorMOG2(
            history=self.history, varThreshold=self.var_threshold, detectShadows=False
        )
        self._primed = False

    def apply(self, prev: np.ndarray, cur: np.ndarray) -> np.ndarray:
        def as_u8(img):
            return np.ascontiguousarray(np.clip(img * 255.0, 0, 255).astype(np.uint8))

        if not self._primed:
            self._model.apply(as_u8(prev))
            self._primed = True
        fg = self._model.apply(as_u8(cur))
        return (fg.astype(np.float32) / 255.0).clip(0.0, 1.0)


def background_channel(prev: np.ndarray, cur: np.ndarray,
                       subtractor: BackgroundSubtractor | None = None) -> np.ndarray:
    if prev.shape != cur.shape:
        raise GeometryError(f"frame shapes differ: {prev.shape} vs {cur.shape}")
    subtractor = subtractor or FrameDifferenceSubtractor()
    fg = subtractor.apply(prev, cur)
    return np.clip(fg, 0.0, 1.0).astype(np.float32)


# -- debug dumps ------------------------------------------------------------

MASK_MAGIC = b"SMK1"
_MASK_HEADER = struct.Struct("<4sIII")  # magic, height, width, reserved


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    height, width = mask.shape
    with open(path, "wb") as fh:
        fh.write(_MASK_HEADER.pack(MASK_MAGIC, height, width, 0))
        fh.write(np.ascontiguousarray(mask != 0, dtype=np.uint8).tobytes())


def read_mask(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    magic, height, width, _ = _MASK_HEADER.unpack_from(raw)
    if magic != MASK_MAGIC:
        raise ValueError(f"{path}: not a mask dump")
    body = raw[_MASK_HEADER.size :]
    if len(body) != height * width:
        raise ValueError(f"{path}: truncated mask dump")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width).copy()


def format_tile_labels(labels: Sequence[int]) -> str:
    return "".join("1" if v else "0" for v in labels)


def parse_tile_labels(text: str) -> np.ndarray:
    text = text.strip()
    if set(text) - {"0", "1"}:
        raise ValueError(f"tile labels must be 0/1 characters: {text!r}")
    return np.array([int(ch) for ch in text], dtype=np.uint8)


def load_image(path: str | Path) -> np.ndarray:
    """Read an RGB image as float32 in [0, 1]."""
    bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if bgr is None:
        raise OSError(f"cannot read image {path}")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0


def save_image(path: str | Path, image: np.ndarray) -> None:
    u8 = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    if not cv2.imwrite(str(path), cv2.cvtColor(u8, cv2.COLOR_RGB2BGR)):
        raise OSError(f"cannot write image {path}")
