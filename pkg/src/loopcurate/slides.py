"""Pyramidal tiled image access and annotation-driven patch extraction.

A slide is a directory holding a ``slide.json`` descriptor plus PNG tiles at
``tiles/L<level>/<row>_<col>.png``. Level 0 is full resolution; every level
records its integer downsample. Region reads assemble pixels from the covering
tiles; anything outside the slide is filled white (histology background).
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .errors import DomainError, FormatError, NotFoundError, ValidationError
from .formats.canonical import canonical_json
from .model import AnnotationSet, CircleAnnotation, kept_annotations

DESCRIPTOR_NAME = "slide.json"
FILL_VALUE = 255  # out-of-bounds fill, white

DEFAULT_PADDING_RATIO = 0.2


@dataclass(frozen=True)
class LevelInfo:
    downsample: int
    width: int
    height: int


@dataclass(frozen=True)
class PatchImage:
    """A rectangular pixel window. origin is the level-0 (x, y) of the
    top-left corner; pixels are H x W x 3 uint8."""

    pixels: np.ndarray
    origin: tuple[int, int]
    level: int
    annotation_id: Optional[int] = None


@dataclass(frozen=True)
class PatchManifestEntry:
    annotation_id: int
    patch_file: str
    origin: tuple[int, int]
    size: int
    padding_used: float


@dataclass(frozen=True)
class PatchManifest:
    entries: tuple[PatchManifestEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        paths = [e.patch_file for e in self.entries]
        if len(paths) != len(set(paths)):
            raise ValidationError("patch manifest contains duplicate paths")

    def to_json(self) -> bytes:
        return canonical_json(
            [
                {
                    "annotation_id": e.annotation_id,
                    "origin": list(e.origin),
                    "padding_used": e.padding_used,
                    "patch_file": e.patch_file,
                    "size": e.size,
                }
                for e in self.entries
            ]
        )

    @staticmethod
    def from_json(data: bytes) -> "PatchManifest":
        items = json.loads(data.decode("utf-8"))
        return PatchManifest(
            tuple(
                PatchManifestEntry(
                    annotation_id=i["annotation_id"],
                    patch_file=i["patch_file"],
                    origin=(i["origin"][0], i["origin"][1]),
                    size=i["size"],
                    padding_used=i["padding_used"],
                )
                for i in items
            )
        )


@dataclass
class SlideHandle:
    """Open pyramid. Reentrant: region reads share an internal tile cache
    guarded by a lock, no other mutable state."""

    slide_id: str
    tile_size: int
    levels: tuple[LevelInfo, ...]
    source: Path
    _cache: dict = field(default_factory=dict, repr=False)
    _cache_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _cache_limit: int = 256

    @property
    def width(self) -> int:
        return self.levels[0].width

    @property
    def height(self) -> int:
        return self.levels[0].height

    def level(self, index: int) -> LevelInfo:
        if not 0 <= index < len(self.levels):
            raise DomainError(f"level {index} out of range (slide has {len(self.levels)} levels)")
        return self.levels[index]

    @property
    def coarsest_level(self) -> int:
        return len(self.levels) - 1

    def tile_path(self, level: int, row: int, col: int) -> Path:
        return self.source / "tiles" / f"L{level}" / f"{row}_{col}.png"

    def _load_tile(self, level: int, row: int, col: int) -> np.ndarray:
        key = (level, row, col)
        with self._cache_lock:
            if key in self._cache:
                return self._cache[key]
        arr = np.asarray(Image.open(self.tile_path(level, row, col)).convert("RGB"))
        with self._cache_lock:
            if len(self._cache) >= self._cache_limit:
                self._cache.clear()
            self._cache[key] = arr
        return arr


def grid_shape(level: LevelInfo, tile_size: int) -> tuple[int, int]:
    """(rows, cols) of the tile grid covering a level."""
    rows = (level.height + tile_size - 1) // tile_size
    cols = (level.width + tile_size - 1) // tile_size
    return rows, cols


def open_slide(path: str | Path) -> SlideHandle:
    """Open a slide container and validate its pyramid metadata.

    Accepts the slide directory or the descriptor file itself. No pixel data
    is read, but every expected tile file must exist.
    """
    path = Path(path)
    if path.is_file() and path.name == DESCRIPTOR_NAME:
        path = path.parent
    if not path.exists():
        raise NotFoundError(f"slide path does not exist: {path}")
    descriptor = path / DESCRIPTOR_NAME
    if not descriptor.is_file():
        raise FormatError(f"not a slide container (no {DESCRIPTOR_NAME}): {path}")

    try:
        meta = json.loads(descriptor.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"unreadable slide descriptor {descriptor}: {exc}") from exc

    try:
        slide_id = meta["slide_id"]
        tile_size = int(meta["tile_size"])
        levels = tuple(
            LevelInfo(downsample=int(l["downsample"]), width=int(l["width"]), height=int(l["height"]))
            for l in meta["levels"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"slide descriptor {descriptor} is missing fields: {exc}") from exc

    _validate_pyramid(levels, tile_size)
    handle = SlideHandle(slide_id=slide_id, tile_size=tile_size, levels=levels, source=path)
    _validate_tiles(handle)
    return handle


def _validate_pyramid(levels: Sequence[LevelInfo], tile_size: int) -> None:
    if not levels:
        raise ValidationError("pyramid has no levels")
    if tile_size <= 0:
        raise ValidationError(f"tile_size must be positive, got {tile_size}")
    if levels[0].downsample != 1:
        raise ValidationError(f"level 0 must be full resolution (downsample 1), got {levels[0].downsample}")
    base = levels[0]
    prev_ds = 0
    for i, lvl in enumerate(levels):
        ds = lvl.downsample
        if ds <= prev_ds:
            raise ValidationError(f"level {i}: downsample must be strictly increasing, got {ds} after {prev_ds}")
        if ds & (ds - 1) != 0:
            raise ValidationError(f"level {i}: downsample must be a power of two, got {ds}")
        expect_w = -(-base.width // ds)   # ceil division
        expect_h = -(-base.height // ds)
        if abs(lvl.width - expect_w) > 1 or abs(lvl.height - expect_h) > 1:
            raise ValidationError(
                f"level {i}: size {lvl.width}x{lvl.height} inconsistent with downsample {ds} "
                f"(expected about {expect_w}x{expect_h})"
            )
        prev_ds = ds
    if lvl.width <= 0 or lvl.height <= 0:
        raise ValidationError(f"level {len(levels) - 1} has degenerate size")


def _validate_tiles(handle: SlideHandle) -> None:
    for index, lvl in enumerate(handle.levels):
        rows, cols = grid_shape(lvl, handle.tile_size)
        for row in range(rows):
            for col in range(cols):
                if not handle.tile_path(index, row, col).is_file():
                    raise ValidationError(
                        f"level {index}: missing tile {row}_{col}.png (truncated tile directory)",
                        location=f"level {index}",
                    )


def read_region(slide: SlideHandle, level: int, x: int, y: int, w: int, h: int) -> PatchImage:
    """Read a w x h window at (x, y) in the given level's pixel coordinates.

    The window must intersect the slide; the part outside is filled white.
    Deterministic: the same request always yields the same pixels.
    """
    info = slide.level(level)
    if w <= 0 or h <= 0:
        raise DomainError(f"zero-area region request ({w}x{h})")
    if x + w <= 0 or y + h <= 0 or x >= info.width or y >= info.height:
        raise DomainError(
            f"region ({x},{y},{w},{h}) does not intersect level {level} bounds {info.width}x{info.height}"
        )

    out = np.full((h, w, 3), FILL_VALUE, dtype=np.uint8)
    ix0, iy0 = max(x, 0), max(y, 0)
    ix1, iy1 = min(x + w, info.width), min(y + h, info.height)

    t = slide.tile_size
    for row in range(iy0 // t, (iy1 - 1) // t + 1):
        for col in range(ix0 // t, (ix1 - 1) // t + 1):
            tile = slide._load_tile(level, row, col)
            tx0, ty0 = col * t, row * t
            sx0, sy0 = max(ix0, tx0), max(iy0, ty0)
            sx1, sy1 = min(ix1, tx0 + tile.shape[1]), min(iy1, ty0 + tile.shape[0])
            if sx1 <= sx0 or sy1 <= sy0:
                continue
            out[sy0 - y : sy1 - y, sx0 - x : sx1 - x] = tile[sy0 - ty0 : sy1 - ty0, sx0 - tx0 : sx1 - tx0]

    ds = info.downsample
    return PatchImage(pixels=out, origin=(x * ds, y * ds), level=level)


def patch_rect(annotation: CircleAnnotation, padding_ratio: float) -> tuple[int, int, int]:
    """The (x0, y0, side) level-0 pixel rectangle a patch covers.

    side = round(2 * r * (1 + padding_ratio)), centered on the rounded circle
    center. Manifest entries recompute exactly from this.
    """
    c = annotation.geometry
    side = max(1, int(round(2.0 * c.r * (1.0 + padding_ratio))))
    x0 = int(round(c.cx)) - side // 2
    y0 = int(round(c.cy)) - side // 2
    return x0, y0, side


def extract_patches(
    slide: SlideHandle,
    annotation_set: AnnotationSet,
    padding_ratio: float = DEFAULT_PADDING_RATIO,
    out_dir: str | Path = ".",
) -> PatchManifest:
    """Crop one square level-0 patch per kept annotation into out_dir.

    Files are named <slide_id>_<annotation_id>.png (lossless); the manifest is
    returned and also persisted as manifest.json next to the patches.
    Re-running overwrites with byte-identical files.
    """
    if padding_ratio < 0:
        raise DomainError(f"padding_ratio must be >= 0, got {padding_ratio}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DomainError(f"cannot create patch output directory {out_dir}: {exc}") from exc

    entries = []
    for a in kept_annotations(annotation_set):
        x0, y0, side = patch_rect(a, padding_ratio)
        patch = read_region(slide, 0, x0, y0, side, side)
        name = f"{annotation_set.slide_id}_{a.id}.png"
        Image.fromarray(patch.pixels).save(out_dir / name, format="PNG")
        entries.append(
            PatchManifestEntry(
                annotation_id=a.id,
                patch_file=name,
                origin=(x0, y0),
                size=side,
                padding_used=padding_ratio,
            )
        )

    manifest = PatchManifest(tuple(entries))
    (out_dir / "manifest.json").write_bytes(manifest.to_json())
    return manifest
