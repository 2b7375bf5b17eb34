"""Deterministic synthetic slide generator: the desk-scale test fixture.

Writes a full pyramid container of non-overlapping filled disks on a lightly
textured bright background. Every byte is a function of the spec (same seed,
same file), the exact ground-truth circles and per-disk fill colors are
returned, and the per-level reference rasters are retained so tests can check
region reads byte-for-byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DomainError
from .formats.canonical import canonical_json
from .geometry import Circle
from .model import AnnotationSet, CircleAnnotation, Provenance
from .slides import DESCRIPTOR_NAME, LevelInfo, SlideHandle, grid_shape, open_slide

# Disks must stay separable after box filtering at the coarsest level.
MIN_DISK_GAP = 16

# Background luminance band; disk channels stay below 160 so a grayscale
# threshold of ~200 splits them cleanly.
BACKGROUND_LOW, BACKGROUND_HIGH = 235, 251
DISK_CHANNEL_MAX = 160

COARSEST_TARGET = 1024  # levels are added until max(w, h) / ds <= this


@dataclass(frozen=True)
class SynthSpec:
    width: int = 2048
    height: int = 2048
    n_disks: int = 50
    radius_range: tuple[int, int] = (20, 60)
    seed: int = 0
    tile_size: int = 256
    slide_id: str | None = None
    n_levels: int | None = None

    def resolved_slide_id(self) -> str:
        return self.slide_id if self.slide_id is not None else f"synth-{self.seed}"

    def resolved_levels(self) -> int:
        if self.n_levels is not None:
            return self.n_levels
        longest = max(self.width, self.height)
        extra = max(0, math.ceil(math.log2(longest / COARSEST_TARGET))) if longest > COARSEST_TARGET else 0
        return 1 + extra


@dataclass(frozen=True)
class SyntheticSlide:
    path: Path
    handle: SlideHandle
    ground_truth: AnnotationSet
    disk_colors: dict[int, tuple[int, int, int]]
    level_rasters: tuple[np.ndarray, ...]
    spec: SynthSpec


def make_synthetic_slide(spec: SynthSpec, out_dir: str | Path) -> SyntheticSlide:
    if spec.width <= 0 or spec.height <= 0:
        raise DomainError("slide dimensions must be positive")
    if spec.n_disks < 0:
        raise DomainError("n_disks must be >= 0")
    rmin, rmax = spec.radius_range
    if not 0 < rmin <= rmax:
        raise DomainError(f"invalid radius_range {spec.radius_range}")

    rng = np.random.default_rng(spec.seed)
    disks = _place_disks(spec, rng)
    colors = _pick_colors(len(disks), rng)

    base = rng.integers(BACKGROUND_LOW, BACKGROUND_HIGH, size=(spec.height, spec.width), dtype=np.uint8)
    raster = np.repeat(base[:, :, None], 3, axis=2).copy()
    for (cx, cy, r), color in zip(disks, colors):
        _fill_disk(raster, cx, cy, r, color)

    rasters = [raster]
    for _ in range(spec.resolved_levels() - 1):
        rasters.append(_box_downsample(rasters[-1]))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    levels = []
    for index, arr in enumerate(rasters):
        levels.append(LevelInfo(downsample=2**index, width=arr.shape[1], height=arr.shape[0]))
        _write_tiles(out_dir, index, arr, spec.tile_size)
    descriptor = {
        "slide_id": spec.resolved_slide_id(),
        "tile_size": spec.tile_size,
        "levels": [{"downsample": l.downsample, "width": l.width, "height": l.height} for l in levels],
    }
    (out_dir / DESCRIPTOR_NAME).write_bytes(canonical_json(descriptor))

    annotations = tuple(
        CircleAnnotation(id=i + 1, geometry=Circle(float(cx), float(cy), float(r)), provenance=Provenance.HUMAN_ADDED)
        for i, (cx, cy, r) in enumerate(disks)
    )
    ground_truth = AnnotationSet(slide_id=spec.resolved_slide_id(), annotations=annotations, active_threshold=0.0)
    disk_colors = {i + 1: tuple(int(c) for c in color) for i, color in enumerate(colors)}

    return SyntheticSlide(
        path=out_dir,
        handle=open_slide(out_dir),
        ground_truth=ground_truth,
        disk_colors=disk_colors,
        level_rasters=tuple(rasters),
        spec=spec,
    )


def _place_disks(spec: SynthSpec, rng: np.random.Generator) -> list[tuple[int, int, int]]:
    rmin, rmax = spec.radius_range
    margin = 4
    disks: list[tuple[int, int, int]] = []
    attempts_left = 200 * max(spec.n_disks, 1)
    while len(disks) < spec.n_disks:
        if attempts_left <= 0:
            raise DomainError(
                f"could not pack {spec.n_disks} disks of radius {spec.radius_range} into "
                f"{spec.width}x{spec.height} (placed {len(disks)})"
            )
        attempts_left -= 1
        r = int(rng.integers(rmin, rmax + 1))
        if 2 * (r + margin) >= min(spec.width, spec.height):
            continue
        cx = int(rng.integers(r + margin, spec.width - r - margin))
        cy = int(rng.integers(r + margin, spec.height - r - margin))
        if all(math.hypot(cx - ox, cy - oy) > r + orr + MIN_DISK_GAP for ox, oy, orr in disks):
            disks.append((cx, cy, r))
    return disks


def _pick_colors(n: int, rng: np.random.Generator) -> list[tuple[int, int, int]]:
    colors: list[tuple[int, int, int]] = []
    seen = set()
    while len(colors) < n:
        c = tuple(int(v) for v in rng.integers(0, DISK_CHANNEL_MAX, size=3))
        if c in seen:
            continue
        seen.add(c)
        colors.append(c)
    return colors


def _fill_disk(raster: np.ndarray, cx: int, cy: int, r: int, color: tuple[int, int, int]) -> None:
    y0, y1 = max(cy - r, 0), min(cy + r + 1, raster.shape[0])
    x0, x1 = max(cx - r, 0), min(cx + r + 1, raster.shape[1])
    yy, xx = np.mgrid[y0:y1, x0:x1]
    mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    raster[y0:y1, x0:x1][mask] = color


def _box_downsample(arr: np.ndarray) -> np.ndarray:
    """2x2 box filter; odd edges are replicated before averaging."""
    h, w = arr.shape[:2]
    if h % 2:
        arr = np.concatenate([arr, arr[-1:, :]], axis=0)
        h += 1
    if w % 2:
        arr = np.concatenate([arr, arr[:, -1:]], axis=1)
        w += 1
    blocks = arr.reshape(h // 2, 2, w // 2, 2, 3).astype(np.float64)
    return np.rint(blocks.mean(axis=(1, 3))).astype(np.uint8)


def _write_tiles(out_dir: Path, level: int, arr: np.ndarray, tile_size: int) -> None:
    level_dir = out_dir / "tiles" / f"L{level}"
    level_dir.mkdir(parents=True, exist_ok=True)
    info = LevelInfo(downsample=2**level, width=arr.shape[1], height=arr.shape[0])
    rows, cols = grid_shape(info, tile_size)
    for row in range(rows):
        for col in range(cols):
            tile = arr[row * tile_size : (row + 1) * tile_size, col * tile_size : (col + 1) * tile_size]
            Image.fromarray(tile).save(level_dir / f"{row}_{col}.png", format="PNG")
