"""Synthetic scenes and the manifest interchange format.

A scene is a track of frames captured along an orbit, each frame tiled into
square regions.  Tiles carry a hidden "context" (a patch of terrain the
track may see repeatedly), expressed as a 9-D color-moment feature near the
context's centroid.  A configurable fraction of frames are revisits: their
tiles repeat an earlier frame's contexts and counts, with features nudged by
at most half the dedup radius (capture-geometry transforms act trivially on
channel moments, so a revisit is the original feature plus a small drift).

Ground-truth counts are drawn once per context, so tiles that show the same
terrain hold the same number of objects.  This is the assumption that makes
representative-based dedup meaningful, and the marginal law of any single
tile's count stays Poisson with the configured mean.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dedup import FEATURE_DIM, color_moments
from .errors import ManifestError, ValidationError

# Feature-space geometry.  Context centroids are rejection-sampled in a box
# until pairwise separation holds; tile features stay within CONTEXT_RADIUS
# of their centroid and revisit drift within half of that, so a revisit is
# always nearer its origin than any other context.
CENTROID_BOX = 100.0
CENTROID_MIN_SEPARATION = 40.0
CONTEXT_RADIUS = 1.0


@dataclass(frozen=True)
class SceneSpec:
    """Generative parameters for a synthetic scene."""

    frames_per_track: int = 12
    frame_width: int = 3000
    frame_height: int = 3000
    num_contexts: int = 100
    duplicate_fraction: float = 0.5
    objects_per_tile_mean: float = 10.0
    bytes_per_pixel: int = 3
    compression_ratio: float = 10.0
    tile_size: int = 600
    seed: int = 0

    def __post_init__(self):
        if self.frames_per_track < 1:
            raise ValidationError("frames_per_track must be >= 1")
        if self.frame_width <= 0 or self.frame_height <= 0:
            raise ValidationError("frame dimensions must be > 0")
        if self.num_contexts < 1:
            raise ValidationError("num_contexts must be >= 1")
        if not 0.0 <= self.duplicate_fraction <= 1.0:
            raise ValidationError("duplicate_fraction must be in [0, 1]")
        if self.objects_per_tile_mean < 0:
            raise ValidationError("objects_per_tile_mean must be >= 0")
        if self.bytes_per_pixel <= 0:
            raise ValidationError("bytes_per_pixel must be > 0")
        if self.compression_ratio <= 0:
            raise ValidationError("compression_ratio must be > 0")
        if self.tile_size <= 0:
            raise ValidationError("tile_size must be > 0")


@dataclass(frozen=True)
class Frame:
    id: int
    width: int
    height: int
    capture_index: int
    revisit_of: int | None = None


@dataclass(frozen=True)
class TileRegion:
    """Geometry of one tile slot in a frame (clipped at the frame edge)."""

    x: int
    y: int
    width: int
    height: int


@dataclass(frozen=True)
class Tile:
    """One captured tile.

    ``size`` is the nominal (square) tiling size; ``width``/``height`` are
    the clipped extents for slots overlapping the frame edge.  ``context_id``
    is hidden generator metadata (absent for manifest-loaded tiles).
    """

    id: int
    frame_id: int
    x: int
    y: int
    size: int
    g: int
    width: int = -1
    height: int = -1
    feature: np.ndarray | None = None
    context_id: int | None = None
    raster: tuple | None = None

    def __post_init__(self):
        if self.width == -1:
            object.__setattr__(self, "width", self.size)
        if self.height == -1:
            object.__setattr__(self, "height", self.size)
        if self.x < 0 or self.y < 0:
            raise ValidationError("tile origin must be >= 0")
        if self.size <= 0:
            raise ValidationError("tile size must be > 0")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("tile extents must be > 0")
        if self.g < 0:
            raise ValidationError("ground-truth count must be >= 0")
        if self.feature is not None:
            feat = np.asarray(self.feature, dtype=np.float64)
            if feat.shape != (FEATURE_DIM,):
                raise ValidationError(f"feature must have shape ({FEATURE_DIM},)")
            object.__setattr__(self, "feature", feat)


@dataclass
class Scene:
    """Frames plus their tiles, in capture order."""

    frames: list = field(default_factory=list)
    tiles: list = field(default_factory=list)
    spec: SceneSpec | None = None
    bytes_per_pixel: int = 3
    compression_ratio: float = 10.0

    @property
    def ground_truth(self) -> dict:
        return {t.id: t.g for t in self.tiles}

    def tile_bytes(self, tile: Tile) -> int:
        """Compressed byte cost of downlinking one tile (nominal size)."""
        raw = tile.size * tile.size * self.bytes_per_pixel
        return max(1, int(round(raw / self.compression_ratio)))

    def total_ground_truth(self) -> int:
        return sum(t.g for t in self.tiles)


def enumerate_tiles(frame: Frame, tile_size: int) -> list[TileRegion]:
    """Slot geometry covering the frame: row-major grid, edges clipped.

    The regions partition the frame exactly: disjoint, and their areas sum
    to width * height.
    """
    if tile_size <= 0:
        raise ValidationError("tile_size must be > 0")
    regions = []
    for y in range(0, frame.height, tile_size):
        for x in range(0, frame.width, tile_size):
            regions.append(
                TileRegion(
                    x=x,
                    y=y,
                    width=min(tile_size, frame.width - x),
                    height=min(tile_size, frame.height - y),
                )
            )
    return regions


def _draw_centroids(rng: np.random.Generator, count: int) -> np.ndarray:
    """Rejection-sample well-separated context centroids."""
    centroids = np.empty((count, FEATURE_DIM))
    placed = 0
    attempts = 0
    limit = 10000 * count
    while placed < count:
        candidate = rng.uniform(0.0, CENTROID_BOX, FEATURE_DIM)
        attempts += 1
        if attempts > limit:
            raise ValidationError(
                f"could not place {count} contexts at separation "
                f"{CENTROID_MIN_SEPARATION}; reduce num_contexts"
            )
        if placed > 0:
            d = np.sqrt(np.sum((centroids[:placed] - candidate) ** 2, axis=1))
            if d.min() < CENTROID_MIN_SEPARATION:
                continue
        centroids[placed] = candidate
        placed += 1
    return centroids


def _clip_norm(vectors: np.ndarray, radius: float) -> np.ndarray:
    norms = np.sqrt(np.sum(vectors**2, axis=1, keepdims=True))
    scale = np.minimum(1.0, radius / np.maximum(norms, 1e-300))
    return vectors * scale


def generate_scene(spec: SceneSpec) -> Scene:
    """Deterministically build a scene from its spec.

    round(duplicate_fraction * frames) frames are revisits of earlier
    originals (at least one original always remains).  Revisit tiles copy
    their origin tile's context and count exactly; their features drift by
    at most CONTEXT_RADIUS / 2.
    """
    rng = np.random.default_rng(spec.seed)
    centroids = _draw_centroids(rng, spec.num_contexts)
    context_counts = rng.poisson(spec.objects_per_tile_mean, spec.num_contexts)

    n_frames = spec.frames_per_track
    n_revisits = int(spec.duplicate_fraction * n_frames + 0.5)
    if n_revisits >= n_frames:
        n_revisits = n_frames - 1  # at least one original to revisit
    n_originals = n_frames - n_revisits
    origin_choice = rng.integers(0, n_originals, size=n_revisits)

    frames = []
    for i in range(n_originals):
        frames.append(
            Frame(
                id=i,
                width=spec.frame_width,
                height=spec.frame_height,
                capture_index=i,
            )
        )
    for j in range(n_revisits):
        idx = n_originals + j
        frames.append(
            Frame(
                id=idx,
                width=spec.frame_width,
                height=spec.frame_height,
                capture_index=idx,
                revisit_of=int(origin_choice[j]),
            )
        )

    regions = enumerate_tiles(frames[0], spec.tile_size)
    per_frame = len(regions)
    sigma = CONTEXT_RADIUS / 3.0

    tiles: list[Tile] = []
    original_tiles: dict[int, list[Tile]] = {}
    next_id = 0
    for frame in frames:
        frame_tiles = []
        if frame.revisit_of is None:
            ctx = rng.integers(0, spec.num_contexts, size=per_frame)
            noise = _clip_norm(
                rng.normal(0.0, sigma, size=(per_frame, FEATURE_DIM)),
                CONTEXT_RADIUS,
            )
            for r, region in enumerate(regions):
                tile = Tile(
                    id=next_id,
                    frame_id=frame.id,
                    x=region.x,
                    y=region.y,
                    size=spec.tile_size,
                    width=region.width,
                    height=region.height,
                    g=int(context_counts[ctx[r]]),
                    feature=centroids[ctx[r]] + noise[r],
                    context_id=int(ctx[r]),
                )
                frame_tiles.append(tile)
                next_id += 1
            original_tiles[frame.id] = frame_tiles
        else:
            origin = original_tiles[frame.revisit_of]
            drift = _clip_norm(
                rng.normal(0.0, sigma / 3.0, size=(per_frame, FEATURE_DIM)),
                CONTEXT_RADIUS / 2.0,
            )
            for r, region in enumerate(regions):
                src = origin[r]
                tile = Tile(
                    id=next_id,
                    frame_id=frame.id,
                    x=region.x,
                    y=region.y,
                    size=spec.tile_size,
                    width=region.width,
                    height=region.height,
                    g=src.g,
                    feature=src.feature + drift[r],
                    context_id=src.context_id,
                )
                frame_tiles.append(tile)
                next_id += 1
        tiles.extend(frame_tiles)

    return Scene(
        frames=frames,
        tiles=tiles,
        spec=spec,
        bytes_per_pixel=spec.bytes_per_pixel,
        compression_ratio=spec.compression_ratio,
    )


def retiled(scene: Scene, tile_size: int) -> Scene:
    """Regenerate a synthetic scene at a different tiling granularity.

    Only possible when the scene carries its generating spec; manifest-loaded
    scenes keep the tiles they were given.
    """
    if scene.spec is None:
        raise ValidationError("cannot retile a scene without a generating spec")
    if tile_size == scene.spec.tile_size:
        return scene
    return generate_scene(replace(scene.spec, tile_size=tile_size))


# --- manifest interchange -------------------------------------------------
#
# One JSON record per line, keys sorted, compact separators.  Only portable
# fields are written (generator metadata like context ids stays internal), so
# generate -> save -> load -> save round-trips byte-identically.

_REQUIRED_FIELDS = ("tile_id", "frame_id", "x", "y", "size", "g")


def _tile_record(tile: Tile) -> dict:
    record = {
        "tile_id": tile.id,
        "frame_id": tile.frame_id,
        "x": tile.x,
        "y": tile.y,
        "size": tile.size,
        "g": tile.g,
    }
    if tile.feature is not None:
        record["feature"] = [float(v) for v in tile.feature]
    if tile.raster is not None:
        record["raster_stats"] = [[float(v) for v in ch] for ch in tile.raster]
    return record


def dumps_manifest(scene: Scene) -> str:
    lines = [
        json.dumps(_tile_record(t), sort_keys=True, separators=(",", ":"))
        for t in scene.tiles
    ]
    return "\n".join(lines) + "\n" if lines else ""


def save_manifest(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_manifest(scene))


def _parse_record(record: dict, line_no: int) -> Tile:
    for fieldname in _REQUIRED_FIELDS:
        if fieldname not in record:
            raise ManifestError(line_no, f"missing required field {fieldname!r}")
    feature = record.get("feature")
    raster = record.get("raster_stats")
    if feature is None and raster is not None:
        feature = color_moments(raster)
    if feature is None:
        raise ManifestError(
            line_no, "missing field 'feature' (and no raster_stats to derive it)"
        )
    feature = np.asarray(feature, dtype=np.float64)
    if feature.shape != (FEATURE_DIM,):
        raise ManifestError(line_no, f"feature must have {FEATURE_DIM} entries")
    try:
        return Tile(
            id=int(record["tile_id"]),
            frame_id=int(record["frame_id"]),
            x=int(record["x"]),
            y=int(record["y"]),
            size=int(record["size"]),
            g=int(record["g"]),
            feature=feature,
            raster=(
                tuple(tuple(float(v) for v in ch) for ch in raster)
                if raster is not None
                else None
            ),
        )
    except ValidationError as exc:
        raise ManifestError(line_no, str(exc)) from None


def load_manifest(path, bytes_per_pixel: int = 3, compression_ratio: float = 10.0) -> Scene:
    """Read a scene from a line-delimited manifest.

    Frames are reconstructed from the tile records: capture order follows
    first appearance, bounds are the tightest box around the frame's tiles.
    """
    tiles: list[Tile] = []
    seen_ids: set[int] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(line_no, f"invalid JSON: {exc.msg}") from None
            if not isinstance(record, dict):
                raise ManifestError(line_no, "record must be a JSON object")
            tile = _parse_record(record, line_no)
            if tile.id in seen_ids:
                raise ManifestError(line_no, f"duplicate tile_id {tile.id}")
            seen_ids.add(tile.id)
            tiles.append(tile)
    if not tiles:
        raise ValidationError(f"manifest {path} contains no tiles")

    frame_order: list[int] = []
    extents: dict[int, list[int]] = {}
    for tile in tiles:
        if tile.frame_id not in extents:
            frame_order.append(tile.frame_id)
            extents[tile.frame_id] = [0, 0]
        ext = extents[tile.frame_id]
        ext[0] = max(ext[0], tile.x + tile.width)
        ext[1] = max(ext[1], tile.y + tile.height)
    frames = [
        Frame(
            id=fid,
            width=extents[fid][0],
            height=extents[fid][1],
            capture_index=i,
        )
        for i, fid in enumerate(frame_order)
    ]
    return Scene(
        frames=frames,
        tiles=tiles,
        spec=None,
        bytes_per_pixel=bytes_per_pixel,
        compression_ratio=compression_ratio,
    )
