"""Object counter behaviour models.

Real DNN counters are not run here.  Instead each counter is reduced to an
accuracy curve over tile size plus a noise model: at detection quality q a
tile with g true objects yields Binomial(g, q) recovered objects plus a thin
Poisson stream of false positives, and reports a Beta-distributed confidence
score whose mean is q.  That is enough to reproduce the counting-error
behaviour that drives scheduling decisions, while staying cheap and exactly
reproducible from a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class CounterProfile:
    """Accuracy and latency model for one counter on one tier.

    ``map_peak`` is the counter's detection quality at its preferred tile
    size ``optimal_tile``; quality falls off log-symmetrically with width
    ``curve_width``.  ``per_tile_latency`` maps hardware names to seconds
    per tile.
    """

    name: str
    tier: str  # "space" or "ground"
    input_size: int
    map_peak: float
    optimal_tile: int = 600
    curve_width: float = 0.5
    fp_rate: float = 0.5
    confidence_sharpness: float = 50.0
    per_tile_latency: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tier not in ("space", "ground"):
            raise ValidationError("tier must be 'space' or 'ground'")
        if not 0.0 < self.map_peak <= 1.0:
            raise ValidationError("map_peak must be in (0, 1]")
        if self.optimal_tile <= 0:
            raise ValidationError("optimal_tile must be > 0")
        if self.curve_width <= 0:
            raise ValidationError("curve_width must be > 0")
        if self.input_size <= 0:
            raise ValidationError("input_size must be > 0")
        if self.fp_rate < 0:
            raise ValidationError("fp_rate must be >= 0")
        if self.confidence_sharpness <= 0:
            raise ValidationError("confidence_sharpness must be > 0")
        for hw, lat in self.per_tile_latency.items():
            if lat < 0:
                raise ValidationError(f"latency for {hw!r} must be >= 0")

    def latency_on(self, hardware_name: str) -> float:
        try:
            return self.per_tile_latency[hardware_name]
        except KeyError:
            raise ValidationError(
                f"counter {self.name!r} has no latency entry for hardware "
                f"{hardware_name!r}"
            ) from None


COUNTER_PRESETS = {
    # Ground-tier reference counter: accurate but too heavy for orbit.
    "yolov3": CounterProfile(
        name="yolov3",
        tier="ground",
        input_size=416,
        map_peak=0.553,
        optimal_tile=800,
        per_tile_latency={"rpi4": 0.20, "atlas": 0.10},
    ),
    # Default onboard counter.
    "yolov3-tiny": CounterProfile(
        name="yolov3-tiny",
        tier="space",
        input_size=416,
        map_peak=0.331,
        optimal_tile=600,
        per_tile_latency={"rpi4": 0.10, "atlas": 0.05},
    ),
    # Lighter onboard alternative; prefers smaller tiles.
    "ssd-mobilenetv2": CounterProfile(
        name="ssd-mobilenetv2",
        tier="space",
        input_size=300,
        map_peak=0.220,
        optimal_tile=500,
        per_tile_latency={"rpi4": 0.08, "atlas": 0.04},
    ),
}


def counter_preset(name: str) -> CounterProfile:
    try:
        return COUNTER_PRESETS[name]
    except KeyError:
        raise ValidationError(
            f"unknown counter preset {name!r}; expected one of {sorted(COUNTER_PRESETS)}"
        ) from None


def map_at(profile: CounterProfile, tile_size: float) -> float:
    """Detection quality of ``profile`` at ``tile_size``, clamped to [0, 1].

    Log-Gaussian in size: peak at ``optimal_tile``, symmetric in log-space,
    so halving and doubling the tile cost the same accuracy.
    """
    if tile_size <= 0:
        raise ValidationError("tile_size must be > 0")
    ratio = math.log(tile_size / profile.optimal_tile)
    q = profile.map_peak * math.exp(-profile.curve_width * ratio * ratio)
    return min(1.0, max(0.0, q))


class Box(NamedTuple):
    """Axis-aligned detection box with a stable id for tie-breaking."""

    id: int
    x: float
    y: float
    w: float
    h: float
    score: float


@dataclass(frozen=True)
class Detection:
    """Counting result for one tile."""

    tile_id: int
    count: int
    confidence: float
    boxes: tuple | None = None

    def __post_init__(self):
        if self.count < 0:
            raise ValidationError("count must be >= 0")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError("confidence must be in [0, 1]")
        if self.boxes is not None and len(self.boxes) != self.count:
            raise ValidationError("count must equal number of boxes when boxes given")


def detect(
    profile: CounterProfile,
    tile,
    rng: np.random.Generator,
    hardware: str | None = None,
) -> Detection:
    """Simulate running ``profile`` over one tile.

    count = Binomial(g, q) true positives + Poisson(fp_rate * (1 - q)) false
    positives, with q the profile's quality at the tile's size.  Confidence is
    Beta with mean q; the better the counter suits this tile size, the higher
    and tighter its self-reported score.  ``hardware`` is accepted for callers
    that validate latency availability up front; it does not change the noise
    model.
    """
    if hardware is not None:
        profile.latency_on(hardware)  # fail fast on a missing latency entry
    q = map_at(profile, tile.size)
    true_pos = int(rng.binomial(tile.g, q)) if tile.g > 0 else 0
    lam = profile.fp_rate * (1.0 - q)
    false_pos = int(rng.poisson(lam)) if lam > 0 else 0
    if q <= 0.0:
        conf = 0.0
    elif q >= 1.0:
        conf = 1.0
    else:
        nu = profile.confidence_sharpness
        conf = float(rng.beta(q * nu, (1.0 - q) * nu))
    return Detection(tile_id=tile.id, count=true_pos + false_pos, confidence=conf)


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes."""
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return inter / union


def nms(boxes: Sequence[Box], iou_threshold: float) -> list[Box]:
    """Greedy non-maximum suppression.

    Boxes are visited in descending score order (ties broken by box id, so
    the result does not depend on input order); each kept box suppresses any
    remaining box overlapping it with IoU above the threshold.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValidationError("iou_threshold must be in (0, 1)")
    for b in boxes:
        if b.w <= 0 or b.h <= 0:
            raise ValidationError(f"degenerate box id={b.id}: zero or negative area")
        if not 0.0 <= b.score <= 1.0:
            raise ValidationError(f"box id={b.id}: score must be in [0, 1]")
    pending = sorted(boxes, key=lambda b: (-b.score, b.id))
    kept: list[Box] = []
    while pending:
        best = pending.pop(0)
        kept.append(best)
        pending = [b for b in pending if iou(best, b) <= iou_threshold]
    return kept


def roi_filter(tiles: Sequence, detections: dict, roi_floor: float) -> list:
    """Drop tiles that look empty: zero count and confidence under the floor.

    ``detections`` maps tile id -> Detection.  Returns the kept tiles in
    their input order.
    """
    if not 0.0 <= roi_floor <= 1.0:
        raise ValidationError("roi_floor must be in [0, 1]")
    kept = []
    for tile in tiles:
        det = detections.get(tile.id)
        if det is None:
            raise ValidationError(f"no detection for tile {tile.id}")
        if det.count == 0 and det.confidence < roi_floor:
            continue
        kept.append(tile)
    return kept
