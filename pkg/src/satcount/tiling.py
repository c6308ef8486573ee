"""Tile size selection.

Counting accuracy over tile size is treated as unimodal: tiles much smaller
than the counter's sweet spot chop objects apart, much larger ones shrink
objects below the counter's input resolution.  A ternary search therefore
finds the best size in logarithmically many probes, which matters because
each probe costs a calibration pass.
"""

from __future__ import annotations

import math
from typing import Callable

from .errors import ValidationError


def optimal_tile_size(
    eval_fn: Callable[[int], float],
    s_min: int,
    s_max: int,
    epsilon: int = 10,
    endpoint_comparison: bool = False,
) -> int:
    """Ternary-search the tile size maximizing ``eval_fn`` over [s_min, s_max].

    Sizes are integer pixels; the two probe points sit a third of the way in
    from each end (rounded down, but always at least one pixel in so tiny
    intervals keep shrinking).  The search stops once the bracket is at most
    ``epsilon`` wide and returns its midpoint.

    ``endpoint_comparison=True`` switches to a variant that compares the
    bracket endpoints instead of the interior probes while still narrowing to
    the interior points.  It is kept for study only: on a curve that peaks in
    the middle it can walk to the wrong side, so the default interior
    comparison is what the pipeline uses.
    """
    s_min = int(s_min)
    s_max = int(s_max)
    if s_min <= 0:
        raise ValidationError("s_min must be > 0")
    if s_max < s_min:
        raise ValidationError("s_max must be >= s_min")
    if epsilon <= 0:
        raise ValidationError("epsilon must be > 0")

    lo, hi = s_min, s_max
    while hi - lo > epsilon:
        step = max(1, (hi - lo) // 3)
        mid_l = lo + step
        mid_r = hi - step
        if endpoint_comparison:
            left_val, right_val = eval_fn(lo), eval_fn(hi)
        else:
            left_val, right_val = eval_fn(mid_l), eval_fn(mid_r)
        if left_val < right_val:
            lo = mid_l
        else:
            hi = mid_r
    return (lo + hi) // 2


def brute_force_tile_size(
    eval_fn: Callable[[int], float],
    s_min: int,
    s_max: int,
    step: int = 1,
) -> int:
    """Exhaustive argmax over the size grid; ties go to the smaller size."""
    s_min = int(s_min)
    s_max = int(s_max)
    if step < 1:
        raise ValidationError("step must be >= 1")
    if s_min <= 0:
        raise ValidationError("s_min must be > 0")
    if s_max < s_min:
        raise ValidationError("empty grid: s_max < s_min")
    best_size = s_min
    best_val = -math.inf
    for size in range(s_min, s_max + 1, step):
        val = eval_fn(size)
        if val > best_val:
            best_val = val
            best_size = size
    return best_size


def execution_cost(
    frame_width: int,
    frame_height: int,
    tile_size: int,
    per_tile_latency: float,
) -> float:
    """Seconds to run the counter over every tile of one frame."""
    if frame_width <= 0 or frame_height <= 0:
        raise ValidationError("frame dimensions must be > 0")
    if tile_size <= 0:
        raise ValidationError("tile_size must be > 0")
    if per_tile_latency < 0:
        raise ValidationError("per_tile_latency must be >= 0")
    n_tiles = math.ceil(frame_width / tile_size) * math.ceil(frame_height / tile_size)
    return n_tiles * per_tile_latency
