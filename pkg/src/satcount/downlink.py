"""Bandwidth-aware downlink throttling.

A ground-station contact is short, so the bytes that fit are allocated by
confidence bands: tiles the onboard counter scored below ``conf_p`` are
dropped, tiles above ``conf_q`` keep their onboard counts, and the band in
between is downlinked greedily in descending confidence until the link is
full.  What happens to mid-band tiles that miss the window differs per
policy; that difference is the whole policy knob.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .errors import ValidationError

POLICY_KINDS = ("low_conf_first", "fixed_conf", "dynamic_conf")


@dataclass(frozen=True)
class ContactWindow:
    """One pass over a ground station: seconds of contact at a link rate."""

    duration_s: float = 360.0
    rate_bps: float = 50e6

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValidationError("duration_s must be > 0")
        if self.rate_bps <= 0:
            raise ValidationError("rate_bps must be > 0")


def link_capacity(window: ContactWindow) -> int:
    """Whole bytes the window can carry (bits / 8, floored)."""
    return int(window.rate_bps * window.duration_s // 8)


@dataclass(frozen=True)
class DownlinkPolicy:
    """Leftover-handling policy plus its confidence band edges."""

    kind: str = "dynamic_conf"
    conf_p: float = 0.3
    conf_q: float = 0.8

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValidationError(
                f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}"
            )
        if not 0.0 <= self.conf_p <= 1.0 or not 0.0 <= self.conf_q <= 1.0:
            raise ValidationError("conf_p and conf_q must be in [0, 1]")
        if self.conf_p > self.conf_q:
            raise ValidationError("conf_p must be <= conf_q")


class ScoredTile(NamedTuple):
    """Throttle input: what it costs to send a tile and how sure orbit is."""

    tile_id: int
    confidence: float
    size_bytes: int
    count: int


@dataclass(frozen=True)
class DownlinkPlan:
    """Disposition of every scored tile; the three sets partition the input.

    ``transmitted`` preserves admission order.  ``counted_in_space`` maps
    tile id -> onboard count for tiles resolved without downlinking.
    ``effective_conf_q`` is the band ceiling actually realized: for the
    dynamic policy the smallest value such that every tile above it was
    resolved onboard, otherwise the configured ceiling.
    """

    transmitted: tuple[int, ...]
    counted_in_space: dict
    discarded: tuple[int, ...]
    bytes_used: int
    effective_conf_q: float


def throttle(
    scored: Sequence[ScoredTile],
    policy: DownlinkPolicy,
    capacity_bytes: int,
    greedy: str = "stop",
) -> DownlinkPlan:
    """Fit the mid-confidence band into the link and dispose of the rest.

    Admission sorts by confidence descending (ties: smaller byte size, then
    lower tile id) and stops at the first tile that does not fit, so the
    link schedule is a contiguous prefix.  ``greedy="skip"`` instead steps over
    non-fitting tiles and keeps trying smaller ones.

    Leftovers (mid-band tiles that missed the window):
      low_conf_first  -> counted in space with their onboard counts
      fixed_conf      -> discarded
      dynamic_conf    -> counted in space, and the effective ceiling reported
    """
    if capacity_bytes < 0:
        raise ValidationError("capacity_bytes must be >= 0")
    if greedy not in ("stop", "skip"):
        raise ValidationError("greedy must be 'stop' or 'skip'")
    for t in scored:
        if not 0.0 <= t.confidence <= 1.0:
            raise ValidationError(f"tile {t.tile_id}: confidence must be in [0, 1]")
        if t.size_bytes <= 0:
            raise ValidationError(f"tile {t.tile_id}: size_bytes must be > 0")
        if t.count < 0:
            raise ValidationError(f"tile {t.tile_id}: count must be >= 0")

    discarded = [t.tile_id for t in scored if t.confidence < policy.conf_p]
    in_space = {
        t.tile_id: t.count for t in scored if t.confidence > policy.conf_q
    }
    band = [t for t in scored if policy.conf_p <= t.confidence <= policy.conf_q]
    band.sort(key=lambda t: (-t.confidence, t.size_bytes, t.tile_id))

    transmitted: list[int] = []
    transmitted_conf: list[float] = []
    bytes_used = 0
    leftovers: list[ScoredTile] = []
    stopped = False
    for t in band:
        if stopped or bytes_used + t.size_bytes > capacity_bytes:
            leftovers.append(t)
            if greedy == "stop":
                stopped = True
            continue
        transmitted.append(t.tile_id)
        transmitted_conf.append(t.confidence)
        bytes_used += t.size_bytes

    effective_q = policy.conf_q
    if policy.kind == "fixed_conf":
        discarded.extend(t.tile_id for t in leftovers)
    else:
        for t in leftovers:
            in_space[t.tile_id] = t.count
        if policy.kind == "dynamic_conf":
            # smallest ceiling with everything above it resolved onboard
            effective_q = max(transmitted_conf) if transmitted_conf else policy.conf_p
    return DownlinkPlan(
        transmitted=tuple(transmitted),
        counted_in_space=in_space,
        discarded=tuple(discarded),
        bytes_used=bytes_used,
        effective_conf_q=effective_q,
    )


def select_policy_curve(
    scene,
    config,
    policy_kind: str,
    contact_times: Sequence[float],
) -> list[tuple[float, float]]:
    """Mean CMAE of one policy across contact durations.

    Runs the full pipeline for every (contact time, seed) pair with the
    policy swapped in; rows come back as (contact_time, mean_cmae) suitable
    for plotting one curve.
    """
    from dataclasses import replace as _replace

    from . import pipeline  # local import: pipeline depends on this module

    if policy_kind not in POLICY_KINDS:
        raise ValidationError(f"unknown policy kind {policy_kind!r}")
    rows = []
    for duration in contact_times:
        cfg = config.with_updates(
            policy=DownlinkPolicy(
                kind=policy_kind,
                conf_p=config.policy.conf_p,
                conf_q=config.policy.conf_q,
            ),
            window=_replace(config.window, duration_s=float(duration)),
        )
        cmaes = [
            pipeline.run_track(scene, cfg, seed).cmae for seed in config.seeds
        ]
        rows.append((float(duration), float(sum(cmaes) / len(cmaes))))
    return rows
