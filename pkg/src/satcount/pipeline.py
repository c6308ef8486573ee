"""End-to-end track simulation for every counting method.

One run takes a scene through: tile-size calibration, (for synthetic scenes)
re-tiling at the selected size, energy-charged capture and onboard counting,
region-of-interest filtering, duplicate suppression, bandwidth throttling,
ground recounting of whatever was downlinked, and aggregation into per-tile
estimates scored by CMAE against the full ground truth.

The four baselines share the same scene preparation and energy ledger rules
so that per-seed comparisons isolate what each method actually does
differently.  All randomness is drawn from generators keyed by
(run seed, stage, tile id), which makes every run reproducible and lets two
methods see identical per-tile noise where their stages overlap.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .dedup import deduplicate
from .detector import detect, map_at, roi_filter
from .downlink import DownlinkPlan, ScoredTile, link_capacity, throttle
from .energy import (
    BudgetExhausted,
    EnergyLedger,
    compute_energy,
    daily_budget,
    downlink_energy,
)
from .errors import MetricUndefinedError, ValidationError
from .scene import Scene, generate_scene, load_manifest, retiled
from .tiling import optimal_tile_size

METHODS = ("targetfuse", "space_only", "ground_only", "tiansuan", "kodan")
BASELINES = ("space_only", "ground_only", "tiansuan", "kodan")

# rng stream tags; per-tile streams are keyed (seed, tag, tile_id)
_CAL_TAG = 11
_SPACE_TAG = 12
_GROUND_TAG = 13
_DEDUP_TAG = 14

_SEED_MASK = (1 << 64) - 1
_CAL_REPLICATES = 8


def _stage_rng(seed: int, tag: int, *extra: int) -> np.random.Generator:
    parts = [int(seed) & _SEED_MASK, int(tag)]
    parts.extend(int(v) & _SEED_MASK for v in extra)
    return np.random.default_rng(np.random.SeedSequence(parts))


def mix_seed(base_seed: int, run_seed: int) -> int:
    """Fold a run seed into a scene seed, deterministically."""
    ss = np.random.SeedSequence([int(base_seed) & _SEED_MASK, int(run_seed) & _SEED_MASK])
    return int(ss.generate_state(1, np.uint64)[0])


def cmae(estimates: dict, truths: dict) -> float:
    """Counting mean absolute error: sum |y_i - g_i| / sum g_i.

    Defined only when the ground truth has at least one object in total.
    """
    if set(estimates) != set(truths):
        raise ValidationError("estimates and truths must cover the same tile ids")
    total_g = sum(truths.values())
    if total_g <= 0:
        raise MetricUndefinedError("cmae is undefined when total ground truth is 0")
    err = sum(abs(estimates[k] - truths[k]) for k in sorted(truths))
    return err / total_g


@dataclass(frozen=True)
class RunReport:
    """Outcome of one (method, seed) run.

    ``wall_time_s`` is measured and therefore excluded from the canonical
    CSV row, which must be byte-identical across reruns of the same
    (config, seed).
    """

    method: str
    seed: int
    cmae: float
    selected_tile_size: int
    tiles_total: int
    tiles_processed: int
    tiles_transmitted: int
    tiles_space_counted: int
    tiles_discarded: int
    tiles_unprocessed: int
    tiles_deduped: int
    bytes_downlinked: int
    joules_capture: float
    joules_compute: float
    joules_aggregate: float
    joules_downlink: float
    effective_conf_q: float | None
    wall_time_s: float

    @property
    def joules_total(self) -> float:
        return (
            self.joules_capture
            + self.joules_compute
            + self.joules_aggregate
            + self.joules_downlink
        )


CSV_COLUMNS = (
    "method",
    "seed",
    "cmae",
    "selected_tile_size",
    "tiles_total",
    "tiles_processed",
    "tiles_transmitted",
    "tiles_space_counted",
    "tiles_discarded",
    "tiles_unprocessed",
    "tiles_deduped",
    "bytes_downlinked",
    "joules_capture",
    "joules_compute",
    "joules_aggregate",
    "joules_downlink",
    "joules_total",
    "effective_conf_q",
)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def report_csv_row(report: RunReport) -> list[str]:
    values = [
        report.method,
        report.seed,
        report.cmae,
        report.selected_tile_size,
        report.tiles_total,
        report.tiles_processed,
        report.tiles_transmitted,
        report.tiles_space_counted,
        report.tiles_discarded,
        report.tiles_unprocessed,
        report.tiles_deduped,
        report.bytes_downlinked,
        report.joules_capture,
        report.joules_compute,
        report.joules_aggregate,
        report.joules_downlink,
        report.joules_total,
        report.effective_conf_q,
    ]
    return [_fmt(v) for v in values]


# --- shared stages ---------------------------------------------------------


def _calibration_eval_fn(scene: Scene, config, seed: int):
    """Mean simulated counting accuracy over a calibration sample, by size.

    Pure in (seed, size): the generator is keyed on both, so the tile-size
    search sees a frozen noisy curve rather than call-order-dependent draws.
    """
    n = min(config.calibration_sample, len(scene.tiles))
    g = np.array([t.g for t in scene.tiles[:n]], dtype=np.int64)
    g_safe = np.maximum(g, 1)
    prof = config.space_counter

    def eval_fn(size: int) -> float:
        rng = _stage_rng(seed, _CAL_TAG, int(size))
        q = map_at(prof, size)
        tp = rng.binomial(np.broadcast_to(g, (_CAL_REPLICATES, n)), q)
        lam = prof.fp_rate * (1.0 - q)
        y = tp
        if lam > 0:
            y = y + rng.poisson(lam, size=(_CAL_REPLICATES, n))
        acc = 1.0 - np.abs(y - g) / g_safe
        return float(acc.mean())

    return eval_fn


def _prepare(scene: Scene, config, seed: int) -> tuple[Scene, int]:
    """Select a tile size and, for synthetic scenes, re-tile at it."""
    if not scene.tiles:
        raise ValidationError("scene has no tiles")
    eval_fn = _calibration_eval_fn(scene, config, seed)
    s_best = optimal_tile_size(eval_fn, config.s_min, config.s_max, config.epsilon)
    if config.retile and scene.spec is not None:
        scene = retiled(scene, s_best)
    return scene, s_best


def _make_ledger(config) -> EnergyLedger:
    budget = config.budget_joules
    if budget is None:
        budget = daily_budget(config.harvest_joules, config.compute_fraction)
    return EnergyLedger(
        budget_joules=budget,
        compute_budget_joules=config.compute_budget_joules,
        downlink_budget_joules=config.downlink_budget_joules,
    )


def _capture(scene: Scene, ledger: EnergyLedger, hw) -> set:
    """Charge capture per frame in order; stop at the first refusal."""
    captured = set()
    for frame in scene.frames:
        try:
            ledger.charge("capture", hw.capture_joules_per_frame)
        except BudgetExhausted:
            break
        captured.add(frame.id)
    return captured


def _detect_onboard(scene: Scene, config, seed: int, ledger: EnergyLedger, captured: set) -> dict:
    """Run the space counter over captured tiles until compute energy runs out."""
    prof = config.space_counter
    hw = config.hardware
    per_tile = compute_energy(hw, prof.latency_on(hw.name))
    detections = {}
    for tile in scene.tiles:
        if tile.frame_id not in captured:
            continue
        try:
            ledger.charge("compute", per_tile)
        except BudgetExhausted:
            break
        detections[tile.id] = detect(prof, tile, _stage_rng(seed, _SPACE_TAG, tile.id))
    return detections


def _ground_count(scene: Scene, config, seed: int, tile) -> int:
    det = detect(config.ground_counter, tile, _stage_rng(seed, _GROUND_TAG, tile.id))
    return det.count


def _dedup_k(config, scene: Scene, n_kept: int) -> int:
    if config.dedup_k is not None:
        k = config.dedup_k
    elif scene.spec is not None:
        k = scene.spec.num_contexts
    else:
        # manifest scenes carry no context count; fall back to a sqrt rule
        k = int(round(math.sqrt(n_kept)))
    return max(1, min(k, n_kept))


def _assert_partition(report: RunReport) -> None:
    total = (
        report.tiles_transmitted
        + report.tiles_space_counted
        + report.tiles_discarded
        + report.tiles_unprocessed
        + report.tiles_deduped
    )
    if total != report.tiles_total:
        raise AssertionError(
            f"tile dispositions do not partition the scene: {total} != {report.tiles_total}"
        )


# --- the fused pipeline (targetfuse, and kodan with an unbounded link) ------


def _run_fused(scene: Scene, config, seed: int, method: str) -> RunReport:
    t0 = time.perf_counter()
    scene, s_best = _prepare(scene, config, seed)
    hw = config.hardware
    ledger = _make_ledger(config)

    captured = _capture(scene, ledger, hw)
    detections = _detect_onboard(scene, config, seed, ledger, captured)
    processed = [t for t in scene.tiles if t.id in detections]
    kept = roi_filter(processed, detections, config.roi_floor)
    kept_ids = {t.id for t in kept}
    n_roi_dropped = len(processed) - len(kept)

    if config.dedup_enabled and kept:
        k = _dedup_k(config, scene, len(kept))
        dd = deduplicate(kept, k, _stage_rng(seed, _DEDUP_TAG))
        reps = list(dd.representatives)
        rep_of = dd.representative_of
    else:
        reps = [t.id for t in kept]
        rep_of = {t.id: t.id for t in kept}
    rep_set = set(reps)

    tile_by_id = {t.id: t for t in scene.tiles}
    scored = [
        ScoredTile(
            tile_id=rid,
            confidence=detections[rid].confidence,
            size_bytes=scene.tile_bytes(tile_by_id[rid]),
            count=detections[rid].count,
        )
        for rid in reps
    ]
    if method == "kodan":
        capacity = sum(s.size_bytes for s in scored)  # always enough
    else:
        capacity = link_capacity(config.window)
    plan: DownlinkPlan = throttle(
        scored, config.policy, capacity, greedy=config.throttle_greedy
    )

    try:
        ledger.charge("aggregate", hw.aggregate_joules_per_track)
    except BudgetExhausted:
        pass  # the ground segment can still assemble the track

    # transmit in plan order; if the radio runs out of joules, the rest of
    # the schedule falls back to the policy's leftover disposition
    realized: list[int] = []
    bytes_used = 0
    demoted_space: dict = {}
    demoted_discard: list[int] = []
    radio_dead = False
    for tid in plan.transmitted:
        size = scene.tile_bytes(tile_by_id[tid])
        if not radio_dead:
            try:
                ledger.charge(
                    "downlink", downlink_energy(hw, size, config.window.rate_bps)
                )
                realized.append(tid)
                bytes_used += size
                continue
            except BudgetExhausted:
                radio_dead = True
        if config.policy.kind == "fixed_conf":
            demoted_discard.append(tid)
        else:
            demoted_space[tid] = detections[tid].count

    ground_counts = {
        tid: _ground_count(scene, config, seed, tile_by_id[tid]) for tid in realized
    }
    space_counts = dict(plan.counted_in_space)
    space_counts.update(demoted_space)
    discarded_reps = set(plan.discarded) | set(demoted_discard)

    rep_final = {}
    for rid in reps:
        if rid in ground_counts:
            rep_final[rid] = ground_counts[rid]
        elif rid in space_counts:
            rep_final[rid] = space_counts[rid]
        else:
            rep_final[rid] = 0  # dropped by the plan

    estimates = {}
    n_members = 0
    for tile in scene.tiles:
        tid = tile.id
        if tid in rep_set:
            estimates[tid] = float(rep_final[tid])
        elif tid in rep_of:
            n_members += 1
            if config.dedup_attribution == "member":
                estimates[tid] = float(detections[tid].count)
            else:
                estimates[tid] = float(rep_final[rep_of[tid]])
        else:
            estimates[tid] = 0.0

    if config.policy.kind == "dynamic_conf":
        effective_q = plan.effective_conf_q
    else:
        effective_q = config.policy.conf_q

    report = RunReport(
        method=method,
        seed=seed,
        cmae=cmae(estimates, scene.ground_truth),
        selected_tile_size=s_best,
        tiles_total=len(scene.tiles),
        tiles_processed=len(processed),
        tiles_transmitted=len(realized),
        tiles_space_counted=len(space_counts),
        tiles_discarded=n_roi_dropped + len(discarded_reps),
        tiles_unprocessed=len(scene.tiles) - len(processed),
        tiles_deduped=n_members,
        bytes_downlinked=bytes_used,
        joules_capture=ledger.spent("capture"),
        joules_compute=ledger.spent("compute"),
        joules_aggregate=ledger.spent("aggregate"),
        joules_downlink=ledger.spent("downlink"),
        effective_conf_q=effective_q,
        wall_time_s=time.perf_counter() - t0,
    )
    _assert_partition(report)
    return report


def run_track(scene: Scene, config, seed: int) -> RunReport:
    """Run the full fused pipeline for one seed."""
    return _run_fused(scene, config, seed, "targetfuse")


# --- baselines --------------------------------------------------------------


def _run_space_only(scene: Scene, config, seed: int) -> RunReport:
    t0 = time.perf_counter()
    scene, s_best = _prepare(scene, config, seed)
    hw = config.hardware
    ledger = _make_ledger(config)
    captured = _capture(scene, ledger, hw)
    detections = _detect_onboard(scene, config, seed, ledger, captured)
    try:
        ledger.charge("aggregate", hw.aggregate_joules_per_track)
    except BudgetExhausted:
        pass
    estimates = {
        t.id: float(detections[t.id].count) if t.id in detections else 0.0
        for t in scene.tiles
    }
    report = RunReport(
        method="space_only",
        seed=seed,
        cmae=cmae(estimates, scene.ground_truth),
        selected_tile_size=s_best,
        tiles_total=len(scene.tiles),
        tiles_processed=len(detections),
        tiles_transmitted=0,
        tiles_space_counted=len(detections),
        tiles_discarded=0,
        tiles_unprocessed=len(scene.tiles) - len(detections),
        tiles_deduped=0,
        bytes_downlinked=0,
        joules_capture=ledger.spent("capture"),
        joules_compute=ledger.spent("compute"),
        joules_aggregate=ledger.spent("aggregate"),
        joules_downlink=ledger.spent("downlink"),
        effective_conf_q=None,
        wall_time_s=time.perf_counter() - t0,
    )
    _assert_partition(report)
    return report


def _transmit_capture_order(
    scene: Scene,
    config,
    ledger: EnergyLedger,
    tiles: Sequence,
    capacity: int,
) -> tuple[list[int], int]:
    """Bent-pipe transmission: capture order, stop at the first tile that
    does not fit the window or the remaining radio energy."""
    hw = config.hardware
    realized: list[int] = []
    bytes_used = 0
    for tile in tiles:
        size = scene.tile_bytes(tile)
        if bytes_used + size > capacity:
            break
        try:
            ledger.charge("downlink", downlink_energy(hw, size, config.window.rate_bps))
        except BudgetExhausted:
            break
        realized.append(tile.id)
        bytes_used += size
    return realized, bytes_used


def _run_ground_only(scene: Scene, config, seed: int) -> RunReport:
    t0 = time.perf_counter()
    scene, s_best = _prepare(scene, config, seed)
    hw = config.hardware
    ledger = _make_ledger(config)
    captured = _capture(scene, ledger, hw)
    sendable = [t for t in scene.tiles if t.frame_id in captured]
    realized, bytes_used = _transmit_capture_order(
        scene, config, ledger, sendable, link_capacity(config.window)
    )
    tile_by_id = {t.id: t for t in scene.tiles}
    estimates = {t.id: 0.0 for t in scene.tiles}
    for tid in realized:
        estimates[tid] = float(_ground_count(scene, config, seed, tile_by_id[tid]))
    report = RunReport(
        method="ground_only",
        seed=seed,
        cmae=cmae(estimates, scene.ground_truth),
        selected_tile_size=s_best,
        tiles_total=len(scene.tiles),
        tiles_processed=0,
        tiles_transmitted=len(realized),
        tiles_space_counted=0,
        tiles_discarded=len(scene.tiles) - len(realized),
        tiles_unprocessed=0,
        tiles_deduped=0,
        bytes_downlinked=bytes_used,
        joules_capture=ledger.spent("capture"),
        joules_compute=ledger.spent("compute"),
        joules_aggregate=ledger.spent("aggregate"),
        joules_downlink=ledger.spent("downlink"),
        effective_conf_q=None,
        wall_time_s=time.perf_counter() - t0,
    )
    _assert_partition(report)
    return report


def _run_tiansuan(scene: Scene, config, seed: int) -> RunReport:
    t0 = time.perf_counter()
    scene, s_best = _prepare(scene, config, seed)
    hw = config.hardware
    ledger = _make_ledger(config)
    captured = _capture(scene, ledger, hw)
    detections = _detect_onboard(scene, config, seed, ledger, captured)
    threshold = (
        config.tiansuan_threshold
        if config.tiansuan_threshold is not None
        else config.policy.conf_q
    )
    processed = [t for t in scene.tiles if t.id in detections]
    accepted = {
        t.id: detections[t.id].count
        for t in processed
        if detections[t.id].confidence > threshold
    }
    pending = [t for t in processed if t.id not in accepted]
    try:
        ledger.charge("aggregate", hw.aggregate_joules_per_track)
    except BudgetExhausted:
        pass
    realized, bytes_used = _transmit_capture_order(
        scene, config, ledger, pending, link_capacity(config.window)
    )
    tile_by_id = {t.id: t for t in scene.tiles}
    estimates = {t.id: 0.0 for t in scene.tiles}
    for tid, count in accepted.items():
        estimates[tid] = float(count)
    for tid in realized:
        estimates[tid] = float(_ground_count(scene, config, seed, tile_by_id[tid]))
    report = RunReport(
        method="tiansuan",
        seed=seed,
        cmae=cmae(estimates, scene.ground_truth),
        selected_tile_size=s_best,
        tiles_total=len(scene.tiles),
        tiles_processed=len(processed),
        tiles_transmitted=len(realized),
        tiles_space_counted=len(accepted),
        tiles_discarded=len(processed) - len(accepted) - len(realized),
        tiles_unprocessed=len(scene.tiles) - len(processed),
        tiles_deduped=0,
        bytes_downlinked=bytes_used,
        joules_capture=ledger.spent("capture"),
        joules_compute=ledger.spent("compute"),
        joules_aggregate=ledger.spent("aggregate"),
        joules_downlink=ledger.spent("downlink"),
        effective_conf_q=None,
        wall_time_s=time.perf_counter() - t0,
    )
    _assert_partition(report)
    return report


def run_baseline(scene: Scene, config, seed: int, baseline: str) -> RunReport:
    """Run one of the reference methods for one seed."""
    if baseline == "space_only":
        return _run_space_only(scene, config, seed)
    if baseline == "ground_only":
        return _run_ground_only(scene, config, seed)
    if baseline == "tiansuan":
        return _run_tiansuan(scene, config, seed)
    if baseline == "kodan":
        return _run_fused(scene, config, seed, "kodan")
    raise ValidationError(
        f"unknown baseline {baseline!r}; expected one of {BASELINES}"
    )


# --- drivers ---------------------------------------------------------------


def build_scene(config, seed: int) -> Scene:
    """Materialize the scene one run sees.

    Synthetic scenes fold the run seed into the generation seed, so every
    seed explores a fresh scene; manifest scenes are fixed data and identical
    for all seeds.
    """
    if config.manifest_path is not None:
        return load_manifest(config.manifest_path)
    spec = replace(config.scene_spec, seed=mix_seed(config.scene_spec.seed, seed))
    return generate_scene(spec)


def run_method(config, seed: int, method: str) -> RunReport:
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}; expected one of {METHODS}")
    scene = build_scene(config, seed)
    if method == "targetfuse":
        return run_track(scene, config, seed)
    return run_baseline(scene, config, seed, method)


SWEEP_AXES = ("bandwidth", "contact_time", "energy", "hardware", "counter", "k")


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: str
    report: RunReport


def apply_axis(config, axis: str, value):
    """Return a config with one swept knob changed."""
    from .detector import counter_preset
    from .energy import hardware_preset

    if axis == "bandwidth":  # megabits per second
        return config.with_updates(
            window=replace(config.window, rate_bps=float(value) * 1e6)
        )
    if axis == "contact_time":  # seconds
        return config.with_updates(
            window=replace(config.window, duration_s=float(value))
        )
    if axis == "energy":  # joules of total budget
        return config.with_updates(budget_joules=float(value))
    if axis == "hardware":
        return config.with_updates(hardware=hardware_preset(str(value)))
    if axis == "counter":
        return config.with_updates(space_counter=counter_preset(str(value)))
    if axis == "k":
        return config.with_updates(dedup_k=int(value))
    raise ValidationError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def _sweep_cell(payload) -> SweepRow:
    config, axis, value, method, seed = payload
    cfg = apply_axis(config, axis, value)
    return SweepRow(axis=axis, value=str(value), report=run_method(cfg, seed, method))


def sweep(config, axis: str, values: Sequence, jobs: int = 1) -> list[SweepRow]:
    """Cross product of axis values x methods x config.seeds.

    Cells are independent and individually seeded, so the row list is
    identical whatever ``jobs`` is; parallel execution only reorders the
    work, not the output.
    """
    if axis not in SWEEP_AXES:
        raise ValidationError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    if not values:
        raise ValidationError("values must be non-empty")
    if jobs < 1:
        raise ValidationError("jobs must be >= 1")
    cells = [
        (config, axis, value, method, seed)
        for value in values
        for method in METHODS
        for seed in config.seeds
    ]
    if jobs == 1:
        return [_sweep_cell(c) for c in cells]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_cell, cells, chunksize=1))
