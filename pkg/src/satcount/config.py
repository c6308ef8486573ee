"""Scenario configuration: defaults, validation, and the config file format.

A scenario bundles everything one run needs: the scene source (a synthetic
generator spec or a manifest path), both counter profiles, the hardware and
energy model, the contact window, the downlink policy, and the knobs for
tiling, deduplication, and the region-of-interest filter.

Configuration is explicit-only: files are plain YAML, unknown keys are
validation errors rather than silently ignored, and environment variables
override nothing.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace

import yaml

from .detector import CounterProfile, counter_preset
from .downlink import ContactWindow, DownlinkPolicy
from .energy import HardwareProfile, hardware_preset
from .errors import ValidationError
from .pipeline import METHODS
from .scene import SceneSpec

ATTRIBUTION_MODES = ("representative", "member")
GREEDY_MODES = ("stop", "skip")


def _default_space_counter() -> CounterProfile:
    return counter_preset("yolov3-tiny")


def _default_ground_counter() -> CounterProfile:
    return counter_preset("yolov3")


def _default_hardware() -> HardwareProfile:
    return hardware_preset("rpi4")


def _default_policy() -> DownlinkPolicy:
    # scenario-level band; the DownlinkPolicy type itself defaults to the
    # wider (0.3, 0.8) band, which the synthetic confidence law cannot fill
    return DownlinkPolicy(kind="dynamic_conf", conf_p=0.15, conf_q=0.40)


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one simulated scenario."""

    scene_spec: SceneSpec | None = field(default_factory=SceneSpec)
    manifest_path: str | None = None
    space_counter: CounterProfile = field(default_factory=_default_space_counter)
    ground_counter: CounterProfile = field(default_factory=_default_ground_counter)
    hardware: HardwareProfile = field(default_factory=_default_hardware)
    window: ContactWindow = field(default_factory=ContactWindow)
    policy: DownlinkPolicy = field(default_factory=_default_policy)
    harvest_joules: float = 260_000.0
    compute_fraction: float = 0.577
    budget_joules: float | None = None
    compute_budget_joules: float | None = None
    downlink_budget_joules: float | None = None
    dedup_enabled: bool = True
    dedup_k: int | None = None
    dedup_attribution: str = "representative"
    s_min: int = 400
    s_max: int = 900
    epsilon: int = 10
    calibration_sample: int = 64
    retile: bool = True
    roi_floor: float = 0.1
    tiansuan_threshold: float | None = None
    throttle_greedy: str = "stop"
    method: str = "targetfuse"
    seeds: tuple[int, ...] = (1, 2, 3)

    def __post_init__(self) -> None:
        if (self.scene_spec is None) == (self.manifest_path is None):
            raise ValidationError(
                "exactly one scene source must be set: scene_spec or manifest_path"
            )
        if self.space_counter.tier != "space":
            raise ValidationError(
                f"space counter {self.space_counter.name!r} has tier "
                f"{self.space_counter.tier!r}, expected 'space'"
            )
        if self.ground_counter.tier != "ground":
            raise ValidationError(
                f"ground counter {self.ground_counter.name!r} has tier "
                f"{self.ground_counter.tier!r}, expected 'ground'"
            )
        if self.ground_counter.map_peak <= self.space_counter.map_peak:
            raise ValidationError(
                "ground counter peak accuracy must exceed the space counter's"
            )
        # fail fast if the space counter has no latency entry for this board
        self.space_counter.latency_on(self.hardware.name)
        if self.harvest_joules <= 0:
            raise ValidationError("harvest_joules must be > 0")
        if not 0 < self.compute_fraction <= 1:
            raise ValidationError("compute_fraction must be in (0, 1]")
        for label in ("budget_joules", "compute_budget_joules", "downlink_budget_joules"):
            value = getattr(self, label)
            if value is not None and value < 0:
                raise ValidationError(f"{label} must be >= 0")
        if self.dedup_k is not None and self.dedup_k < 1:
            raise ValidationError("dedup_k must be >= 1")
        if self.dedup_attribution not in ATTRIBUTION_MODES:
            raise ValidationError(
                f"dedup_attribution must be one of {ATTRIBUTION_MODES}"
            )
        if not 1 <= self.s_min <= self.s_max:
            raise ValidationError("tile search bounds must satisfy 1 <= s_min <= s_max")
        if self.epsilon < 1:
            raise ValidationError("epsilon must be >= 1")
        if self.calibration_sample < 1:
            raise ValidationError("calibration_sample must be >= 1")
        if not 0.0 <= self.roi_floor <= 1.0:
            raise ValidationError("roi_floor must be in [0, 1]")
        if self.tiansuan_threshold is not None and not 0.0 <= self.tiansuan_threshold <= 1.0:
            raise ValidationError("tiansuan_threshold must be in [0, 1]")
        if self.throttle_greedy not in GREEDY_MODES:
            raise ValidationError(f"throttle_greedy must be one of {GREEDY_MODES}")
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}")
        if not self.seeds:
            raise ValidationError("seeds must be non-empty")
        if any(not isinstance(s, int) or isinstance(s, bool) for s in self.seeds):
            raise ValidationError("seeds must be integers")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    def with_updates(self, **changes) -> "ScenarioConfig":
        """Copy with fields replaced; the copy is re-validated."""
        return replace(self, **changes)


def default_config() -> ScenarioConfig:
    return ScenarioConfig()


# --- config file parsing -----------------------------------------------------


def _check_keys(section: dict, allowed: tuple, path: str) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ValidationError(
            f"unknown config key(s) under {path!r}: {', '.join(unknown)}"
        )


def _require_mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ValidationError(f"config section {path!r} must be a mapping")
    return value


_SCENE_KEYS = (
    "frames_per_track",
    "frame_width",
    "frame_height",
    "num_contexts",
    "duplicate_fraction",
    "objects_per_tile_mean",
    "bytes_per_pixel",
    "compression_ratio",
    "tile_size",
    "seed",
)

_COUNTER_KEYS = (
    "preset",
    "name",
    "tier",
    "input_size",
    "map_peak",
    "optimal_tile",
    "curve_width",
    "fp_rate",
    "confidence_sharpness",
    "per_tile_latency",
)

_HARDWARE_KEYS = (
    "preset",
    "name",
    "compute_watts",
    "radio_watts",
    "capture_joules_per_frame",
    "aggregate_joules_per_track",
)

_ENERGY_KEYS = (
    "harvest_joules",
    "compute_fraction",
    "budget_joules",
    "compute_budget_joules",
    "downlink_budget_joules",
)

_WINDOW_KEYS = ("duration_s", "rate_bps")
_POLICY_KEYS = ("kind", "conf_p", "conf_q")
_DEDUP_KEYS = ("enabled", "k", "attribution")
_TILING_KEYS = ("s_min", "s_max", "epsilon", "calibration_sample", "retile")

_TOP_KEYS = (
    "scene",
    "space_counter",
    "ground_counter",
    "hardware",
    "energy",
    "window",
    "policy",
    "dedup",
    "tiling",
    "roi_floor",
    "tiansuan_threshold",
    "throttle_greedy",
    "method",
    "seeds",
)


def _parse_scene(section: dict) -> tuple[SceneSpec | None, str | None]:
    if "manifest" in section:
        if len(section) > 1:
            raise ValidationError(
                "scene.manifest cannot be combined with generator fields"
            )
        return None, str(section["manifest"])
    _check_keys(section, _SCENE_KEYS, "scene")
    return SceneSpec(**section), None


def _parse_counter(section: dict, path: str) -> CounterProfile:
    _check_keys(section, _COUNTER_KEYS, path)
    section = dict(section)
    preset = section.pop("preset", None)
    if "per_tile_latency" in section:
        latency = _require_mapping(section["per_tile_latency"], f"{path}.per_tile_latency")
        section["per_tile_latency"] = {str(k): float(v) for k, v in latency.items()}
    if preset is not None:
        return dataclasses.replace(counter_preset(str(preset)), **section)
    return CounterProfile(**section)


def _parse_hardware(section: dict) -> HardwareProfile:
    _check_keys(section, _HARDWARE_KEYS, "hardware")
    section = dict(section)
    preset = section.pop("preset", None)
    if preset is not None:
        return dataclasses.replace(hardware_preset(str(preset)), **section)
    return HardwareProfile(**section)


def parse_config(data: dict) -> ScenarioConfig:
    """Build a validated ScenarioConfig from a parsed config document."""
    data = _require_mapping(data, "<top level>")
    _check_keys(data, _TOP_KEYS, "<top level>")
    kwargs: dict = {}

    if "scene" in data:
        spec, manifest = _parse_scene(_require_mapping(data["scene"], "scene"))
        kwargs["scene_spec"] = spec
        kwargs["manifest_path"] = manifest
    if "space_counter" in data:
        kwargs["space_counter"] = _parse_counter(
            _require_mapping(data["space_counter"], "space_counter"), "space_counter"
        )
    if "ground_counter" in data:
        kwargs["ground_counter"] = _parse_counter(
            _require_mapping(data["ground_counter"], "ground_counter"), "ground_counter"
        )
    if "hardware" in data:
        kwargs["hardware"] = _parse_hardware(_require_mapping(data["hardware"], "hardware"))
    if "energy" in data:
        section = _require_mapping(data["energy"], "energy")
        _check_keys(section, _ENERGY_KEYS, "energy")
        kwargs.update(section)
    if "window" in data:
        section = _require_mapping(data["window"], "window")
        _check_keys(section, _WINDOW_KEYS, "window")
        kwargs["window"] = ContactWindow(**section)
    if "policy" in data:
        section = _require_mapping(data["policy"], "policy")
        _check_keys(section, _POLICY_KEYS, "policy")
        kwargs["policy"] = DownlinkPolicy(**section)
    if "dedup" in data:
        section = _require_mapping(data["dedup"], "dedup")
        _check_keys(section, _DEDUP_KEYS, "dedup")
        if "enabled" in section:
            kwargs["dedup_enabled"] = bool(section["enabled"])
        if "k" in section:
            kwargs["dedup_k"] = None if section["k"] is None else int(section["k"])
        if "attribution" in section:
            kwargs["dedup_attribution"] = str(section["attribution"])
    if "tiling" in data:
        section = _require_mapping(data["tiling"], "tiling")
        _check_keys(section, _TILING_KEYS, "tiling")
        kwargs.update(section)
    for key in ("roi_floor", "tiansuan_threshold", "throttle_greedy", "method"):
        if key in data:
            kwargs[key] = data[key]
    if "seeds" in data:
        seeds = data["seeds"]
        if not isinstance(seeds, (list, tuple)):
            raise ValidationError("seeds must be a list of integers")
        kwargs["seeds"] = tuple(seeds)

    try:
        return ScenarioConfig(**kwargs)
    except TypeError as exc:
        raise ValidationError(f"invalid config: {exc}") from exc


def load_config(path: str) -> ScenarioConfig:
    """Parse and validate a YAML scenario file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ValidationError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ValidationError(f"config file {path} is not valid YAML: {exc}") from exc
    if data is None:
        data = {}
    return parse_config(data)


DEFAULT_CONFIG_YAML = """\
# Scenario configuration. Every key is optional; omitted keys take the
# defaults shown here. Unknown keys are rejected.
scene:
  frames_per_track: 12
  frame_width: 3000
  frame_height: 3000
  num_contexts: 100
  duplicate_fraction: 0.5
  objects_per_tile_mean: 10.0
  bytes_per_pixel: 3
  compression_ratio: 10.0
  tile_size: 600
  seed: 0
# To run on a saved scene instead, replace the block above with:
# scene:
#   manifest: scene.jsonl
space_counter:
  preset: yolov3-tiny
ground_counter:
  preset: yolov3
hardware:
  preset: rpi4
energy:
  harvest_joules: 260000.0
  compute_fraction: 0.577
  budget_joules: null            # null = harvest * fraction
  compute_budget_joules: null    # optional per-activity cap
  downlink_budget_joules: null
window:
  duration_s: 360.0
  rate_bps: 50000000.0
policy:
  kind: dynamic_conf             # low_conf_first | fixed_conf | dynamic_conf
  conf_p: 0.15
  conf_q: 0.4
dedup:
  enabled: true
  k: null                        # null = one cluster per scene context
  attribution: representative    # representative | member
tiling:
  s_min: 400
  s_max: 900
  epsilon: 10
  calibration_sample: 64
  retile: true
roi_floor: 0.1
tiansuan_threshold: null         # null = policy conf_q
throttle_greedy: stop            # stop | skip
method: targetfuse
seeds: [1, 2, 3]
"""
