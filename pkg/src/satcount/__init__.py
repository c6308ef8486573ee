"""Simulator and scheduling library for satellite-ground collaborative
object counting under energy and bandwidth budgets."""

from .config import ScenarioConfig, default_config, load_config, parse_config
from .dedup import DedupResult, canonicalize, color_moments, deduplicate, kmeans
from .detector import (
    COUNTER_PRESETS,
    CounterProfile,
    Detection,
    counter_preset,
    detect,
    map_at,
    nms,
    roi_filter,
)
from .downlink import (
    ContactWindow,
    DownlinkPlan,
    DownlinkPolicy,
    ScoredTile,
    link_capacity,
    select_policy_curve,
    throttle,
)
from .energy import (
    HARDWARE_PRESETS,
    BudgetExhausted,
    EnergyLedger,
    HardwareProfile,
    compute_energy,
    daily_budget,
    downlink_energy,
    hardware_preset,
)
from .errors import ManifestError, MetricUndefinedError, ValidationError
from .pipeline import (
    METHODS,
    RunReport,
    build_scene,
    cmae,
    run_baseline,
    run_method,
    run_track,
    sweep,
)
from .scene import (
    Scene,
    SceneSpec,
    Tile,
    generate_scene,
    load_manifest,
    retiled,
    save_manifest,
)
from .tiling import brute_force_tile_size, execution_cost, optimal_tile_size

__version__ = "0.1.0"

__all__ = [
    "BudgetExhausted",
    "COUNTER_PRESETS",
    "ContactWindow",
    "CounterProfile",
    "DedupResult",
    "Detection",
    "DownlinkPlan",
    "DownlinkPolicy",
    "EnergyLedger",
    "HARDWARE_PRESETS",
    "HardwareProfile",
    "METHODS",
    "ManifestError",
    "MetricUndefinedError",
    "RunReport",
    "Scene",
    "SceneSpec",
    "ScenarioConfig",
    "ScoredTile",
    "Tile",
    "ValidationError",
    "brute_force_tile_size",
    "build_scene",
    "canonicalize",
    "cmae",
    "color_moments",
    "compute_energy",
    "counter_preset",
    "daily_budget",
    "deduplicate",
    "default_config",
    "detect",
    "downlink_energy",
    "execution_cost",
    "generate_scene",
    "hardware_preset",
    "kmeans",
    "link_capacity",
    "load_config",
    "load_manifest",
    "map_at",
    "nms",
    "optimal_tile_size",
    "parse_config",
    "retiled",
    "roi_filter",
    "run_baseline",
    "run_method",
    "run_track",
    "save_manifest",
    "select_policy_curve",
    "sweep",
    "throttle",
]
