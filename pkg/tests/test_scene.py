"""Scene generation, tiling geometry, and manifest interchange."""

import json

import numpy as np
import pytest

from satcount.dedup import color_moments
from satcount.errors import ManifestError, ValidationError
from satcount.scene import (
    CONTEXT_RADIUS,
    Frame,
    Scene,
    SceneSpec,
    Tile,
    dumps_manifest,
    enumerate_tiles,
    generate_scene,
    load_manifest,
    retiled,
    save_manifest,
)


def small_spec(**overrides):
    base = dict(
        frames_per_track=10,
        frame_width=1200,
        frame_height=1200,
        num_contexts=4,
        duplicate_fraction=0.5,
        objects_per_tile_mean=5.0,
        tile_size=600,
        seed=0,
    )
    base.update(overrides)
    return SceneSpec(**base)


def test_spec_validation():
    with pytest.raises(ValidationError):
        small_spec(duplicate_fraction=1.5)
    with pytest.raises(ValidationError):
        small_spec(num_contexts=0)
    with pytest.raises(ValidationError):
        small_spec(frame_width=0)
    with pytest.raises(ValidationError):
        small_spec(compression_ratio=0.0)


def test_half_duplicate_fraction_marks_five_of_ten_frames():
    scene = generate_scene(small_spec())
    revisits = [f for f in scene.frames if f.revisit_of is not None]
    assert len(scene.frames) == 10
    assert len(revisits) == 5
    for f in revisits:
        assert f.revisit_of in {fr.id for fr in scene.frames if fr.revisit_of is None}


def test_zero_duplicate_fraction_marks_none():
    scene = generate_scene(small_spec(duplicate_fraction=0.0))
    assert all(f.revisit_of is None for f in scene.frames)


def test_generation_is_deterministic():
    a = generate_scene(small_spec(seed=42))
    b = generate_scene(small_spec(seed=42))
    assert dumps_manifest(a) == dumps_manifest(b)
    c = generate_scene(small_spec(seed=43))
    assert dumps_manifest(a) != dumps_manifest(c)


def test_tile_ids_sequential_in_capture_order():
    scene = generate_scene(small_spec())
    assert [t.id for t in scene.tiles] == list(range(len(scene.tiles)))
    capture_rank = {f.id: f.capture_index for f in scene.frames}
    ranks = [capture_rank[t.frame_id] for t in scene.tiles]
    assert ranks == sorted(ranks)


def test_revisit_tiles_copy_counts_and_context():
    scene = generate_scene(small_spec())
    tiles_by_frame = {}
    for t in scene.tiles:
        tiles_by_frame.setdefault(t.frame_id, []).append(t)
    for frame in scene.frames:
        if frame.revisit_of is None:
            continue
        origin = tiles_by_frame[frame.revisit_of]
        for src, dup in zip(origin, tiles_by_frame[frame.id]):
            assert dup.g == src.g
            assert dup.context_id == src.context_id
            drift = np.linalg.norm(dup.feature - src.feature)
            assert drift <= CONTEXT_RADIUS / 2.0 + 1e-9


def test_same_context_tiles_share_ground_truth():
    scene = generate_scene(small_spec())
    by_context = {}
    for t in scene.tiles:
        by_context.setdefault(t.context_id, set()).add(t.g)
    assert all(len(gs) == 1 for gs in by_context.values())


def test_context_features_stay_within_cluster_radius():
    scene = generate_scene(small_spec())
    originals = [t for t in scene.tiles if t.frame_id < 5]
    by_context = {}
    for t in originals:
        by_context.setdefault(t.context_id, []).append(t.feature)
    for features in by_context.values():
        for a in features:
            for b in features:
                assert np.linalg.norm(a - b) <= 2.0 * CONTEXT_RADIUS + 1e-9


def test_enumerate_tiles_exact_and_clipped():
    frame = Frame(id=0, width=3000, height=3000, capture_index=0)
    assert len(enumerate_tiles(frame, 1000)) == 9
    clipped = enumerate_tiles(frame, 1024)
    assert len(clipped) == 9
    assert sum(r.width * r.height for r in clipped) == 3000 * 3000
    big = Frame(id=0, width=4000, height=4000, capture_index=0)
    assert len(enumerate_tiles(big, 416)) == 100


def test_enumerate_tiles_is_a_partition():
    frame = Frame(id=0, width=500, height=700, capture_index=0)
    regions = enumerate_tiles(frame, 256)
    covered = np.zeros((700, 500), dtype=np.int32)
    for r in regions:
        covered[r.y : r.y + r.height, r.x : r.x + r.width] += 1
    assert covered.min() == 1 and covered.max() == 1


def test_enumerate_tiles_validation():
    frame = Frame(id=0, width=500, height=700, capture_index=0)
    with pytest.raises(ValidationError):
        enumerate_tiles(frame, 0)


def test_tile_bytes_formula():
    scene = generate_scene(small_spec())
    tile = scene.tiles[0]
    assert scene.tile_bytes(tile) == round(600 * 600 * 3 / 10.0)


def test_retiled_changes_granularity():
    scene = generate_scene(small_spec())
    finer = retiled(scene, 400)
    assert finer.spec.tile_size == 400
    assert len(finer.tiles) == 9 * len(finer.frames)
    assert retiled(scene, 600) is scene


def test_retiled_requires_generating_spec(tmp_path):
    scene = generate_scene(small_spec())
    path = tmp_path / "scene.jsonl"
    save_manifest(scene, path)
    loaded = load_manifest(path)
    with pytest.raises(ValidationError):
        retiled(loaded, 400)


def test_manifest_round_trip_is_byte_identical(tmp_path):
    scene = generate_scene(small_spec())
    path = tmp_path / "scene.jsonl"
    save_manifest(scene, path)
    loaded = load_manifest(path)
    assert dumps_manifest(loaded) == path.read_text(encoding="utf-8")
    assert len(loaded.tiles) == len(scene.tiles)
    assert loaded.ground_truth == scene.ground_truth
    for a, b in zip(scene.tiles, loaded.tiles):
        assert np.allclose(a.feature, b.feature)


def test_manifest_frames_inferred_from_extents(tmp_path):
    scene = generate_scene(small_spec())
    path = tmp_path / "scene.jsonl"
    save_manifest(scene, path)
    loaded = load_manifest(path)
    assert [f.id for f in loaded.frames] == [f.id for f in scene.frames]
    for f in loaded.frames:
        assert f.width == 1200 and f.height == 1200


def write_lines(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


def minimal_record(tile_id, **overrides):
    record = {
        "tile_id": tile_id,
        "frame_id": 0,
        "x": 0,
        "y": 0,
        "size": 100,
        "g": 1,
        "feature": [0.0] * 9,
    }
    record.update(overrides)
    return record


def test_three_record_manifest_loads_three_tiles(tmp_path):
    path = tmp_path / "m.jsonl"
    write_lines(path, [minimal_record(i, x=100 * i) for i in range(3)])
    scene = load_manifest(path)
    assert len(scene.tiles) == 3
    assert len(scene.frames) == 1


def test_manifest_missing_count_field_names_it(tmp_path):
    path = tmp_path / "m.jsonl"
    record = minimal_record(0)
    del record["g"]
    write_lines(path, [minimal_record(1), record])
    with pytest.raises(ManifestError) as info:
        load_manifest(path)
    assert "'g'" in str(info.value)
    assert "line 2" in str(info.value)


def test_manifest_invalid_json_reports_line(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text('{"tile_id": 0}\nnot json\n', encoding="utf-8")
    with pytest.raises(ManifestError) as info:
        load_manifest(path)
    assert info.value.line_no in (1, 2)


def test_manifest_duplicate_tile_id_rejected(tmp_path):
    path = tmp_path / "m.jsonl"
    write_lines(path, [minimal_record(0), minimal_record(0, x=100)])
    with pytest.raises(ManifestError) as info:
        load_manifest(path)
    assert "duplicate" in str(info.value)


def test_manifest_feature_derived_from_raster_stats(tmp_path):
    path = tmp_path / "m.jsonl"
    stats = [[10.0, 20.0, 30.0], [5.0, 5.0], [0.0, 100.0]]
    record = minimal_record(0)
    del record["feature"]
    record["raster_stats"] = stats
    write_lines(path, [record])
    scene = load_manifest(path)
    assert np.allclose(scene.tiles[0].feature, color_moments(stats))


def test_manifest_without_feature_or_raster_rejected(tmp_path):
    path = tmp_path / "m.jsonl"
    record = minimal_record(0)
    del record["feature"]
    write_lines(path, [record])
    with pytest.raises(ManifestError) as info:
        load_manifest(path)
    assert "feature" in str(info.value)


def test_empty_manifest_rejected(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text("", encoding="utf-8")
    with pytest.raises(ValidationError):
        load_manifest(path)


def test_single_frame_track_has_no_revisits():
    scene = generate_scene(small_spec(frames_per_track=1, duplicate_fraction=1.0))
    assert len(scene.frames) == 1
    assert scene.frames[0].revisit_of is None
