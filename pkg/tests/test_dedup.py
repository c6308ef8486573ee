"""Color-moment features, k-means clustering, and duplicate suppression."""

import math

import numpy as np
import pytest

from satcount.dedup import (
    canonicalize,
    color_moments,
    deduplicate,
    inertia,
    kmeans,
)
from satcount.errors import ValidationError
from satcount.scene import Tile, generate_scene, SceneSpec


def naive_moments(channel):
    # independent three-pass oracle
    n = len(channel)
    mean = sum(channel) / n
    var = sum((x - mean) ** 2 for x in channel) / n
    third = sum((x - mean) ** 3 for x in channel) / n
    return mean, math.sqrt(var), math.copysign(abs(third) ** (1.0 / 3.0), third)


def test_constant_channel_has_zero_spread():
    feature = color_moments([[7.0, 7.0, 7.0], [1.0], [2.0, 2.0]])
    assert feature[0] == pytest.approx(7.0)
    assert feature[1] == pytest.approx(0.0)
    assert feature[2] == pytest.approx(0.0)


def test_two_pixel_symmetric_channel():
    feature = color_moments([[0.0, 2.0], [0.0, 2.0], [0.0, 2.0]])
    for base in (0, 3, 6):
        assert feature[base + 0] == pytest.approx(1.0)
        assert feature[base + 1] == pytest.approx(1.0)
        assert feature[base + 2] == pytest.approx(0.0)


def test_moments_match_naive_oracle():
    rng = np.random.default_rng(3)
    for _ in range(50):
        channels = [list(rng.uniform(0, 255, size=64)) for _ in range(3)]
        feature = color_moments(channels)
        for c, channel in enumerate(channels):
            want = naive_moments(channel)
            for j in range(3):
                got = feature[3 * c + j]
                assert got == pytest.approx(want[j], rel=1e-9, abs=1e-9)


def test_moments_are_pixel_order_invariant():
    # a flipped image permutes pixels; moments cannot tell the difference
    channels = [[1.0, 5.0, 9.0], [0.0, 2.0, 4.0], [3.0, 3.0, 8.0]]
    flipped = [list(reversed(ch)) for ch in channels]
    assert np.allclose(color_moments(channels), color_moments(flipped))


def test_moments_validation():
    with pytest.raises(ValidationError):
        color_moments([[1.0], [2.0]])
    with pytest.raises(ValidationError):
        color_moments([[1.0], [2.0], []])


def test_canonicalize_identity_group_is_identity():
    feature = np.arange(9, dtype=float)
    assert np.allclose(canonicalize(feature), feature)


def test_canonicalize_picks_orbit_minimum():
    rng = np.random.default_rng(8)
    # 8 fixed permutations standing in for rotations/flips of the channels
    perms = [rng.permutation(9) for _ in range(7)]
    group = [lambda f: f] + [
        (lambda f, p=p: np.asarray(f)[p]) for p in perms
    ]
    for _ in range(20):
        feature = rng.normal(size=9)
        got = canonicalize(feature, group)
        orbit = [tuple(np.asarray(t(feature), dtype=float)) for t in group]
        assert tuple(got) == min(orbit)


def test_canonicalize_agrees_across_orbit_members():
    rng = np.random.default_rng(12)
    perm = np.arange(9)[::-1]  # an involution, so the two-element set is a group
    group = [lambda f: f, lambda f: np.asarray(f)[perm]]
    feature = rng.normal(size=9)
    other = np.asarray(feature)[perm]
    assert np.allclose(canonicalize(feature, group), canonicalize(other, group))


def test_canonicalize_validates_shape():
    with pytest.raises(ValidationError):
        canonicalize(np.zeros(5))


def blob_features(rng, centers, per_blob, spread=0.5):
    features, labels = [], []
    for label, center in enumerate(centers):
        for _ in range(per_blob):
            features.append(center + rng.normal(0, spread, size=9))
            labels.append(label)
    return np.array(features), labels


def test_kmeans_recovers_separated_blobs():
    rng = np.random.default_rng(21)
    centers = [np.zeros(9), np.full(9, 40.0)]
    features, labels = blob_features(rng, centers, per_blob=30)
    assignment, centroids = kmeans(features, 2, np.random.default_rng(0))
    # agreement up to relabeling
    first = assignment[0]
    mapped = [1 if a != first else 0 for a in assignment]
    want = [1 if lb != labels[0] else 0 for lb in labels]
    assert mapped == want
    assert len(centroids) == 2


def test_kmeans_saturated_has_zero_inertia():
    rng = np.random.default_rng(4)
    features = rng.normal(size=(12, 9))
    assignment, centroids = kmeans(features, 12, np.random.default_rng(0))
    assert sorted(assignment) == list(range(12))
    assert inertia(features, assignment, centroids) == pytest.approx(0.0)


def test_kmeans_single_cluster_is_mean():
    rng = np.random.default_rng(5)
    features = rng.normal(size=(40, 9))
    assignment, centroids = kmeans(features, 1, np.random.default_rng(0))
    assert set(assignment) == {0}
    assert np.allclose(centroids[0], features.mean(axis=0))


def test_kmeans_inertia_nonincreasing_with_iterations():
    rng = np.random.default_rng(6)
    features = rng.normal(size=(60, 9)) * 3.0
    values = []
    for max_iter in range(1, 7):
        assignment, centroids = kmeans(
            features, 5, np.random.default_rng(0), max_iter=max_iter
        )
        values.append(inertia(features, assignment, centroids))
    for earlier, later in zip(values, values[1:]):
        assert later <= earlier + 1e-9


def test_kmeans_assignment_is_nearest_centroid():
    rng = np.random.default_rng(14)
    features = rng.normal(size=(50, 9))
    assignment, centroids = kmeans(features, 4, np.random.default_rng(1))
    centroids = np.asarray(centroids)
    for i, f in enumerate(features):
        dists = ((centroids - f) ** 2).sum(axis=1)
        assert dists[assignment[i]] == pytest.approx(float(dists.min()))


def test_kmeans_deterministic_given_rng_seed():
    rng = np.random.default_rng(15)
    features = rng.normal(size=(30, 9))
    a1, c1 = kmeans(features, 3, np.random.default_rng(7))
    a2, c2 = kmeans(features, 3, np.random.default_rng(7))
    assert np.array_equal(a1, a2)
    assert np.allclose(c1, c2)


def test_kmeans_random_init_variant():
    rng = np.random.default_rng(16)
    features = rng.normal(size=(30, 9))
    assignment, centroids = kmeans(
        features, 3, np.random.default_rng(2), init="random"
    )
    assert len(assignment) == 30
    with pytest.raises(ValidationError):
        kmeans(features, 3, np.random.default_rng(2), init="fancy")


def test_kmeans_validation():
    features = np.zeros((5, 9))
    with pytest.raises(ValidationError):
        kmeans(features, 0, np.random.default_rng(0))
    with pytest.raises(ValidationError):
        kmeans(features, 6, np.random.default_rng(0))
    with pytest.raises(ValidationError):
        kmeans(features, 2, np.random.default_rng(0), max_iter=0)


def make_tile(tile_id, feature, g=1):
    return Tile(
        id=tile_id, frame_id=0, x=0, y=0, size=100, g=g, feature=np.asarray(feature)
    )


def test_deduplicate_identical_tiles_single_representative():
    tiles = [make_tile(i, np.full(9, 2.0)) for i in range(6)]
    result = deduplicate(tiles, 1, np.random.default_rng(0))
    assert len(result.representatives) == 1
    rep = result.representatives[0]
    assert rep == 0  # lowest tile id wins the tie
    assert result.multiplicity[rep] == 6
    assert all(result.representative_of[t.id] == rep for t in tiles)


def test_deduplicate_distinct_tiles_all_kept():
    tiles = [make_tile(i, np.full(9, 50.0 * i)) for i in range(5)]
    result = deduplicate(tiles, 5, np.random.default_rng(0))
    assert sorted(result.representatives) == [0, 1, 2, 3, 4]
    assert all(result.multiplicity[r] == 1 for r in result.representatives)


def test_deduplicate_multiplicities_partition_input():
    rng = np.random.default_rng(23)
    tiles = [make_tile(i, rng.normal(size=9)) for i in range(40)]
    result = deduplicate(tiles, 7, np.random.default_rng(3))
    assert sum(result.multiplicity.values()) == 40
    assert set(result.representative_of) == {t.id for t in tiles}
    for tid, rep in result.representative_of.items():
        assert result.assignment[tid] == result.assignment[rep]


def test_deduplicate_representative_is_nearest_to_centroid():
    tiles = [
        make_tile(0, np.zeros(9)),
        make_tile(1, np.full(9, 0.1)),
        make_tile(2, np.full(9, 30.0)),
        make_tile(3, np.full(9, 30.2)),
    ]
    result = deduplicate(tiles, 2, np.random.default_rng(0))
    # each cluster's representative minimizes distance to its centroid
    assert set(result.representatives) <= {0, 1, 2, 3}
    assert len(result.representatives) == 2
    groups = {}
    for tid, rep in result.representative_of.items():
        groups.setdefault(rep, []).append(tid)
    assert sorted(sorted(v) for v in groups.values()) == [[0, 1], [2, 3]]


def test_deduplicate_requires_features():
    bare = Tile(id=0, frame_id=0, x=0, y=0, size=100, g=1)
    with pytest.raises(ValidationError):
        deduplicate([bare], 1, np.random.default_rng(0))


def test_representatives_cover_every_occupied_context():
    spec = SceneSpec(seed=0)
    scene = generate_scene(spec)
    result = deduplicate(scene.tiles, spec.num_contexts, np.random.default_rng(0))
    by_id = {t.id: t for t in scene.tiles}
    rep_contexts = {by_id[r].context_id for r in result.representatives}
    occupied = {t.context_id for t in scene.tiles}
    assert rep_contexts == occupied
