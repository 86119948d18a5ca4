from __future__ import annotations

import numpy as np
import pytest

from quadplan.errors import InvalidInputError
from quadplan.models import DetectorMethod
from quadplan.perception import (
    Cluster,
    benchmark_detectors,
    camera_rays,
    cloud_distance,
    cluster_points,
    convert_pc_to_box,
    corner_distances,
    detect_obstacles_8corner,
    detect_obstacles_pointcloud_baseline,
    merge_boxes,
    render_depth_scan,
    synthesize_frames,
)
from quadplan.planning.geometry import Cuboid, cuboid_distance
from quadplan.schemas import CameraModel, DetectionParams, Scenario

KNOWN = Cuboid((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
DELTA = 0.3
EXACT_CAMERA = CameraModel(noise_sigma_m=0.0)


def box_cluster(low, high) -> Cluster:
    corners = Cuboid(low, high).corners()
    return Cluster(points=corners, indices=np.arange(len(corners)))


def dense_box_cluster(low, high, spacing: float = 0.05) -> Cluster:
    points = surface_grid(low, high, spacing)
    return Cluster(points=points, indices=np.arange(len(points)))


def surface_grid(low, high, spacing: float = 0.05) -> np.ndarray:
    """Gitterpunkte auf allen sechs Seitenflächen eines Quaders."""
    low, high = np.asarray(low, dtype=float), np.asarray(high, dtype=float)
    axes = [np.linspace(lo, hi, int(round((hi - lo) / spacing)) + 1) for lo, hi in zip(low, high)]
    faces = []
    for axis in range(3):
        others = [i for i in range(3) if i != axis]
        u, v = np.meshgrid(axes[others[0]], axes[others[1]], indexing="ij")
        for level in (low[axis], high[axis]):
            face = np.empty((u.size, 3))
            face[:, axis] = level
            face[:, others[0]] = u.ravel()
            face[:, others[1]] = v.ravel()
            faces.append(face)
    return np.vstack(faces)


def union_find_components(points: np.ndarray, radius: float) -> list[set[int]]:
    parent = list(range(len(points)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            if np.linalg.norm(points[i] - points[j]) <= radius:
                parent[find(i)] = find(j)
    groups: dict[int, set[int]] = {}
    for i in range(len(points)):
        groups.setdefault(find(i), set()).add(i)
    return list(groups.values())


def test_camera_rays_are_unit_vectors() -> None:
    rays = camera_rays(EXACT_CAMERA)
    assert rays.shape == (EXACT_CAMERA.rays_h * EXACT_CAMERA.rays_v, 3)
    np.testing.assert_allclose(np.linalg.norm(rays, axis=1), 1.0)
    assert np.all(rays[:, 0] > 0)


def test_scan_hits_the_facing_side() -> None:
    wall = Cuboid((2.0, -5.0, -5.0), (2.5, 5.0, 5.0))
    cloud = render_depth_scan((0.0, 0.0, 0.0), 0.0, [wall], EXACT_CAMERA, np.random.default_rng(0))
    assert len(cloud) == EXACT_CAMERA.rays_h * EXACT_CAMERA.rays_v
    np.testing.assert_allclose(cloud[:, 0], 2.0, atol=1e-12)


def test_scan_respects_yaw_range_and_occlusion() -> None:
    front = Cuboid((1.0, -0.3, -0.3), (1.2, 0.3, 0.3))
    behind = Cuboid((2.0, -0.2, -0.2), (2.2, 0.2, 0.2))
    cloud = render_depth_scan((0.0, 0.0, 0.0), 0.0, [front, behind], EXACT_CAMERA, np.random.default_rng(0))
    assert len(cloud) > 0
    assert np.all(cloud[:, 0] <= 1.2 + 1e-12)
    # Hindernis hinter der Kamera oder außer Reichweite
    assert len(render_depth_scan((0.0, 0.0, 0.0), np.pi, [front], EXACT_CAMERA, np.random.default_rng(0))) == 0
    far = Cuboid((5.0, -1.0, -1.0), (6.0, 1.0, 1.0))
    assert len(render_depth_scan((0.0, 0.0, 0.0), 0.0, [far], EXACT_CAMERA, np.random.default_rng(0))) == 0
    turned = render_depth_scan((0.0, 0.0, 0.0), np.pi / 2, [Cuboid((-1, 2, -1), (1, 3, 1))], EXACT_CAMERA,
                               np.random.default_rng(0))
    np.testing.assert_allclose(turned[:, 1], 2.0, atol=1e-12)


def test_noise_stream_does_not_depend_on_scene() -> None:
    camera = CameraModel()
    a, b = np.random.default_rng(7), np.random.default_rng(7)
    render_depth_scan((0.0, 0.0, 0.0), 0.0, [], camera, a)
    render_depth_scan((0.0, 0.0, 0.0), 0.0, [Cuboid((1.0, -1.0, -1.0), (2.0, 1.0, 1.0))], camera, b)
    assert a.random() == b.random()


def test_clustering_matches_union_find() -> None:
    rng = np.random.default_rng(1)
    blobs = [rng.normal(center, 0.03, size=(30, 3)) for center in ([0, 0, 0], [1, 0, 0], [0, 2, 0])]
    noise = np.array([[5.0, 5.0, 5.0]])
    cloud = np.vstack([blobs[1], noise, blobs[0], blobs[2]])
    clusters = cluster_points(cloud, radius=0.15, min_pts=10)
    assert len(clusters) == 3
    # Reihenfolge nach kleinstem Punktindex
    assert [int(c.indices[0]) for c in clusters] == sorted(int(c.indices[0]) for c in clusters)
    expected = [g for g in union_find_components(cloud, 0.15) if len(g) >= 10]
    assert sorted(map(sorted, expected)) == sorted(sorted(c.indices.tolist()) for c in clusters)
    np.testing.assert_array_equal(clusters[0].points, blobs[1])


def test_clustering_edge_cases() -> None:
    assert cluster_points(np.zeros((0, 3)), 0.15, 1) == []
    with pytest.raises(InvalidInputError):
        cluster_points(np.zeros((3, 3)), 0.0, 1)


def test_convert_and_corner_distances() -> None:
    box = convert_pc_to_box(np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 3.0], [0.5, 0.5, 2.5]]))
    assert box == Cuboid((0.0, 0.0, 2.0), (1.0, 1.0, 3.0))
    distances = corner_distances(Cuboid((1.1, 0.0, 0.0), (2.0, 1.0, 1.0)), KNOWN)
    assert distances.shape == (8,)
    assert distances.min() == pytest.approx(0.1)
    assert distances.max() == pytest.approx(1.0)
    with pytest.raises(InvalidInputError):
        convert_pc_to_box(np.zeros((0, 3)))


def test_merge_boxes_is_the_hull() -> None:
    assert merge_boxes(KNOWN, KNOWN) == KNOWN
    assert merge_boxes(KNOWN, Cuboid((0.5, 0.5, 0.5), (2.0, 2.0, 2.0))) == Cuboid((0, 0, 0), (2, 2, 2))
    rng = np.random.default_rng(2)
    boxes = [Cuboid(low, low + rng.uniform(0.1, 1.0, 3)) for low in rng.uniform(-2.0, 2.0, size=(3, 3))]
    a, b, c = boxes
    assert merge_boxes(a, b) == merge_boxes(b, a)
    assert merge_boxes(merge_boxes(a, b), c) == merge_boxes(a, merge_boxes(b, c))


def test_8corner_empty_map_takes_all_boxes() -> None:
    clusters = [box_cluster((0, 0, 0), (1, 1, 1)), box_cluster((3, 0, 0), (4, 1, 1))]
    new, remaining = detect_obstacles_8corner([], clusters, DELTA)
    assert new == [KNOWN, Cuboid((3, 0, 0), (4, 1, 1))]
    assert remaining == []


def test_8corner_merges_boxes_of_the_first_scan() -> None:
    clusters = [box_cluster((0, 0, 0), (1, 1, 1)), box_cluster((1.1, 0, 0), (2, 1, 1))]
    new, remaining = detect_obstacles_8corner([], clusters, DELTA)
    assert new == [Cuboid((0, 0, 0), (2, 1, 1))]
    assert remaining == []


def test_8corner_first_scan_leaves_no_close_pairs() -> None:
    rng = np.random.default_rng(4)
    clusters = [box_cluster(low, low + rng.uniform(0.1, 0.6, 3)) for low in rng.uniform(0.0, 3.0, size=(12, 3))]
    originals = {convert_pc_to_box(cluster) for cluster in clusters}
    new, _ = detect_obstacles_8corner([], clusters, DELTA)
    for i, a in enumerate(new):
        for b in new[i + 1:]:
            assert cuboid_distance(a, b) > DELTA or a not in originals or b not in originals


def test_8corner_far_box_is_new() -> None:
    new, remaining = detect_obstacles_8corner([KNOWN], [box_cluster((3, 3, 3), (4, 4, 4))], DELTA)
    assert new == [Cuboid((3, 3, 3), (4, 4, 4))]
    assert remaining == [KNOWN]


def test_8corner_overlapping_box_is_merged() -> None:
    new, remaining = detect_obstacles_8corner([KNOWN], [box_cluster((0.5, 0, 0), (1.5, 1, 1))], DELTA)
    assert new == [Cuboid((0, 0, 0), (1.5, 1, 1))]
    assert remaining == []


def test_8corner_near_box_with_distant_corner_is_merged() -> None:
    new, remaining = detect_obstacles_8corner([KNOWN], [box_cluster((1.1, 0, 0), (2.0, 1, 1))], DELTA)
    assert new == [Cuboid((0, 0, 0), (2.0, 1, 1))]
    assert remaining == []


def test_8corner_small_nearby_box_is_discarded() -> None:
    new, remaining = detect_obstacles_8corner([KNOWN], [box_cluster((1.1, 0.2, 0.2), (1.2, 0.3, 0.3))], DELTA)
    assert new == []
    assert remaining == [KNOWN]


def test_8corner_merges_into_boxes_found_in_same_scan() -> None:
    clusters = [box_cluster((3, 0, 0), (4, 1, 1)), box_cluster((3.5, 0, 0), (4.5, 1, 1))]
    new, remaining = detect_obstacles_8corner([KNOWN], clusters, DELTA)
    assert new == [Cuboid((3, 0, 0), (4.5, 1, 1))]
    assert remaining == [KNOWN]


def test_8corner_rejects_non_positive_delta() -> None:
    with pytest.raises(InvalidInputError):
        detect_obstacles_8corner([], [], 0.0)


def test_baseline_matches_and_appends() -> None:
    first = dense_box_cluster((0, 0, 0), (1, 1, 1))
    matches, clouds = detect_obstacles_pointcloud_baseline([], [first], DELTA, k=3)
    assert matches[0].is_new
    assert len(clouds) == 1
    near = Cluster(points=first.points + [0.02, 0.0, 0.0], indices=first.indices)
    far = dense_box_cluster((4, 4, 4), (5, 5, 5))
    matches, clouds = detect_obstacles_pointcloud_baseline(clouds, [near, far], DELTA, k=3)
    assert matches[0].index == 0
    assert matches[0].distance < DELTA
    assert matches[1].is_new
    assert [len(cloud) for cloud in clouds] == [2 * len(first.points), len(far.points)]


def test_baseline_sparse_cluster_is_new_despite_touching_point() -> None:
    cloud = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]])
    cluster = Cluster(points=np.array([[0.0, 0.0, 0.0]]), indices=np.arange(1))
    matches, _ = detect_obstacles_pointcloud_baseline([cloud], [cluster], DELTA, k=3)
    # Mittel über die drei nächsten Nachbarn: (0 + 1 + 1) / 3
    assert matches[0].distance == pytest.approx(2.0 / 3.0)
    assert matches[0].is_new


def test_cloud_distance_averages_k_nearest_neighbours() -> None:
    single = np.array([[0.0, 0.0, 0.0]])
    points = np.array([[0.1, 0.0, 0.0], [0.2, 0.0, 0.0], [3.0, 0.0, 0.0]])
    assert cloud_distance(points, single, 1) == pytest.approx((0.1 + 0.2 + 3.0) / 3)
    assert cloud_distance(points, single, 10) == pytest.approx((0.1 + 0.2 + 3.0) / 3)

    line = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    origin = np.array([[0.0, 0.0, 0.0]])
    assert cloud_distance(origin, line, 1) == pytest.approx(0.0)
    assert cloud_distance(origin, line, 2) == pytest.approx(0.5)
    assert cloud_distance(origin, line, 5) == pytest.approx(1.0)
    both = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    assert cloud_distance(both, line, 2) == pytest.approx(0.5)


def test_benchmark_single_frame(pillar_scenario: Scenario) -> None:
    frames = synthesize_frames(pillar_scenario, 1, np.random.default_rng(0))
    rows = benchmark_detectors(frames, pillar_scenario.detection, 1, np.random.default_rng(1))
    assert [row.method for row in rows] == [DetectorMethod.EIGHT_CORNER, DetectorMethod.POINT_CLOUD]
    assert all(row.frames == 1 and row.trials == 1 and row.mean_ms >= 0 for row in rows)


def test_benchmark_noise_free_counts_agree() -> None:
    boxes = [((0.0, 0.0, 0.0), (0.5, 0.5, 0.5)), ((2.0, 0.0, 0.0), (2.5, 0.5, 0.5)), ((0.0, 2.0, 0.0), (0.5, 2.5, 0.5))]
    full = np.vstack([surface_grid(low, high) for low, high in boxes])
    front = full[np.isin(full[:, 0], [0.0, 2.0])]
    frames = [full, front, full]
    rows = benchmark_detectors(frames, DetectionParams(), 2, np.random.default_rng(1), noise=False)
    counts = {row.method: row.obstacle_count for row in rows}
    assert counts[DetectorMethod.EIGHT_CORNER] == counts[DetectorMethod.POINT_CLOUD] == 3


def test_benchmark_rejects_empty_input(pillar_scenario: Scenario) -> None:
    with pytest.raises(InvalidInputError):
        benchmark_detectors([], pillar_scenario.detection, 1, np.random.default_rng(0))
    with pytest.raises(InvalidInputError):
        synthesize_frames(pillar_scenario, 0, np.random.default_rng(0))


@pytest.mark.slow
def test_8corner_is_faster_and_steadier_than_baseline(pillar_scenario: Scenario) -> None:
    frames = synthesize_frames(pillar_scenario, 81, np.random.default_rng(0))
    rows = {row.method: row for row in benchmark_detectors(frames, DetectionParams(), 20, np.random.default_rng(1))}
    corner, baseline = rows[DetectorMethod.EIGHT_CORNER], rows[DetectorMethod.POINT_CLOUD]
    assert corner.mean_ms < baseline.mean_ms
    assert corner.std_ms < baseline.std_ms
