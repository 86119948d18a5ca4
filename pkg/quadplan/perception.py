"""Synthetische Tiefenscans, Clusterbildung und Hinderniserkennung (8-Ecken-Verfahren und k-NN-Vergleich)."""

from __future__ import annotations

import functools
import logging
import math
import time
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import InvalidInputError
from .models import DetectorMethod
from .planning.geometry import Cuboid, cuboid_distance, point_box_distance, ray_box_intervals, stack_bounds
from .schemas import BenchmarkRow, CameraModel, DetectionParams, Scenario

LOGGER = logging.getLogger(__name__)

PointCloud = np.ndarray


@dataclass(frozen=True)
class Cluster:
    """Punktmenge eines Clusters (Weltkoordinaten) und die Indizes im Ursprungsscan."""

    points: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class BaselineMatch:
    """Zuordnung eines Clusters im k-NN-Verfahren: ``index`` None bedeutet neues Hindernis."""

    index: int | None
    distance: float

    @property
    def is_new(self) -> bool:
        return self.index is None


# --- Tiefenkamera ------------------------------------------------------------------------------


@functools.lru_cache(maxsize=8)
def camera_rays(camera: CameraModel) -> np.ndarray:
    """Einheitsrichtungen des Strahlrasters im Kamerasystem (Blickrichtung +x), zeilenweise."""
    azimuth = np.linspace(-0.5 * camera.h_fov_rad, 0.5 * camera.h_fov_rad, camera.rays_h)
    elevation = np.linspace(-0.5 * camera.v_fov_rad, 0.5 * camera.v_fov_rad, camera.rays_v)
    el, az = np.meshgrid(elevation, azimuth, indexing="ij")
    rays = np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1).reshape(-1, 3)
    rays.setflags(write=False)
    return rays


def render_depth_scan(
    position: Sequence[float] | np.ndarray,
    yaw: float,
    obstacles: Sequence[Cuboid],
    camera: CameraModel,
    rng: np.random.Generator,
) -> PointCloud:
    """Strahlverfolgung über das Sichtfeld; der nächste Treffer je Strahl zählt (Verdeckung).

    Das Rauschen wird für alle Strahlen in fester Reihenfolge gezogen, damit der Zufallsstrom
    unabhängig von der Szene ist.
    """
    origin = np.asarray(position, dtype=float).reshape(3)
    cos_yaw, sin_yaw = math.cos(yaw), math.sin(yaw)
    rotation = np.array([[cos_yaw, -sin_yaw, 0.0], [sin_yaw, cos_yaw, 0.0], [0.0, 0.0, 1.0]])
    directions = camera_rays(camera) @ rotation.T
    noise = rng.normal(0.0, camera.noise_sigma_m, size=len(directions))
    if not obstacles:
        return np.zeros((0, 3))

    mins, maxs = stack_bounds(obstacles)
    origins = np.broadcast_to(origin, directions.shape)
    t_near, t_far = ray_box_intervals(origins, directions, mins, maxs)
    valid = (t_near <= t_far) & (t_near >= 0.0)
    hit = np.where(valid, t_near, np.inf).min(axis=1)
    visible = hit <= camera.max_range_m
    ranges = hit[visible] + noise[visible]
    cloud = origin + directions[visible] * ranges[:, None]
    LOGGER.debug("Tiefenscan bei %s: %d von %d Strahlen treffen.", origin.tolist(), len(cloud), len(directions))
    return cloud


# --- Clusterbildung und Quader -----------------------------------------------------------------


def cluster_points(cloud: PointCloud, radius: float, min_pts: int) -> list[Cluster]:
    """Euklidische Zusammenhangskomponenten (Abstand <= radius); kleine Komponenten gelten als Rauschen.

    Die Cluster sind nach ihrem kleinsten Punktindex geordnet.
    """
    if radius <= 0:
        raise InvalidInputError(f"Der Clusterradius muss positiv sein, erhalten: {radius}")
    points = np.asarray(cloud, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        return []
    pairs = cKDTree(points).query_pairs(r=radius, output_type="ndarray")
    graph = coo_matrix(
        (np.ones(len(pairs), dtype=np.int8), (pairs[:, 0], pairs[:, 1])), shape=(len(points), len(points))
    )
    _, labels = connected_components(graph, directed=False)
    first_index = {}
    for index, label in enumerate(labels):
        first_index.setdefault(int(label), index)
    clusters = []
    for label in sorted(first_index, key=first_index.__getitem__):
        members = np.flatnonzero(labels == label)
        if len(members) >= min_pts:
            clusters.append(Cluster(points=points[members], indices=members))
    return clusters


def convert_pc_to_box(cluster: Cluster | PointCloud) -> Cuboid:
    points = cluster.points if isinstance(cluster, Cluster) else np.asarray(cluster, dtype=float)
    if len(points) == 0:
        raise InvalidInputError("Ein leerer Cluster hat keinen Hüllquader.")
    return Cuboid(points.min(axis=0), points.max(axis=0))


def merge_boxes(a: Cuboid, b: Cuboid) -> Cuboid:
    return Cuboid(np.minimum(a.min_corner, b.min_corner), np.maximum(a.max_corner, b.max_corner))


def corner_distances(c: Cuboid, o: Cuboid) -> np.ndarray:
    """Abstand jeder der 8 Ecken von ``c`` zum Quader ``o``."""
    return point_box_distance(c.corners(), o)


# --- 8-Ecken-Erkennung -------------------------------------------------------------------------


def detect_obstacles_8corner(
    known: Sequence[Cuboid], clusters: Sequence[Cluster], delta: float
) -> tuple[list[Cuboid], list[Cuboid]]:
    """Ordnet erkannte Quader bekannten Hindernissen zu.

    Liefert ``(neu, bekannt)``: ``neu`` enthält neue und verschmolzene Quader, ``bekannt`` die
    bisherigen Hindernisse ohne die in eine Verschmelzung eingegangenen. Der nächste Nachbar
    wird je Cluster gegen den aktuellen Stand beider Listen bestimmt.
    """
    if delta <= 0:
        raise InvalidInputError(f"delta muss positiv sein, erhalten: {delta}")
    remaining = list(known)
    new: list[Cuboid] = []
    boxes = [convert_pc_to_box(cluster) for cluster in clusters]

    for box in boxes:
        candidates = remaining + new
        if not candidates:
            new.append(box)
            continue
        distances = np.array([cuboid_distance(box, other) for other in candidates])
        idx = int(np.argmin(distances))
        d = float(distances[idx])
        target = candidates[idx]
        if d > delta:
            new.append(box)
            continue
        if d == 0.0 or (float(np.max(corner_distances(box, target))) > delta and d < delta):
            merged = merge_boxes(box, target)
            if idx < len(remaining):
                del remaining[idx]
            else:
                del new[idx - len(remaining)]
            new.append(merged)
    LOGGER.debug("8-Ecken-Erkennung: %d neue bzw. verschmolzene Quader.", len(new))
    return new, remaining


# --- k-NN-Vergleichsverfahren ------------------------------------------------------------------


def cloud_distance(points: np.ndarray, cloud: PointCloud, k: int) -> float:
    """Mittlerer Abstand der Clusterpunkte zu ihren k nächsten Nachbarn in der Wolke.

    Besitzt die Wolke weniger als k Punkte, zählen alle ihre Punkte.
    """
    k = min(k, len(cloud))
    distances, _ = cKDTree(cloud).query(points, k=k)
    return float(np.mean(np.reshape(distances, (len(points), -1))))


def detect_obstacles_pointcloud_baseline(
    known_clouds: Sequence[PointCloud], clusters: Sequence[Cluster], delta: float, k: int
) -> tuple[list[BaselineMatch], list[PointCloud]]:
    """Klassisches Verfahren auf vollständigen Punktwolken.

    Zugeordnete Cluster werden an ihre Wolke angehängt, neue Cluster bilden eine neue Wolke.
    """
    if k < 1:
        raise InvalidInputError(f"k muss mindestens 1 sein, erhalten: {k}")
    clouds = [np.asarray(cloud, dtype=float) for cloud in known_clouds]
    matches: list[BaselineMatch] = []
    for cluster in clusters:
        distances = [cloud_distance(cluster.points, cloud, k) for cloud in clouds]
        if distances:
            idx = int(np.argmin(distances))
            d = float(distances[idx])
        else:
            idx, d = -1, math.inf
        if d > delta:
            matches.append(BaselineMatch(index=None, distance=d))
            clouds.append(cluster.points.copy())
        else:
            matches.append(BaselineMatch(index=idx, distance=d))
            clouds[idx] = np.vstack([clouds[idx], cluster.points])
    return matches, clouds


# --- Laufzeitvergleich -------------------------------------------------------------------------


def synthesize_frames(scenario: Scenario, count: int, rng: np.random.Generator) -> list[PointCloud]:
    """Scans entlang der Geraden von Start zu Ziel, Kamera in Flugrichtung."""
    if count < 1:
        raise InvalidInputError("Es wird mindestens ein Frame benötigt.")
    start = np.asarray(scenario.start.position_m, dtype=float)
    target = np.asarray(scenario.target.position_m, dtype=float)
    heading = target - start
    yaw = math.atan2(heading[1], heading[0]) if np.linalg.norm(heading[:2]) > 0 else scenario.start.yaw_rad
    obstacles = [Cuboid(spec.min_m, spec.max_m) for spec in scenario.obstacles]
    return [
        render_depth_scan(start + fraction * heading, yaw, obstacles, scenario.camera, rng)
        for fraction in np.linspace(0.0, 1.0, count)
    ]


def _perturb(frame: PointCloud, sigma: float, rng: np.random.Generator) -> PointCloud:
    return frame + rng.normal(0.0, sigma, size=frame.shape) if sigma > 0 else frame


def benchmark_detectors(
    frames: Sequence[PointCloud],
    params: DetectionParams,
    trials: int,
    rng: np.random.Generator,
    noise_sigma: float = 0.01,
    noise: bool = True,
) -> list[BenchmarkRow]:
    """Misst je Frame nur den Erkennungsschritt beider Verfahren, über ``trials`` Durchläufe.

    Jeder Durchlauf beginnt mit leerer Hinderniskarte; mit ``noise`` wird jeder Frame je
    Durchlauf neu verrauscht.
    """
    if not frames:
        raise InvalidInputError("Der Laufzeitvergleich benötigt mindestens einen Frame.")
    if trials < 1:
        raise InvalidInputError("Es wird mindestens ein Durchlauf benötigt.")
    timings: dict[DetectorMethod, list[float]] = {DetectorMethod.EIGHT_CORNER: [], DetectorMethod.POINT_CLOUD: []}
    counts = {DetectorMethod.EIGHT_CORNER: 0, DetectorMethod.POINT_CLOUD: 0}
    seeds = np.random.SeedSequence(int(rng.integers(2**32))).spawn(trials)
    trial_rngs = [np.random.default_rng(seed) for seed in seeds]
    for trial_rng in trial_rngs:
        boxes: list[Cuboid] = []
        clouds: list[PointCloud] = []
        for frame in frames:
            scan = _perturb(frame, noise_sigma, trial_rng) if noise else frame
            clusters = cluster_points(scan, params.cluster_radius_m, params.min_points)

            started = time.perf_counter()
            new, remaining = detect_obstacles_8corner(boxes, clusters, params.delta_m)
            timings[DetectorMethod.EIGHT_CORNER].append(time.perf_counter() - started)
            boxes = remaining + new

            started = time.perf_counter()
            _, clouds = detect_obstacles_pointcloud_baseline(clouds, clusters, params.delta_m, params.knn_k)
            timings[DetectorMethod.POINT_CLOUD].append(time.perf_counter() - started)
        counts[DetectorMethod.EIGHT_CORNER] = len(boxes)
        counts[DetectorMethod.POINT_CLOUD] = len(clouds)

    rows = []
    for method, samples in timings.items():
        millis = 1e3 * np.asarray(samples)
        rows.append(
            BenchmarkRow(
                method=method,
                mean_ms=float(np.mean(millis)),
                std_ms=float(np.std(millis)),
                frames=len(frames),
                trials=trials,
                obstacle_count=counts[method],
            )
        )
        LOGGER.info("Erkennung %s: %.3f ms +- %.3f ms.", method.value, rows[-1].mean_ms, rows[-1].std_ms)
    return rows
