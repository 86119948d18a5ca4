"""Weltmodell: achsparallele Quader, Aufblähung, GJK-Abstand und Kollisionsprüfungen."""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError, SamplingError

LOGGER = logging.getLogger(__name__)

MAX_SAMPLING_ATTEMPTS = 10_000
GJK_TOLERANCE = 1e-10
GJK_MAX_ITERATIONS = 64
# Abstände unterhalb dieser Schwelle gelten als Berührung (Kontakt = Kollision).
CONTACT_TOLERANCE = 1e-12


def _as_point(value: Sequence[float] | np.ndarray) -> np.ndarray:
    point = np.asarray(value, dtype=float).reshape(3)
    if not np.all(np.isfinite(point)):
        raise InvalidInputError(f"Ungültiger Punkt: {value!r}")
    return point


@dataclass(frozen=True, eq=False)
class Cuboid:
    """Achsparalleler Quader, gespeichert über Minimal- und Maximalecke (Meter)."""

    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self) -> None:
        lower = _as_point(self.min_corner)
        upper = _as_point(self.max_corner)
        if np.any(lower > upper):
            raise InvalidInputError(f"Minimalecke {lower} liegt nicht unter Maximalecke {upper}.")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "min_corner", lower)
        object.__setattr__(self, "max_corner", upper)

    @classmethod
    def from_center(cls, center: Sequence[float], size: Sequence[float]) -> Cuboid:
        half = 0.5 * np.asarray(size, dtype=float)
        middle = np.asarray(center, dtype=float)
        return cls(middle - half, middle + half)

    @property
    def extent(self) -> np.ndarray:
        return self.max_corner - self.min_corner

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min_corner + self.max_corner)

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    def corners(self) -> np.ndarray:
        """Die 8 Eckpunkte als (8, 3)-Array, alle Min/Max-Kombinationen."""
        bounds = np.stack([self.min_corner, self.max_corner])
        return np.array(
            [[bounds[i, 0], bounds[j, 1], bounds[k, 2]] for i, j, k in itertools.product((0, 1), repeat=3)]
        )

    def contains(self, point: Sequence[float] | np.ndarray) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.min_corner) and np.all(p <= self.max_corner))

    def to_hull(self) -> ConvexHullShape:
        return ConvexHullShape(self.corners())

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(float(v) for v in (*self.min_corner, *self.max_corner))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Cuboid):
            return NotImplemented
        return bool(
            np.array_equal(self.min_corner, other.min_corner) and np.array_equal(self.max_corner, other.max_corner)
        )

    def __hash__(self) -> int:
        return hash(self.as_tuple())

    def __repr__(self) -> str:
        return f"Cuboid(min={self.min_corner.tolist()}, max={self.max_corner.tolist()})"


@dataclass(frozen=True)
class FlightSpace:
    """Zulässiger Flugraum; alle Stichproben liegen innerhalb von ``bounds``."""

    bounds: Cuboid

    def contains(self, point: Sequence[float] | np.ndarray) -> bool:
        return self.bounds.contains(point)


@dataclass(frozen=True, eq=False)
class ConvexHullShape:
    """Konvexe Hülle einer Punktmenge, beschrieben über ihre Stützfunktion."""

    vertices: np.ndarray

    def __post_init__(self) -> None:
        points = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if points.size == 0 or points.shape[1] != 3:
            raise InvalidInputError("Eine konvexe Hülle benötigt mindestens einen 3D-Punkt.")
        object.__setattr__(self, "vertices", points)

    def support(self, direction: np.ndarray) -> np.ndarray:
        return self.vertices[int(np.argmax(self.vertices @ direction))]


def inflate(box: Cuboid, margin: float) -> Cuboid:
    """Verschiebt jede Seitenfläche um ``margin`` nach außen."""
    if margin < 0 or not math.isfinite(margin):
        raise InvalidInputError(f"Der Sicherheitsabstand muss nichtnegativ sein, erhalten: {margin}")
    return Cuboid(box.min_corner - margin, box.max_corner + margin)


def inflate_all(boxes: Iterable[Cuboid], margin: float) -> list[Cuboid]:
    return [inflate(box, margin) for box in boxes]


def point_box_distance(points: np.ndarray, box: Cuboid) -> np.ndarray | float:
    """Analytischer Punkt-Quader-Abstand über komponentenweises Clamping."""
    p = np.asarray(points, dtype=float)
    gap = np.maximum(np.maximum(box.min_corner - p, 0.0), p - box.max_corner)
    distance = np.sqrt(np.sum(gap * gap, axis=-1))
    return float(distance) if distance.ndim == 0 else distance


# --- GJK --------------------------------------------------------------------------------------


def _closest_on_segment(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return a, [a]
    t = -float(a @ ab) / denom
    if t <= 0.0:
        return a, [a]
    if t >= 1.0:
        return b, [b]
    return a + t * ab, [a, b]


def _closest_on_triangle(
    a: np.ndarray, b: np.ndarray, c: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray]]:
    # Voronoi-Regionen des Dreiecks bezüglich des Ursprungs.
    ab = b - a
    ac = c - a
    d1 = -float(ab @ a)
    d2 = -float(ac @ a)
    if d1 <= 0.0 and d2 <= 0.0:
        return a, [a]
    d3 = -float(ab @ b)
    d4 = -float(ac @ b)
    if d3 >= 0.0 and d4 <= d3:
        return b, [b]
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return a + v * ab, [a, b]
    d5 = -float(ab @ c)
    d6 = -float(ac @ c)
    if d6 >= 0.0 and d5 <= d6:
        return c, [c]
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return a + w * ac, [a, c]
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b + w * (c - b), [b, c]
    total = va + vb + vc
    if total == 0.0:
        # Entartetes Dreieck: auf die Kanten ausweichen.
        return _best_of([_closest_on_segment(a, b), _closest_on_segment(a, c), _closest_on_segment(b, c)])
    v = vb / total
    w = vc / total
    return a + v * ab + w * ac, [a, b, c]


def _best_of(
    candidates: Iterable[tuple[np.ndarray, list[np.ndarray]]],
) -> tuple[np.ndarray, list[np.ndarray]]:
    return min(candidates, key=lambda item: float(item[0] @ item[0]))


def _closest_on_tetrahedron(
    a: np.ndarray, b: np.ndarray, c: np.ndarray, d: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray]]:
    faces = ((a, b, c, d), (a, c, d, b), (a, d, b, c), (b, d, c, a))
    volume = float(np.dot(b - a, np.cross(c - a, d - a)))
    candidates: list[tuple[np.ndarray, list[np.ndarray]]] = []
    scale = max(float(np.max(np.abs(np.stack([a, b, c, d])))), 1.0)
    degenerate = abs(volume) <= 1e-14 * scale**3
    for p, q, r, opposite in faces:
        normal = np.cross(q - p, r - p)
        side_origin = -float(normal @ p)
        side_opposite = float(normal @ (opposite - p))
        if degenerate or side_origin * side_opposite < 0.0:
            candidates.append(_closest_on_triangle(p, q, r))
    if not candidates:
        return np.zeros(3), [a, b, c, d]
    return _best_of(candidates)


def _closest_on_simplex(simplex: list[np.ndarray]) -> tuple[np.ndarray, list[np.ndarray]]:
    if len(simplex) == 1:
        return simplex[0], simplex
    if len(simplex) == 2:
        return _closest_on_segment(*simplex)
    if len(simplex) == 3:
        return _closest_on_triangle(*simplex)
    return _closest_on_tetrahedron(*simplex)


def gjk_distance(a: ConvexHullShape, b: ConvexHullShape) -> float:
    """Minimaler euklidischer Abstand zweier konvexer Hüllen (0 bei Schnitt oder Berührung)."""
    vertices_a = a.vertices
    vertices_b = b.vertices

    def support(direction: np.ndarray) -> np.ndarray:
        # Stützpunkt der Minkowski-Differenz A - B.
        return vertices_a[int(np.argmax(vertices_a @ direction))] - vertices_b[int(np.argmin(vertices_b @ direction))]

    v = vertices_a[0] - vertices_b[0]
    simplex = [v]
    for _ in range(GJK_MAX_ITERATIONS):
        vv = float(v @ v)
        if vv <= CONTACT_TOLERANCE**2:
            return 0.0
        w = support(-v)
        if vv - float(v @ w) <= GJK_TOLERANCE * vv:
            break
        if any(np.array_equal(w, point) for point in simplex):
            break
        simplex.append(w)
        v, simplex = _closest_on_simplex(simplex)
        if len(simplex) == 4:
            return 0.0
    distance = math.sqrt(float(v @ v))
    return 0.0 if distance <= CONTACT_TOLERANCE else distance


def cuboid_distance(a: Cuboid, b: Cuboid) -> float:
    return gjk_distance(a.to_hull(), b.to_hull())


# --- Strahl-/Segmenttests ----------------------------------------------------------------------


def ray_box_intervals(
    origins: np.ndarray, directions: np.ndarray, mins: np.ndarray, maxs: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Slab-Methode für Strahlen (R, 3) gegen Quader (K, 3).

    Liefert die Parameter ``t_near`` und ``t_far`` als (R, K)-Arrays; der Strahl
    ``o + t d`` liegt für ``t_near <= t <= t_far`` im (abgeschlossenen) Quader.
    """
    o = np.asarray(origins, dtype=float)[:, None, :]
    d = np.asarray(directions, dtype=float)[:, None, :]
    lower = np.asarray(mins, dtype=float)[None, :, :]
    upper = np.asarray(maxs, dtype=float)[None, :, :]
    parallel = d == 0.0
    safe = np.where(parallel, 1.0, d)
    t1 = (lower - o) / safe
    t2 = (upper - o) / safe
    inside_slab = (o >= lower) & (o <= upper)
    near_axis = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), np.minimum(t1, t2))
    far_axis = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), np.maximum(t1, t2))
    return near_axis.max(axis=2), far_axis.min(axis=2)


def stack_bounds(obstacles: Sequence[Cuboid]) -> tuple[np.ndarray, np.ndarray]:
    mins = np.array([box.min_corner for box in obstacles], dtype=float).reshape(-1, 3)
    maxs = np.array([box.max_corner for box in obstacles], dtype=float).reshape(-1, 3)
    return mins, maxs


def segment_hits(a: Sequence[float], b: Sequence[float], obstacles: Sequence[Cuboid]) -> np.ndarray:
    """Boolesche Maske der Quader, die das abgeschlossene Segment [a, b] berührt."""
    if not obstacles:
        return np.zeros(0, dtype=bool)
    start = np.asarray(a, dtype=float).reshape(1, 3)
    direction = np.asarray(b, dtype=float).reshape(1, 3) - start
    mins, maxs = stack_bounds(obstacles)
    t_near, t_far = ray_box_intervals(start, direction, mins, maxs)
    return ((t_near <= t_far) & (t_far >= 0.0) & (t_near <= 1.0))[0]


def segment_collision_free(a: Sequence[float], b: Sequence[float], obstacles: Sequence[Cuboid]) -> bool:
    """True genau dann, wenn das Segment [a, b] keinen (bereits aufgeblähten) Quader berührt."""
    return not bool(np.any(segment_hits(a, b, obstacles)))


def point_in_any(point: Sequence[float] | np.ndarray, obstacles: Sequence[Cuboid]) -> bool:
    if not obstacles:
        return False
    p = np.asarray(point, dtype=float)
    mins, maxs = stack_bounds(obstacles)
    return bool(np.any(np.all((p >= mins) & (p <= maxs), axis=1)))


def points_in_any(points: np.ndarray, obstacles: Sequence[Cuboid]) -> np.ndarray:
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if not obstacles:
        return np.zeros(len(p), dtype=bool)
    mins, maxs = stack_bounds(obstacles)
    inside = np.all((p[:, None, :] >= mins[None]) & (p[:, None, :] <= maxs[None]), axis=2)
    return inside.any(axis=1)


def sample_free(space: FlightSpace, obstacles: Sequence[Cuboid], rng: np.random.Generator) -> np.ndarray:
    """Gleichverteilte Stichprobe im Flugraum außerhalb aller (aufgeblähten) Hindernisse."""
    lower = space.bounds.min_corner
    upper = space.bounds.max_corner
    for _ in range(MAX_SAMPLING_ATTEMPTS):
        candidate = rng.uniform(lower, upper)
        if not point_in_any(candidate, obstacles):
            return candidate
    LOGGER.warning("Keine freie Stichprobe nach %d Versuchen gefunden.", MAX_SAMPLING_ATTEMPTS)
    raise SamplingError(f"Kein freier Punkt nach {MAX_SAMPLING_ATTEMPTS} Versuchen; der Flugraum ist nahezu belegt.")
