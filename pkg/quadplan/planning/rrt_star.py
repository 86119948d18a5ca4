"""RRT*-Baum mit Wurzel im Zielpunkt und Extraktion des Wegpunktpfads."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError, PlanningFailure
from ..schemas import RrtParams
from .geometry import Cuboid, FlightSpace, point_in_any, points_in_any, sample_free, segment_collision_free

LOGGER = logging.getLogger(__name__)

DUPLICATE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Tree:
    """Unveränderlicher Schnappschuss eines RRT*-Baums.

    Knoten 0 ist das Ziel ``r_t`` ohne Elternknoten (``parents[0] == -1``) und mit Kosten 0.
    ``cost_to_target`` ist die Pfadlänge entlang der Elternkette bis zum Ziel.
    """

    nodes: np.ndarray
    parents: np.ndarray
    cost_to_target: np.ndarray

    @property
    def size(self) -> int:
        return int(len(self.nodes))

    @classmethod
    def rooted_at(cls, target: Sequence[float]) -> Tree:
        return _GrowingTree(np.asarray(target, dtype=float), capacity=1).freeze()

    def path_from(self, index: int) -> np.ndarray:
        """Wegpunkte von Knoten ``index`` bis zur Wurzel, in Flugreihenfolge."""
        path = [self.nodes[index]]
        current = index
        for _ in range(self.size):
            parent = int(self.parents[current])
            if parent < 0:
                break
            path.append(self.nodes[parent])
            current = parent
        else:  # pragma: no cover - Zyklen sind durch Konstruktion ausgeschlossen
            raise PlanningFailure("Zyklus in den Elternzeigern des Baums.")
        return np.array(path)


class _GrowingTree:
    """Veränderlicher Arbeitsbaum mit vorab reservierten Arrays."""

    def __init__(self, root: np.ndarray, capacity: int) -> None:
        capacity = max(capacity, 1)
        self.nodes = np.empty((capacity, 3))
        self.parents = np.full(capacity, -1, dtype=np.int64)
        self.costs = np.zeros(capacity)
        self.nodes[0] = root
        self.size = 1

    @classmethod
    def from_tree(cls, tree: Tree, extra: int = 1) -> _GrowingTree:
        grown = cls(tree.nodes[0], capacity=tree.size + extra)
        grown.nodes[: tree.size] = tree.nodes
        grown.parents[: tree.size] = tree.parents
        grown.costs[: tree.size] = tree.cost_to_target
        grown.size = tree.size
        return grown

    def freeze(self) -> Tree:
        return _frozen(self.nodes[: self.size], self.parents[: self.size], self.costs[: self.size])

    def _ensure_capacity(self) -> None:
        if self.size < len(self.nodes):
            return
        grow = len(self.nodes)
        self.nodes = np.vstack([self.nodes, np.empty((grow, 3))])
        self.parents = np.concatenate([self.parents, np.full(grow, -1, dtype=np.int64)])
        self.costs = np.concatenate([self.costs, np.zeros(grow)])

    def near(self, point: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
        offsets = self.nodes[: self.size] - point
        distances = np.sqrt(np.einsum("ij,ij->i", offsets, offsets))
        indices = np.flatnonzero(distances <= radius)
        return indices, distances[indices]

    def add(
        self,
        r_rand: np.ndarray,
        obstacles: Sequence[Cuboid],
        epsilon: float,
        rho: float,
        steer: bool = True,
        rewire: bool = True,
    ) -> int | None:
        """Fügt einen Knoten nach der AddNode-Regel ein und liefert dessen Index (oder None)."""
        candidates, distances = self.near(r_rand, rho)
        if len(candidates) == 0:
            return None

        if steer:
            step = np.minimum(distances, epsilon)
            scale = np.divide(step, distances, out=np.zeros_like(step), where=distances > 0)
            new_points = self.nodes[candidates] + (r_rand - self.nodes[candidates]) * scale[:, None]
        else:
            step = distances
            new_points = np.repeat(r_rand[None, :], len(candidates), axis=0)
        total = self.costs[candidates] + step

        # Stabile Sortierung: bei gleichen Kosten gewinnt der kleinste Knotenindex.
        for position in np.argsort(total, kind="stable"):
            parent = int(candidates[position])
            new_point = new_points[position]
            if segment_collision_free(self.nodes[parent], new_point, obstacles):
                break
        else:
            return None

        index = self.attach(new_point, parent)
        if rewire:
            self._rewire(index, obstacles, rho)
        return index

    def attach(self, point: np.ndarray, parent: int) -> int:
        self._ensure_capacity()
        index = self.size
        self.nodes[index] = point
        self.parents[index] = parent
        self.costs[index] = self.costs[parent] + float(np.linalg.norm(point - self.nodes[parent]))
        self.size += 1
        return index

    def find(self, point: np.ndarray) -> int | None:
        """Index eines Knotens, der mit ``point`` zusammenfällt."""
        offsets = self.nodes[: self.size] - point
        distances = np.sqrt(np.einsum("ij,ij->i", offsets, offsets))
        index = int(np.argmin(distances))
        return index if distances[index] <= DUPLICATE_TOLERANCE else None

    def _rewire(self, index: int, obstacles: Sequence[Cuboid], rho: float) -> None:
        new_point = self.nodes[index]
        neighbours, distances = self.near(new_point, rho)
        for neighbour, distance in zip(neighbours, distances):
            neighbour = int(neighbour)
            if neighbour in (index, int(self.parents[index])) or neighbour == 0:
                continue
            improved = self.costs[index] + distance
            if improved >= self.costs[neighbour]:
                continue
            if not segment_collision_free(new_point, self.nodes[neighbour], obstacles):
                continue
            delta = self.costs[neighbour] - improved
            self.parents[neighbour] = index
            self._lower_costs(neighbour, delta)

    def _lower_costs(self, start: int, delta: float) -> None:
        # Kostenänderung an alle Nachfahren weiterreichen.
        parents = self.parents[: self.size]
        frontier = np.array([start])
        while frontier.size:
            self.costs[frontier] -= delta
            frontier = np.flatnonzero(np.isin(parents, frontier))


def _frozen(nodes: np.ndarray, parents: np.ndarray, costs: np.ndarray) -> Tree:
    nodes, parents, costs = nodes.copy(), parents.copy(), costs.copy()
    for array in (nodes, parents, costs):
        array.setflags(write=False)
    return Tree(nodes=nodes, parents=parents, cost_to_target=costs)


def add_node(
    r_rand: Sequence[float],
    tree: Tree,
    obstacles: Sequence[Cuboid],
    epsilon: float,
    rho: float,
) -> Tree:
    """AddNode: Elternwahl im ρ-Umkreis, Schritt der Länge ε, anschließendes Rewiring.

    Gibt den unveränderten Baum zurück, wenn kein gültiger Elternknoten existiert.
    """
    if tree.size == 0:
        raise InvalidInputError("Der Baum muss mindestens die Wurzel enthalten.")
    if not 0 < epsilon <= rho:
        raise InvalidInputError(f"Erwartet 0 < epsilon <= rho, erhalten epsilon={epsilon}, rho={rho}.")
    grown = _GrowingTree.from_tree(tree)
    if grown.add(np.asarray(r_rand, dtype=float), obstacles, epsilon, rho) is None:
        return tree
    return grown.freeze()


def prune_tree(tree: Tree, obstacles: Sequence[Cuboid]) -> Tree:
    """Entfernt Knoten in ``obstacles`` und Knoten mit blockierter Elternkante samt allen Nachfahren.

    Die Wurzel bleibt immer erhalten. Überlebende Knoten behalten Reihenfolge, Eltern und Kosten.
    """
    if not obstacles or tree.size <= 1:
        return tree
    nodes, parents = tree.nodes, tree.parents
    keep = ~points_in_any(nodes, obstacles)
    keep[0] = True
    for index in np.flatnonzero(keep[1:]) + 1:
        if not segment_collision_free(nodes[index], nodes[parents[index]], obstacles):
            keep[index] = False
    # Verwaiste Teilbäume: Eltern können nach dem Rewiring einen höheren Index haben.
    while True:
        parent_kept = keep[np.maximum(parents, 0)]
        parent_kept[0] = True
        orphaned = keep & ~parent_kept
        if not np.any(orphaned):
            break
        keep &= ~orphaned

    kept = np.flatnonzero(keep)
    if len(kept) == tree.size:
        return tree
    renumbered = np.full(tree.size, -1, dtype=np.int64)
    renumbered[kept] = np.arange(len(kept))
    new_parents = np.where(parents[kept] < 0, -1, renumbered[np.maximum(parents[kept], 0)])
    LOGGER.debug("Baum beschnitten: %d von %d Knoten entfernt.", tree.size - len(kept), tree.size)
    return _frozen(nodes[kept], new_parents, tree.cost_to_target[kept])


def graft_path(tree: Tree, path: np.ndarray, obstacles: Sequence[Cuboid]) -> Tree:
    """Hängt den Pfad ``[r_0, ..., r_k]`` rückwärts als Kette an den Baum.

    ``r_k`` muss bereits ein Knoten sein (typisch die Wurzel). Vorhandene Knoten werden
    wiederverwendet, die Kette endet an der ersten blockierten Kante.
    """
    path = np.asarray(path, dtype=float)
    grown = _GrowingTree.from_tree(tree, extra=len(path))
    parent = grown.find(path[-1]) if len(path) else None
    if parent is None:
        LOGGER.debug("Pfad endet an keinem Baumknoten und wird nicht eingehängt.")
        return tree
    for point in path[-2::-1]:
        existing = grown.find(point)
        if existing is not None:
            parent = existing
            continue
        if not segment_collision_free(grown.nodes[parent], point, obstacles):
            break
        parent = grown.attach(point, parent)
    return grown.freeze()


def _check_free(name: str, point: np.ndarray, space: FlightSpace, obstacles: Sequence[Cuboid]) -> None:
    if not space.contains(point):
        raise InvalidInputError(f"{name} {point.tolist()} liegt außerhalb des Flugraums.")
    if point_in_any(point, obstacles):
        raise InvalidInputError(f"{name} {point.tolist()} liegt in einem Hindernis.")


def build_tree(
    r_s: Sequence[float],
    r_t: Sequence[float],
    obstacles: Sequence[Cuboid],
    params: RrtParams,
    space: FlightSpace,
    rng: np.random.Generator | None = None,
    seeds: Sequence[Sequence[float]] = (),
) -> tuple[Tree, np.ndarray]:
    """Baut den RRT*-Baum ab ``r_t`` auf und liefert ihn mit dem Pfad ``[r_s, ..., r_t]``.

    ``seeds`` sind bereits bekannte freie Punkte (z. B. überlebende Knoten eines früheren
    Baums), die vor dem Sampling ohne Schrittbegrenzung eingefügt werden.
    """
    start = np.asarray(r_s, dtype=float)
    target = np.asarray(r_t, dtype=float)
    _check_free("Startpunkt", start, space, obstacles)
    _check_free("Zielpunkt", target, space, obstacles)
    rng = rng if rng is not None else np.random.default_rng(params.seed)

    grown = _GrowingTree(target, capacity=params.n_max + len(seeds) + 2)
    for seed in seeds:
        if grown.size > params.n_max:
            break
        point = np.asarray(seed, dtype=float)
        if space.contains(point) and not point_in_any(point, obstacles):
            grown.add(point, obstacles, params.epsilon_m, params.rho_m, steer=False)

    max_samples = params.n_max * params.max_samples_factor
    samples = 0
    # r_t zählt zu N: Schleife läuft, solange size(V) <= N.
    while grown.size <= params.n_max:
        if samples >= max_samples:
            LOGGER.warning("RRT*: Stichprobenlimit %d bei %d Knoten erreicht.", max_samples, grown.size)
            break
        samples += 1
        r_rand = sample_free(space, obstacles, rng)
        grown.add(r_rand, obstacles, params.epsilon_m, params.rho_m)

    start_index = grown.add(start, obstacles, params.epsilon_m, params.rho_m, steer=False, rewire=False)
    if start_index is None:
        raise PlanningFailure(
            f"Startpunkt {start.tolist()} konnte nach {samples} Stichproben nicht mit dem Baum verbunden werden."
        )
    tree = grown.freeze()
    path = tree.path_from(start_index)
    LOGGER.info(
        "RRT*: %d Knoten, %d Stichproben, Pfad mit %d Wegpunkten (Kosten %.3f m).",
        tree.size,
        samples,
        len(path),
        float(tree.cost_to_target[start_index]),
    )
    return tree, path
