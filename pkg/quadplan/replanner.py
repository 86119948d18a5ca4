"""Offline-Planung und Online-Neuplanung gegen neu erkannte Hindernisse."""

from __future__ import annotations

import dataclasses
import logging
import time
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, PlanningException, PlanningFailure, ReplanFailure
from .planning.geometry import (
    Cuboid,
    FlightSpace,
    inflate_all,
    point_in_any,
    points_in_any,
    segment_collision_free,
)
from .planning.los import los_prune
from .planning.rrt_star import Tree, build_tree, graft_path, prune_tree
from .planning.traj_qp import BoundaryState, FlatTrajectory, segment_times, solve_flat_outputs
from .planning.yaw_planner import FlatPath, yaw_waypoints
from .schemas import RrtParams, Scenario, SplineConfig

LOGGER = logging.getLogger(__name__)

MAX_REFINEMENTS = 8
KNOT_EPSILON = 1e-9


@dataclass(frozen=True)
class PlannerSetup:
    """Unveränderliche Planungsparameter einer Mission."""

    space: FlightSpace
    target: np.ndarray
    psi_target: float
    rrt: RrtParams
    position_config: SplineConfig
    yaw_config: SplineConfig
    margin: float
    feasibility_dt: float

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> PlannerSetup:
        return cls(
            space=FlightSpace(Cuboid(scenario.flight_space.min_m, scenario.flight_space.max_m)),
            target=np.asarray(scenario.target.position_m, dtype=float),
            psi_target=scenario.target.yaw_rad,
            rrt=scenario.rrt,
            position_config=scenario.position_spline,
            yaw_config=scenario.yaw_spline,
            margin=scenario.inflation_margin_m,
            feasibility_dt=scenario.feasibility_dt_s,
        )


@dataclass(frozen=True)
class PlanContext:
    """Aktueller Planungsstand: Wegpunkte, Trajektorie, Baum und bekannte (nicht aufgeblähte) Hindernisse.

    ``waypoints`` sind die Wegpunkte nach Sichtlinien-Optimierung bzw. Reparatur, ``path`` enthält
    zusätzlich die beim Anpassen der Trajektorie eingefügten Mittelpunkte.
    """

    path: FlatPath
    trajectory: FlatTrajectory
    tree: Tree
    obstacles: tuple[Cuboid, ...]
    setup: PlannerSetup
    raw_path: np.ndarray
    waypoints: np.ndarray
    revision: int = 0

    @property
    def inflated(self) -> list[Cuboid]:
        return inflate_all(self.obstacles, self.setup.margin)


def trajectory_feasible(
    traj: FlatTrajectory, obstacles: Sequence[Cuboid], dt: float, t_from: float | None = None
) -> float | None:
    """Frühester Abtastzeitpunkt in einem (aufgeblähten) Hindernis, sonst None."""
    if dt <= 0:
        raise InvalidInputError(f"dt muss positiv sein, erhalten: {dt}")
    if not obstacles:
        return None
    start = traj.t_start if t_from is None else min(max(t_from, traj.t_start), traj.t_end)
    count = int(np.floor((traj.t_end - start) / dt)) + 1
    times = start + dt * np.arange(count)
    if times[-1] < traj.t_end:
        times = np.append(times, traj.t_end)
    inside = points_in_any(traj.positions(times), obstacles)
    if not np.any(inside):
        return None
    return float(times[int(np.argmax(inside))])


def _with_recomputed_yaw(positions: np.ndarray, psi_start: float, psi_target: float, config: SplineConfig) -> FlatPath:
    yaws = yaw_waypoints(positions, psi_start, psi_target)
    return FlatPath(positions=positions, yaws=yaws, segment_times=segment_times(positions, yaws, config))


def bisect_segments(path: FlatPath, segments: Sequence[int], config: SplineConfig) -> FlatPath:
    """Fügt die Mittelpunkte der angegebenen Segmente als Wegpunkte ein."""
    positions = [point for point in path.positions]
    for segment in sorted(set(segments), reverse=True):
        midpoint = 0.5 * (path.positions[segment] + path.positions[segment + 1])
        positions.insert(segment + 1, midpoint)
    return _with_recomputed_yaw(np.array(positions), float(path.yaws[0]), float(path.yaws[-1]), config)


def bisect_first_segments(path: FlatPath, config: SplineConfig) -> FlatPath:
    """Halbiert die ersten beiden Segmente, sofern mindestens zwei existieren."""
    if len(path.positions) < 3:
        return path
    return bisect_segments(path, (0, 1), config)


def fit_trajectory(
    path: FlatPath,
    setup: PlannerSetup,
    obstacles: Sequence[Cuboid],
    start_states: Sequence[BoundaryState] | None = None,
    t0: float = 0.0,
) -> tuple[FlatPath, FlatTrajectory]:
    """Löst die Spline-QPs und halbiert kollidierende Segmente, bis die Trajektorie frei ist.

    Bleibt nach ``MAX_REFINEMENTS`` Halbierungen eine Kollision, folgt ``PlanningFailure``.
    """
    trajectory = solve_flat_outputs(path, setup.position_config, setup.yaw_config, start_states=start_states, t0=t0)
    for attempt in range(MAX_REFINEMENTS):
        collision = trajectory_feasible(trajectory, obstacles, setup.feasibility_dt)
        if collision is None:
            return path, trajectory
        segment = trajectory.x.segment_index(collision)
        LOGGER.debug("Kollision bei t=%.3f s in Segment %d; Segment wird halbiert (%d).", collision, segment, attempt)
        path = bisect_segments(path, (segment,), setup.position_config)
        trajectory = solve_flat_outputs(path, setup.position_config, setup.yaw_config, start_states=start_states, t0=t0)
    collision = trajectory_feasible(trajectory, obstacles, setup.feasibility_dt)
    if collision is not None:
        raise PlanningFailure(
            f"Trajektorie nach {MAX_REFINEMENTS} Verfeinerungen bei t={collision:.3f} s nicht kollisionsfrei."
        )
    return path, trajectory


def plan_offline(
    setup: PlannerSetup,
    start: Sequence[float],
    psi_start: float,
    obstacles: Sequence[Cuboid],
    rng: np.random.Generator,
) -> PlanContext:
    """Offline-Block: RRT*, Sichtlinien-Optimierung, Gierwinkel, Zeitzuteilung und QP."""
    inflated = inflate_all(obstacles, setup.margin)
    tree, raw_path = build_tree(start, setup.target, inflated, setup.rrt, setup.space, rng)
    pruned = los_prune(raw_path, inflated)
    path = _with_recomputed_yaw(pruned, psi_start, setup.psi_target, setup.position_config)
    path, trajectory = fit_trajectory(path, setup, inflated)
    LOGGER.info(
        "Offline-Plan: %d -> %d Wegpunkte, Dauer %.2f s.", len(raw_path), len(path.positions), trajectory.t_end
    )
    return PlanContext(
        path=path,
        trajectory=trajectory,
        tree=tree,
        obstacles=tuple(obstacles),
        setup=setup,
        raw_path=raw_path,
        waypoints=pruned,
    )


def _blocked_stretch(waypoints: np.ndarray, obstacles: Sequence[Cuboid]) -> tuple[int, int] | None:
    """Kleinster zusammenhängender Bereich [a, b], dessen innere Knoten oder Kanten blockiert sind.

    ``a`` und ``b`` selbst liegen außerhalb der Hindernisse.
    """
    invalid_nodes = np.flatnonzero(points_in_any(waypoints, obstacles))
    invalid_edges = [
        i for i in range(len(waypoints) - 1) if not segment_collision_free(waypoints[i], waypoints[i + 1], obstacles)
    ]
    if len(invalid_nodes) == 0 and not invalid_edges:
        return None
    lows = [int(i) - 1 for i in invalid_nodes] + invalid_edges
    highs = [int(i) + 1 for i in invalid_nodes] + [i + 1 for i in invalid_edges]
    a, b = max(min(lows), 0), min(max(highs), len(waypoints) - 1)
    blocked = set(int(i) for i in invalid_nodes)
    while a > 0 and a in blocked:
        a -= 1
    while b < len(waypoints) - 1 and b in blocked:
        b += 1
    return a, b


def _expanded_space(points: np.ndarray, padding: float, space: FlightSpace) -> FlightSpace:
    lower = np.maximum(points.min(axis=0) - padding, space.bounds.min_corner)
    upper = np.minimum(points.max(axis=0) + padding, space.bounds.max_corner)
    return FlightSpace(Cuboid(np.minimum(lower, points.min(axis=0)), np.maximum(upper, points.max(axis=0))))


def _repair_stretch(
    setup: PlannerSetup, tree: Tree, stretch: np.ndarray, obstacles: Sequence[Cuboid], rng: np.random.Generator
) -> np.ndarray:
    """Lokales RRT* zwischen den Enden des blockierten Bereichs, geimpft mit überlebenden Baumknoten."""
    local_space = _expanded_space(stretch, 2.0 * setup.rrt.rho_m, setup.space)
    nodes = tree.nodes
    near = np.array([local_space.contains(node) for node in nodes], dtype=bool)
    if len(nodes):
        near &= ~points_in_any(nodes, obstacles)
        # Knoten auf den Enden des Bereichs ergäben Kanten der Länge 0.
        for end in (stretch[0], stretch[-1]):
            near &= np.linalg.norm(nodes - end, axis=1) > KNOT_EPSILON
    params = setup.rrt.model_copy(update={"n_max": setup.rrt.replan_nodes})
    _, local_path = build_tree(stretch[0], stretch[-1], obstacles, params, local_space, rng, seeds=nodes[near])
    return los_prune(local_path, obstacles)


def replan(
    ctx: PlanContext,
    current_time: float,
    new_obstacles: Sequence[Cuboid],
    rng: np.random.Generator,
    known: Sequence[Cuboid] | None = None,
) -> PlanContext:
    """Repariert den blockierten Teil des Restpfads und löst die QPs ab dem aktuellen Zustand neu.

    ``known`` ist die vollständige aktualisierte Hindernismenge (Standard: bisherige plus neue).
    Ohne blockierten Bereich und bei kollisionsfreier Trajektorie bleibt der Plan unverändert.
    Knoten und Kanten des Baums in den neuen Hindernissen entfallen, ein lokal reparierter
    Restpfad wird als Kette in den Baum eingehängt.
    """
    if not new_obstacles:
        raise InvalidInputError("Neuplanung ohne neue Hindernisse.")
    trajectory = ctx.trajectory
    if not trajectory.t_start - KNOT_EPSILON <= current_time <= trajectory.t_end + KNOT_EPSILON:
        raise InvalidInputError(f"t={current_time} liegt außerhalb der Trajektorie.")
    setup = ctx.setup
    obstacles = tuple(known) if known is not None else ctx.obstacles + tuple(new_obstacles)
    inflated = inflate_all(obstacles, setup.margin)
    inflated_new = inflate_all(new_obstacles, setup.margin)
    started = time.perf_counter()

    current = trajectory.evaluate_all(current_time, 0)
    position, psi = current[:3], float(current[3])
    if point_in_any(position, inflated):
        raise ReplanFailure(f"Aktuelle Position {position.tolist()} liegt in einem aufgeblähten Hindernis.")

    remaining = ctx.path.positions[trajectory.knot_times > current_time + KNOT_EPSILON]
    waypoints = np.vstack([position, remaining])
    tree = prune_tree(ctx.tree, inflated_new)
    stretch = _blocked_stretch(waypoints, inflated_new)
    if stretch is None and trajectory_feasible(trajectory, inflated, setup.feasibility_dt, current_time) is None:
        LOGGER.info("Neue Hindernisse berühren den Plan nicht (t=%.3f s).", current_time)
        return dataclasses.replace(ctx, obstacles=obstacles, tree=tree)

    if stretch is not None:
        a, b = stretch
        try:
            repaired = _repair_stretch(setup, tree, waypoints[a : b + 1], inflated, rng)
            waypoints = np.vstack([waypoints[:a], repaired, waypoints[b + 1 :]])
            tree = graft_path(tree, waypoints, inflated)
            LOGGER.info("Lokale Reparatur der Wegpunkte %d..%d: %d neue Wegpunkte.", a, b, len(repaired))
        except PlanningException as exc:
            LOGGER.warning("Lokale Reparatur gescheitert (%s); vollständiges RRT* ab aktueller Position.", exc)
            bounds = setup.space.bounds
            full_space = FlightSpace(
                Cuboid(np.minimum(bounds.min_corner, position), np.maximum(bounds.max_corner, position))
            )
            try:
                tree, full_path = build_tree(position, setup.target, inflated, setup.rrt, full_space, rng)
            except PlanningException as fallback_exc:
                raise ReplanFailure(f"Neuplanung gescheitert: {fallback_exc}") from fallback_exc
            waypoints = los_prune(full_path, inflated)

    path = bisect_first_segments(
        _with_recomputed_yaw(waypoints, psi, setup.psi_target, setup.position_config), setup.position_config
    )
    start_states = trajectory.boundary_states(
        current_time, setup.position_config.boundary_order, setup.yaw_config.boundary_order
    )
    try:
        path, new_trajectory = fit_trajectory(path, setup, inflated, start_states=start_states, t0=current_time)
    except PlanningException as exc:
        raise ReplanFailure(f"Spline-Neuberechnung gescheitert: {exc}") from exc
    LOGGER.info(
        "Neuplanung bei t=%.3f s: %d Wegpunkte, neue Ankunft %.2f s, Rechenzeit %.1f ms.",
        current_time,
        len(path.positions),
        new_trajectory.t_end,
        1e3 * (time.perf_counter() - started),
    )
    return PlanContext(
        path=path,
        trajectory=new_trajectory,
        tree=tree,
        obstacles=obstacles,
        setup=setup,
        raw_path=ctx.raw_path,
        waypoints=waypoints,
        revision=ctx.revision + 1,
    )
