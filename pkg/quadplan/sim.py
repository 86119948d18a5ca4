"""Deterministische Szenariosimulation: Offline-Plan, periodische Scans, Erkennung und Neuplanung.

Der Quadrokopter folgt der Trajektorie ideal; Zustand und Eingang jedes Schritts stammen aus der
Flachheitsabbildung.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, MissionFailure, PlanningException
from .flatness import QuadModel, allocate_rotors, flat_sample_at, flat_to_state_input
from .models import EventType
from .perception import cluster_points, detect_obstacles_8corner, render_depth_scan
from .planning.geometry import Cuboid, inflate_all, point_box_distance, points_in_any
from .planning.rrt_star import prune_tree
from .replanner import PlanContext, PlannerSetup, plan_offline, replan, trajectory_feasible
from .schemas import Event, MissionSummary, Scenario, TraceRecord

LOGGER = logging.getLogger(__name__)

TIME_EPSILON = 1e-9
ROTOR_TOLERANCE = 1e-9
MAX_STEPS = 1_000_000


@dataclass(frozen=True)
class TimedObstacle:
    box: Cuboid
    appear_at: float


@dataclass
class SimulationResult:
    trace: list[TraceRecord]
    events: list[Event]
    summary: MissionSummary
    context: PlanContext
    replan_times: list[float] = field(default_factory=list)
    plans: list[PlanContext] = field(default_factory=list)


def scenario_obstacles(scenario: Scenario) -> list[TimedObstacle]:
    return [TimedObstacle(Cuboid(spec.min_m, spec.max_m), spec.appear_at_s) for spec in scenario.obstacles]


def present_at(obstacles: list[TimedObstacle], t: float) -> list[Cuboid]:
    return [obstacle.box for obstacle in obstacles if obstacle.appear_at <= t + TIME_EPSILON]


def _box_payload(boxes: list[Cuboid]) -> list[list[float]]:
    return [list(box.as_tuple()) for box in boxes]


class _Mission:
    """Zustand eines laufenden Szenarios."""

    def __init__(self, scenario: Scenario, seed: int) -> None:
        self.scenario = scenario
        self.seed = seed
        self.model = QuadModel.from_spec(scenario.quad)
        self.setup = PlannerSetup.from_scenario(scenario)
        self.truth = scenario_obstacles(scenario)
        planner_seed, sensor_seed = np.random.SeedSequence(seed).spawn(2)
        self.planner_rng = np.random.default_rng(planner_seed)
        self.sensor_rng = np.random.default_rng(sensor_seed)
        self.known: list[Cuboid] = []
        self.trace: list[TraceRecord] = []
        self.events: list[Event] = []
        self.replan_times: list[float] = []
        self.plans: list[PlanContext] = []
        self.scan_count = 0
        self.detection_count = 0
        self.min_clearance = math.inf
        self.inflated_violations = 0
        self.rotor_infeasible = 0
        self.max_thrust = 0.0
        self.ctx: PlanContext | None = None

    def emit(self, t: float, kind: EventType, **payload: object) -> None:
        self.events.append(Event(t_s=t, type=kind, payload=payload))

    def sense(self, t: float, position: np.ndarray, yaw: float) -> list[Cuboid]:
        """Scan, Clusterbildung und 8-Ecken-Erkennung; liefert die geänderten Hindernisse."""
        scene = present_at(self.truth, t)
        cloud = render_depth_scan(position, yaw, scene, self.scenario.camera, self.sensor_rng)
        detection = self.scenario.detection
        clusters = cluster_points(cloud, detection.cluster_radius_m, detection.min_points)
        new, remaining = detect_obstacles_8corner(self.known, clusters, detection.delta_m)
        changed = [box for box in new if box not in self.known]
        self.known = remaining + new
        self.scan_count += 1
        self.emit(t, EventType.SCAN, points=len(cloud), clusters=len(clusters))
        if changed:
            self.detection_count += 1
            self.emit(t, EventType.DETECTION, boxes=_box_payload(changed), known=len(self.known))
            LOGGER.debug("t=%.3f s: %d neue oder erweiterte Hindernisse.", t, len(changed))
        return changed

    def react(self, t: float, changed: list[Cuboid]) -> bool:
        """Prüft die Trajektorie gegen die aktualisierte Karte und plant bei Bedarf neu."""
        assert self.ctx is not None
        inflated = inflate_all(self.known, self.setup.margin)
        collision = trajectory_feasible(self.ctx.trajectory, inflated, self.setup.feasibility_dt, t_from=t)
        if collision is None:
            tree = prune_tree(self.ctx.tree, inflate_all(changed, self.setup.margin))
            self.ctx = dataclasses.replace(self.ctx, obstacles=tuple(self.known), tree=tree)
            return False
        LOGGER.info("t=%.3f s: Kollision bei t=%.3f s vorhergesagt, Neuplanung.", t, collision)
        try:
            self.ctx = replan(self.ctx, t, changed, self.planner_rng, known=self.known)
        except PlanningException as exc:
            raise MissionFailure(f"Neuplanung bei t={t:.3f} s gescheitert: {exc}", sim_time=t) from exc
        self.replan_times.append(t)
        self.plans.append(self.ctx)
        self.emit(
            t,
            EventType.REPLAN,
            revision=self.ctx.revision,
            predicted_collision_s=collision,
            waypoints=len(self.ctx.path.positions),
            arrival_s=self.ctx.trajectory.t_end,
        )
        return True

    def record(self, t: float, tag: EventType) -> TraceRecord:
        assert self.ctx is not None
        sample = flat_sample_at(self.ctx.trajectory, t)
        try:
            state, control = flat_to_state_input(sample, self.model)
        except PlanningException as exc:
            raise MissionFailure(f"Flachheitsabbildung bei t={t:.3f} s singulär: {exc}", sim_time=t) from exc
        forces = allocate_rotors(control, self.model, check=False)
        if np.any(forces < -ROTOR_TOLERANCE):
            self.rotor_infeasible += 1
        self.max_thrust = max(self.max_thrust, control.thrust)

        scene = present_at(self.truth, t)
        if scene:
            distances = [point_box_distance(state.position, box) for box in scene]
            self.min_clearance = min(self.min_clearance, float(min(distances)))
            if np.any(points_in_any(state.position, inflate_all(scene, self.setup.margin))):
                self.inflated_violations += 1

        record = TraceRecord(
            t_s=t,
            sigma=tuple(tuple(float(v) for v in row) for row in sample.derivatives),
            position_m=tuple(float(v) for v in state.position),
            velocity_mps=tuple(float(v) for v in state.velocity),
            rotation=tuple(float(v) for v in state.rotation.reshape(9)),
            omega_radps=tuple(float(v) for v in state.omega),
            thrust_n=float(control.thrust),
            moment_nm=tuple(float(v) for v in control.moment),
            rotor_forces_n=tuple(float(v) for v in forces),
            event=tag,
        )
        self.trace.append(record)
        return record

    def run(self) -> SimulationResult:
        scenario = self.scenario
        start = np.asarray(scenario.start.position_m, dtype=float)
        psi_start = scenario.start.yaw_rad
        self.sense(0.0, start, psi_start)
        try:
            self.ctx = plan_offline(self.setup, start, psi_start, self.known, self.planner_rng)
        except InvalidInputError:
            raise
        except PlanningException as exc:
            raise MissionFailure(f"Offline-Planung gescheitert: {exc}", sim_time=0.0) from exc
        self.plans.append(self.ctx)
        self.emit(
            0.0,
            EventType.PLAN,
            waypoints_raw=len(self.ctx.raw_path),
            waypoints=len(self.ctx.path.positions),
            arrival_s=self.ctx.trajectory.t_end,
        )

        dt = scenario.sim_step_s
        period = scenario.sensing_period_s
        next_scan = 1
        self.record(0.0, EventType.PLAN)
        step = 1
        while step < MAX_STEPS:
            t = step * dt
            if t >= self.ctx.trajectory.t_end - TIME_EPSILON:
                break
            tag = EventType.NONE
            if t >= next_scan * period - TIME_EPSILON:
                next_scan = int(math.floor(t / period + TIME_EPSILON)) + 1
                current = self.ctx.trajectory.evaluate_all(t, 0)
                changed = self.sense(t, current[:3], float(current[3]))
                tag = EventType.SCAN
                if changed:
                    tag = EventType.REPLAN if self.react(t, changed) else EventType.DETECTION
            self.record(t, tag)
            step += 1
        else:
            raise MissionFailure("Maximale Schrittzahl überschritten.", sim_time=step * dt)

        t_end = self.ctx.trajectory.t_end
        final = self.record(t_end, EventType.ARRIVAL)
        error = float(np.linalg.norm(np.asarray(final.position_m) - self.setup.target))
        self.emit(t_end, EventType.ARRIVAL, position_error_m=error)
        LOGGER.info(
            "Mission %s beendet: %.2f s, %d Neuplanungen, %d Erkennungen.",
            scenario.name,
            t_end,
            len(self.replan_times),
            self.detection_count,
        )
        return SimulationResult(
            trace=self.trace,
            events=self.events,
            summary=self.summarize(t_end, error),
            context=self.ctx,
            replan_times=list(self.replan_times),
            plans=list(self.plans),
        )

    def summarize(self, t_end: float, error: float) -> MissionSummary:
        yaw_rates = np.array([abs(record.sigma[1][3]) for record in self.trace])
        times = np.array([record.t_s for record in self.trace])
        after = None
        if self.replan_times:
            after = float(np.max(yaw_rates[times >= self.replan_times[0] - TIME_EPSILON]))
        return MissionSummary(
            scenario=self.scenario.name,
            seed=self.seed,
            mission_duration_s=t_end,
            scan_count=self.scan_count,
            detection_count=self.detection_count,
            replan_count=len(self.replan_times),
            replan_times_s=list(self.replan_times),
            known_obstacles=len(self.known),
            min_clearance_m=self.min_clearance,
            inflated_violations=self.inflated_violations,
            peak_yaw_rate_radps=float(np.max(yaw_rates)),
            peak_yaw_rate_after_replan_radps=after,
            max_thrust_n=self.max_thrust,
            rotor_infeasible_records=self.rotor_infeasible,
            final_position_error_m=error,
        )


def run_scenario(scenario: Scenario, seed: int | None = None) -> SimulationResult:
    """Führt ein Szenario aus; alle Zufallszahlen stammen aus ``seed`` (Standard: Szenario-Saat)."""
    seed = scenario.seed if seed is None else seed
    if seed < 0:
        raise InvalidInputError(f"Die Saat muss nichtnegativ sein, erhalten: {seed}")
    return _Mission(scenario, seed).run()
