"""Pydantic-Schemas für Szenarien, Planerparameter und Ergebnisdateien."""

from __future__ import annotations

import math
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .models import DetectorMethod, EventType

Vector3 = tuple[float, float, float]


class FrozenModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class RrtParams(FrozenModel):
    """Parameter des RRT*: N, ε, ρ und Zufallssaat."""

    n_max: int = Field(default=5000, ge=2)
    epsilon_m: float = Field(default=0.3, gt=0)
    rho_m: float = Field(default=1.0, gt=0)
    seed: int = Field(default=0, ge=0)
    max_samples_factor: int = Field(default=50, ge=1)
    replan_nodes: int = Field(default=600, ge=2)

    @model_validator(mode="after")
    def _check_radii(self) -> RrtParams:
        if self.epsilon_m > self.rho_m:
            raise ValueError("epsilon_m darf rho_m nicht überschreiten.")
        return self


class SplineConfig(FrozenModel):
    """Ordnung, Gewichte w_1..w_n, Stetigkeitsordnung und Zeitzuteilung eines Flachausgangs."""

    order: int = Field(default=9, ge=1)
    weights: tuple[float, ...] = (0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    continuity: int = Field(default=4, ge=0)
    v_avg_mps: float = Field(default=0.5, gt=0)
    omega_avg_radps: float = Field(default=1.0, gt=0)
    t_min_s: float = Field(default=0.1, gt=0)

    @model_validator(mode="after")
    def _check_weights(self) -> SplineConfig:
        if len(self.weights) != self.order:
            raise ValueError(f"Es werden {self.order} Gewichte erwartet, erhalten: {len(self.weights)}.")
        if any(weight < 0 for weight in self.weights):
            raise ValueError("Gewichte müssen nichtnegativ sein.")
        if not any(weight > 0 for weight in self.weights):
            raise ValueError("Mindestens ein Gewicht muss positiv sein.")
        return self

    @property
    def boundary_order(self) -> int:
        """Höchste an Start und Ziel vorgegebene Ableitung (ein Segment trägt 2(k+1) <= n+1 Bedingungen)."""
        return min(self.continuity, (self.order - 1) // 2)

    @classmethod
    def position_default(cls) -> SplineConfig:
        return cls()

    @classmethod
    def yaw_default(cls) -> SplineConfig:
        return cls(order=7, weights=(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0), continuity=2)


class CameraModel(FrozenModel):
    """Frontkamera (Tiefendaten); Voreinstellung angelehnt an die RealSense R200."""

    h_fov_rad: float = Field(default=math.radians(59.0), gt=0, lt=math.pi)
    v_fov_rad: float = Field(default=math.radians(46.0), gt=0, lt=math.pi)
    max_range_m: float = Field(default=3.5, gt=0)
    rays_h: int = Field(default=64, ge=2)
    rays_v: int = Field(default=48, ge=2)
    noise_sigma_m: float = Field(default=0.01, ge=0)


class DetectionParams(FrozenModel):
    cluster_radius_m: float = Field(default=0.15, gt=0)
    min_points: int = Field(default=10, ge=1)
    delta_m: float = Field(default=0.3, gt=0)
    knn_k: int = Field(default=5, ge=1)


class QuadModelSpec(FrozenModel):
    mass_kg: float = Field(default=1.2, gt=0)
    inertia_kgm2: tuple[Vector3, Vector3, Vector3] = (
        (0.012, 0.0, 0.0),
        (0.0, 0.012, 0.0),
        (0.0, 0.0, 0.022),
    )
    arm_length_m: float = Field(default=0.17, gt=0)
    gravity_mps2: float = Field(default=9.81, gt=0)
    k_m_m: float = Field(default=0.016, gt=0)


class BoxSpec(FrozenModel):
    min_m: Vector3
    max_m: Vector3

    @model_validator(mode="after")
    def _check_order(self) -> BoxSpec:
        if any(low > high for low, high in zip(self.min_m, self.max_m)):
            raise ValueError(f"min_m {self.min_m} liegt nicht unter max_m {self.max_m}.")
        return self

    def contains(self, point: Vector3, margin: float = 0.0) -> bool:
        return all(low - margin <= p <= high + margin for p, low, high in zip(point, self.min_m, self.max_m))


class ObstacleSpec(BoxSpec):
    appear_at_s: float = Field(default=0.0, ge=0)


class PoseSpec(FrozenModel):
    position_m: Vector3
    yaw_rad: float = 0.0


class Scenario(FrozenModel):
    """Vollständige Beschreibung eines Simulationsszenarios."""

    name: str = Field(default="scenario", max_length=128)
    flight_space: BoxSpec
    obstacles: list[ObstacleSpec] = []
    start: PoseSpec
    target: PoseSpec
    camera: CameraModel = CameraModel()
    rrt: RrtParams = RrtParams()
    position_spline: SplineConfig = SplineConfig.position_default()
    yaw_spline: SplineConfig = SplineConfig.yaw_default()
    quad: QuadModelSpec = QuadModelSpec()
    detection: DetectionParams = DetectionParams()
    sensing_period_s: float = Field(default=0.167, gt=0)
    sim_step_s: float = Field(default=0.01, gt=0)
    feasibility_dt_s: float = Field(default=0.01, gt=0)
    inflation_margin_m: float = Field(default=0.3, ge=0)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check_poses(self) -> Scenario:
        for label, pose in (("Start", self.start), ("Ziel", self.target)):
            if not self.flight_space.contains(pose.position_m):
                raise ValueError(f"{label} {pose.position_m} liegt außerhalb des Flugraums.")
        for index, obstacle in enumerate(self.obstacles):
            if obstacle.appear_at_s <= 0.0 and obstacle.contains(self.start.position_m, self.inflation_margin_m):
                raise ValueError(f"Start liegt im aufgeblähten Hindernis {index}.")
            if obstacle.contains(self.target.position_m, self.inflation_margin_m):
                raise ValueError(f"Ziel liegt im aufgeblähten Hindernis {index}.")
        return self


class TraceRecord(BaseModel):
    """Ein Simulationsschritt: Flachausgänge mit Ableitungen, Zustand, Eingang und Rotorkräfte."""

    t_s: float
    sigma: tuple[tuple[float, float, float, float], ...]
    position_m: Vector3
    velocity_mps: Vector3
    rotation: tuple[float, ...]
    omega_radps: Vector3
    thrust_n: float
    moment_nm: Vector3
    rotor_forces_n: tuple[float, float, float, float]
    event: EventType = EventType.NONE

    @field_validator("sigma")
    @classmethod
    def _check_sigma(cls, value: tuple[tuple[float, ...], ...]) -> tuple[tuple[float, ...], ...]:
        if len(value) != 5:
            raise ValueError("sigma enthält die Ableitungen 0 bis 4.")
        return value


class Event(BaseModel):
    t_s: float
    type: EventType
    payload: dict[str, Any] = {}


class MissionSummary(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    scenario: str
    seed: int
    mission_duration_s: float
    scan_count: int = 0
    detection_count: int = 0
    replan_count: int = 0
    replan_times_s: list[float] = []
    known_obstacles: int = 0
    min_clearance_m: float = math.inf
    inflated_violations: int = 0
    peak_yaw_rate_radps: float = 0.0
    peak_yaw_rate_after_replan_radps: float | None = None
    max_thrust_n: float = 0.0
    rotor_infeasible_records: int = 0
    final_position_error_m: float = 0.0


class BenchmarkRow(BaseModel):
    method: DetectorMethod
    mean_ms: float
    std_ms: float
    frames: int
    trials: int
    obstacle_count: int


class PlanResult(BaseModel):
    """Ergebnis des Offline-Blocks für ``quadplan plan``."""

    scenario: str
    waypoints_raw: list[Vector3]
    waypoints_los: list[Vector3]
    yaws_rad: list[float]
    segment_times_s: list[float]
    knots_s: list[float]
    coefficients: dict[str, list[list[float]]]
    sample_columns: list[str]
    samples: list[list[float]]
