"""Stückweise Polynomtrajektorien je Flachausgang über ein gleichungsbeschränktes QP.

Intern rechnet jedes Segment in normierter Zeit ``s = tau / T_j`` auf [0, 1]; die Koeffizienten
werden bei der Ausgabe auf die segmentlokale Zeit ``tau`` zurückskaliert.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg
from numpy.polynomial import polynomial as P

from ..errors import InvalidInputError, RankDeficientError
from ..schemas import SplineConfig

if TYPE_CHECKING:
    from .yaw_planner import FlatPath

LOGGER = logging.getLogger(__name__)

KKT_RESIDUAL_TOLERANCE = 1e-8
BOUNDARY_MATCH_TOLERANCE = 1e-9
KNOT_TOLERANCE = 1e-9
EQUILIBRATION_PASSES = 8

FLAT_OUTPUTS = ("x", "y", "z", "yaw")


@dataclass(frozen=True)
class BoundaryState:
    """Wert und Ableitungen 1..k eines Flachausgangs an einem Endpunkt."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        if values.ndim != 1 or values.size == 0 or not np.all(np.isfinite(values)):
            raise InvalidInputError(f"Ungültiger Randzustand: {self.values!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def order(self) -> int:
        return len(self.values) - 1

    @property
    def value(self) -> float:
        return float(self.values[0])

    @classmethod
    def at_rest(cls, value: float, order: int) -> BoundaryState:
        values = np.zeros(order + 1)
        values[0] = value
        return cls(values)


@dataclass(frozen=True)
class PiecewiseTrajectory:
    """Polynom je Segment in segmentlokaler Zeit, Knotenzeiten t_1 < ... < t_M."""

    coefficients: np.ndarray
    knot_times: np.ndarray
    order: int
    continuity: int
    kkt_residual: float = 0.0

    def __post_init__(self) -> None:
        if self.coefficients.shape != (len(self.knot_times) - 1, self.order + 1):
            raise InvalidInputError("Koeffizientenmatrix passt nicht zu Knotenzeiten und Ordnung.")
        if not np.all(np.isfinite(self.coefficients)):
            raise InvalidInputError("Koeffizienten müssen endlich sein.")

    @property
    def segment_count(self) -> int:
        return len(self.coefficients)

    @property
    def t_start(self) -> float:
        return float(self.knot_times[0])

    @property
    def t_end(self) -> float:
        return float(self.knot_times[-1])

    @property
    def segment_times(self) -> np.ndarray:
        return np.diff(self.knot_times)

    def segment_index(self, t: float) -> int:
        index = int(np.searchsorted(self.knot_times, t, side="right")) - 1
        return min(max(index, 0), self.segment_count - 1)

    def derivative_coefficients(self, segment: int, k: int) -> np.ndarray:
        return P.polyder(self.coefficients[segment], k) if k > 0 else self.coefficients[segment]

    def evaluate_segment(self, segment: int, tau: float | np.ndarray, k: int = 0) -> float | np.ndarray:
        """Ableitung ``k`` von Segment ``segment`` bei lokaler Zeit ``tau`` (auch außerhalb [0, T_j])."""
        if k > self.order:
            return np.zeros_like(np.asarray(tau, dtype=float)) if np.ndim(tau) else 0.0
        return P.polyval(tau, self.derivative_coefficients(segment, k))

    def sample(self, times: np.ndarray, k: int = 0) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        indices = np.clip(np.searchsorted(self.knot_times, t, side="right") - 1, 0, self.segment_count - 1)
        result = np.empty_like(t)
        for segment in np.unique(indices):
            mask = indices == segment
            result[mask] = self.evaluate_segment(int(segment), t[mask] - self.knot_times[segment], k)
        return result


def segment_times(
    positions: Sequence[Sequence[float]] | np.ndarray, yaws: Sequence[float] | np.ndarray, config: SplineConfig
) -> np.ndarray:
    """T_j = max(Abstand / v_avg, |Gierwinkeländerung| / omega_avg, T_min)."""
    points = np.asarray(positions, dtype=float)
    angles = np.asarray(yaws, dtype=float)
    if len(points) < 2 or len(angles) != len(points):
        raise InvalidInputError("Segmentzeiten benötigen mindestens zwei Wegpunkte mit je einem Gierwinkel.")
    if min(config.v_avg_mps, config.omega_avg_radps, config.t_min_s) <= 0:
        raise InvalidInputError("v_avg, omega_avg und T_min müssen positiv sein.")
    distance = np.linalg.norm(np.diff(points, axis=0), axis=1)
    turn = np.abs(np.diff(angles))
    floor = np.full(len(distance), config.t_min_s)
    return np.maximum.reduce([distance / config.v_avg_mps, turn / config.omega_avg_radps, floor])


def cost_matrix(n: int, weights: Sequence[float], T: float) -> np.ndarray:
    """Q_j mit p^T Q_j p = Integral über [0, T] von sum_i w_i (P^(i))^2 (Gewichte w_1..w_n)."""
    if T <= 0:
        raise InvalidInputError(f"Segmentdauer muss positiv sein, erhalten: {T}")
    Q = np.zeros((n + 1, n + 1))
    for i, weight in enumerate(weights, start=1):
        if weight == 0 or i > n:
            continue
        for a in range(i, n + 1):
            for b in range(i, n + 1):
                power = a + b - 2 * i + 1
                Q[a, b] += weight * math.perm(a, i) * math.perm(b, i) * T**power / power
    return Q


def _derivative_row(n: int, k: int, t: float) -> np.ndarray:
    row = np.zeros(n + 1)
    for a in range(k, n + 1):
        row[a] = math.perm(a, k) * (t ** (a - k) if a > k else 1.0)
    return row


def endpoint_map(n: int, T: float, n_c: int) -> np.ndarray:
    """Zeilen für die Ableitungen 0..n_c bei lokaler Zeit 0, danach bei T."""
    if T <= 0:
        raise InvalidInputError(f"Segmentdauer muss positiv sein, erhalten: {T}")
    return np.array([_derivative_row(n, k, t) for t in (0.0, T) for k in range(n_c + 1)])


def _equilibrate(kkt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Symmetrische Diagonalskalierung nach Ruiz.
    scaled = kkt.copy()
    scale = np.ones(len(kkt))
    for _ in range(EQUILIBRATION_PASSES):
        norms = np.sqrt(np.max(np.abs(scaled), axis=1))
        norms[norms == 0] = 1.0
        scaled /= norms[:, None]
        scaled /= norms[None, :]
        scale /= norms
    return scaled, scale


def kkt_residual(kkt: np.ndarray, solution: np.ndarray, rhs: np.ndarray) -> float:
    numerator = float(np.max(np.abs(kkt @ solution - rhs)))
    denominator = float(np.linalg.norm(kkt, np.inf) * np.max(np.abs(solution)) + np.max(np.abs(rhs)))
    return numerator / denominator if denominator > 0 else numerator


class _ConstraintBuilder:
    """Sammelt Gleichungsbedingungen in normierter Segmentzeit, gruppiert nach Segment."""

    def __init__(self, n: int, durations: np.ndarray) -> None:
        self.n = n
        self.durations = durations
        self.width = len(durations) * (n + 1)
        self.rows: list[np.ndarray] = []
        self.rhs: list[float] = []
        self.owner: list[int] = []

    def _row(self, segment: int, k: int, s: float) -> np.ndarray:
        row = np.zeros(self.width)
        start = segment * (self.n + 1)
        row[start : start + self.n + 1] = _derivative_row(self.n, k, s) * self.durations[segment] ** (-k)
        return row

    def pin(self, segment: int, k: int, s: float, value: float) -> None:
        self.rows.append(self._row(segment, k, s))
        self.rhs.append(value)
        self.owner.append(segment)

    def join(self, segment: int, k: int) -> None:
        """Ableitung k am Ende von ``segment - 1`` gleich der am Anfang von ``segment``."""
        self.rows.append(self._row(segment - 1, k, 1.0) - self._row(segment, k, 0.0))
        self.rhs.append(0.0)
        self.owner.append(segment)

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.rows), np.array(self.rhs)

    def first_deficient_segment(self) -> int | None:
        A, _ = self.matrix()
        owner = np.array(self.owner)
        for segment in range(len(self.durations)):
            rows = A[owner <= segment]
            if np.linalg.matrix_rank(rows) < len(rows):
                return segment
        return None


def _check_boundary(name: str, state: BoundaryState, value: float, expected_order: int) -> None:
    if state.order != expected_order:
        raise InvalidInputError(
            f"{name}: {expected_order + 1} Einträge (Wert und Ableitungen) erwartet, erhalten {state.order + 1}."
        )
    if abs(state.value - value) > BOUNDARY_MATCH_TOLERANCE * max(1.0, abs(value)):
        raise InvalidInputError(f"{name}: Randwert {state.value} weicht vom Wegpunkt {value} ab.")


def optimize_spline(
    values: Sequence[float] | np.ndarray,
    times: Sequence[float] | np.ndarray,
    start: BoundaryState,
    end: BoundaryState,
    config: SplineConfig,
    t0: float = 0.0,
) -> PiecewiseTrajectory:
    """Minimiert sum_j J_j unter Wegpunkt-, Stetigkeits- und Randbedingungen (KKT-System).

    Innere Wegpunkte legen nur den Wert fest; die Ableitungen 1..n_c sind dort frei und
    lediglich stetig. Start und Ziel legen Wert und Ableitungen 1..k fest, mit
    ``k = config.boundary_order``.
    """
    waypoints = np.asarray(values, dtype=float)
    durations = np.asarray(times, dtype=float)
    n = config.order
    if len(waypoints) < 2 or len(durations) != len(waypoints) - 1:
        raise InvalidInputError(f"{len(waypoints)} Wegpunkte passen nicht zu {len(durations)} Segmentzeiten.")
    if np.any(durations <= 0) or not np.all(np.isfinite(durations)) or not np.all(np.isfinite(waypoints)):
        raise InvalidInputError("Segmentzeiten müssen positiv und alle Werte endlich sein.")
    boundary = config.boundary_order
    _check_boundary("Startzustand", start, float(waypoints[0]), boundary)
    _check_boundary("Endzustand", end, float(waypoints[-1]), boundary)

    segments = len(durations)
    builder = _ConstraintBuilder(n, durations)
    for k in range(boundary + 1):
        builder.pin(0, k, 0.0, float(start.values[k]))
    for j in range(segments):
        if j > 0:
            builder.pin(j, 0, 0.0, float(waypoints[j]))
            for k in range(1, config.continuity + 1):
                builder.join(j, k)
        if j < segments - 1:
            builder.pin(j, 0, 1.0, float(waypoints[j + 1]))
    for k in range(boundary + 1):
        builder.pin(segments - 1, k, 1.0, float(end.values[k]))

    A, d = builder.matrix()
    if np.linalg.matrix_rank(A) < len(A):
        segment = builder.first_deficient_segment()
        raise RankDeficientError(
            f"Nebenbedingungen ab Segment {segment} linear abhängig (Ordnung {n}, Stetigkeit {config.continuity}).",
            segment=segment,
        )

    size = segments * (n + 1)
    Q = scipy.linalg.block_diag(
        *[cost_matrix(n, [w * T ** (1 - 2 * i) for i, w in enumerate(config.weights, start=1)], 1.0) for T in durations]
    )
    kkt = np.block([[Q, A.T], [A, np.zeros((len(A), len(A)))]])
    rhs = np.concatenate([np.zeros(size), d])

    scaled, scale = _equilibrate(kkt)
    try:
        solution = scale * scipy.linalg.solve(scaled, scale * rhs, assume_a="sym")
        # Eine Nachiteration gegen Rundungsfehler der indefiniten Faktorisierung.
        correction = scale * scipy.linalg.solve(scaled, scale * (rhs - kkt @ solution), assume_a="sym")
        solution = solution + correction
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise RankDeficientError(f"KKT-System singulär: {exc}") from exc

    residual = kkt_residual(kkt, solution, rhs)
    if residual > KKT_RESIDUAL_TOLERANCE:
        LOGGER.warning("KKT-Residuum %.3e überschreitet %.0e.", residual, KKT_RESIDUAL_TOLERANCE)

    normalized = solution[:size].reshape(segments, n + 1)
    powers = np.arange(n + 1)
    coefficients = normalized / durations[:, None] ** powers[None, :]
    knots = t0 + np.concatenate([[0.0], np.cumsum(durations)])
    return PiecewiseTrajectory(
        coefficients=coefficients,
        knot_times=knots,
        order=n,
        continuity=config.continuity,
        kkt_residual=residual,
    )


def evaluate(traj: PiecewiseTrajectory, t: float, k: int = 0) -> float:
    """k-te Ableitung bei t; rechtsstetig an inneren Knoten, bei t_M aus dem letzten Segment."""
    if k < 0:
        raise InvalidInputError(f"Ableitungsordnung muss nichtnegativ sein, erhalten: {k}")
    if not traj.t_start - KNOT_TOLERANCE <= t <= traj.t_end + KNOT_TOLERANCE:
        raise InvalidInputError(f"t={t} liegt außerhalb von [{traj.t_start}, {traj.t_end}].")
    segment = traj.segment_index(t)
    return float(traj.evaluate_segment(segment, t - traj.knot_times[segment], k))


def spline_cost(traj: PiecewiseTrajectory, config: SplineConfig) -> float:
    """Gesamtkosten sum_j p_j^T Q_j p_j in segmentlokaler Zeit."""
    total = 0.0
    for coefficients, T in zip(traj.coefficients, traj.segment_times):
        total += float(coefficients @ cost_matrix(traj.order, config.weights, float(T)) @ coefficients)
    return total


@dataclass(frozen=True)
class FlatTrajectory:
    """Die vier Flachausgänge x, y, z und psi mit gemeinsamen Knotenzeiten."""

    x: PiecewiseTrajectory
    y: PiecewiseTrajectory
    z: PiecewiseTrajectory
    yaw: PiecewiseTrajectory

    @property
    def outputs(self) -> tuple[PiecewiseTrajectory, ...]:
        return (self.x, self.y, self.z, self.yaw)

    @property
    def knot_times(self) -> np.ndarray:
        return self.x.knot_times

    @property
    def t_start(self) -> float:
        return self.x.t_start

    @property
    def t_end(self) -> float:
        return self.x.t_end

    @property
    def kkt_residual(self) -> float:
        return max(output.kkt_residual for output in self.outputs)

    def evaluate_all(self, t: float, k: int = 0) -> np.ndarray:
        """k-te Ableitung von (x, y, z, psi) bei t."""
        return np.array([evaluate(output, t, k) for output in self.outputs])

    def derivatives(self, t: float, max_order: int = 4) -> np.ndarray:
        """(max_order + 1, 4)-Array; t wird auf [t_start, t_end] begrenzt."""
        t = min(max(t, self.t_start), self.t_end)
        return np.array([self.evaluate_all(t, k) for k in range(max_order + 1)])

    def positions(self, times: np.ndarray) -> np.ndarray:
        return np.stack([output.sample(times) for output in (self.x, self.y, self.z)], axis=1)

    def boundary_states(self, t: float, position_order: int, yaw_order: int) -> list[BoundaryState]:
        """Randzustände (Wert und Ableitungen) aller Flachausgänge zum Zeitpunkt t."""
        orders = (position_order, position_order, position_order, yaw_order)
        return [
            BoundaryState(np.array([evaluate(output, t, k) for k in range(order + 1)]))
            for output, order in zip(self.outputs, orders)
        ]


def solve_flat_outputs(
    path: FlatPath,
    position_config: SplineConfig,
    yaw_config: SplineConfig,
    start_states: Sequence[BoundaryState] | None = None,
    end_states: Sequence[BoundaryState] | None = None,
    t0: float = 0.0,
) -> FlatTrajectory:
    """Löst die vier unabhängigen QPs; fehlende Randzustände bedeuten Ruhe am jeweiligen Ende."""
    positions = np.asarray(path.positions, dtype=float)
    yaws = np.asarray(path.yaws, dtype=float)
    configs = (position_config, position_config, position_config, yaw_config)
    columns = (positions[:, 0], positions[:, 1], positions[:, 2], yaws)
    trajectories = []
    for index, (name, values, config) in enumerate(zip(FLAT_OUTPUTS, columns, configs)):
        rest_start = BoundaryState.at_rest(values[0], config.boundary_order)
        rest_end = BoundaryState.at_rest(values[-1], config.boundary_order)
        start = start_states[index] if start_states is not None else rest_start
        end = end_states[index] if end_states is not None else rest_end
        trajectory = optimize_spline(values, path.segment_times, start, end, config, t0=t0)
        LOGGER.debug("QP %s: %d Segmente, Residuum %.2e.", name, trajectory.segment_count, trajectory.kkt_residual)
        trajectories.append(trajectory)
    return FlatTrajectory(*trajectories)
