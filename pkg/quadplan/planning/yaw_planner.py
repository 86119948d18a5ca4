"""Gierwinkel-Wegpunkte: die Frontkamera zeigt in Flugrichtung."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from ..schemas import SplineConfig
from .traj_qp import segment_times

HORIZONTAL_TOLERANCE = 1e-12


def wrap_angle(angle: float) -> float:
    """Bildet einen Winkel auf (-pi, pi] ab."""
    return math.pi - (math.pi - angle) % (2.0 * math.pi)


def yaw_waypoints(positions: Sequence[Sequence[float]] | np.ndarray, psi_start: float, psi_target: float) -> np.ndarray:
    """Berechnet psi_1..psi_M.

    Innere Wegpunkte übernehmen die Richtung des ausgehenden Segments (atan2 von dy, dx);
    ein rein vertikales Segment erbt den vorherigen Wert. Die Folge wird abgewickelt, sodass
    benachbarte Werte höchstens pi auseinanderliegen. psi_1 ist exakt ``psi_start``, psi_M stimmt
    dagegen nur modulo 2 pi mit ``psi_target`` überein: gewählt wird der Zweig, der psi_(M-1) am
    nächsten liegt.
    """
    points = np.asarray(positions, dtype=float)
    if points.ndim != 2 or points.shape[1] != 3 or len(points) < 2:
        raise InvalidInputError("Gierwinkelplanung benötigt mindestens zwei 3D-Wegpunkte.")
    if not (math.isfinite(psi_start) and math.isfinite(psi_target)):
        raise InvalidInputError("Start- und Zielgierwinkel müssen endlich sein.")

    yaws = np.empty(len(points))
    yaws[0] = psi_start
    for i in range(1, len(points) - 1):
        dx, dy = points[i + 1, :2] - points[i, :2]
        if math.hypot(dx, dy) <= HORIZONTAL_TOLERANCE:
            yaws[i] = yaws[i - 1]
            continue
        heading = math.atan2(dy, dx)
        yaws[i] = yaws[i - 1] + wrap_angle(heading - yaws[i - 1])
    yaws[-1] = yaws[-2] + wrap_angle(psi_target - yaws[-2])
    return yaws


@dataclass(frozen=True)
class FlatPath:
    """Wegpunkte der Position, zugehörige Gierwinkel und Segmentzeiten."""

    positions: np.ndarray
    yaws: np.ndarray
    segment_times: np.ndarray

    def __post_init__(self) -> None:
        count = len(self.positions)
        if len(self.yaws) != count or len(self.segment_times) != count - 1:
            raise InvalidInputError(
                f"Inkonsistente Längen: {count} Wegpunkte, {len(self.yaws)} Gierwinkel, "
                f"{len(self.segment_times)} Segmentzeiten."
            )
        if np.any(np.asarray(self.segment_times) <= 0):
            raise InvalidInputError("Segmentzeiten müssen positiv sein.")

    @property
    def knot_times(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.segment_times)])

    @classmethod
    def build(
        cls,
        positions: Sequence[Sequence[float]] | np.ndarray,
        psi_start: float,
        psi_target: float,
        config: SplineConfig,
    ) -> FlatPath:
        points = np.asarray(positions, dtype=float)
        yaws = yaw_waypoints(points, psi_start, psi_target)
        times = segment_times(points, yaws, config)
        return cls(positions=points, yaws=yaws, segment_times=times)
