"""Ausnahmen der Planungsbibliothek."""

from __future__ import annotations

from collections.abc import Sequence


class PlanningException(RuntimeError):
    """Basisausnahme für Planung, Trajektorienerzeugung und Simulation."""


class InvalidInputError(PlanningException, ValueError):
    """Eingaben verletzen eine Vorbedingung."""


class SamplingError(PlanningException):
    """Der freie Raum ist (nahezu) vollständig belegt."""


class PlanningFailure(PlanningException):
    """RRT* konnte den Startpunkt nicht mit dem Baum verbinden."""


class RankDeficientError(PlanningException):
    """Das Gleichungssystem der Spline-Optimierung ist singulär."""

    def __init__(self, message: str, segment: int | None = None) -> None:
        super().__init__(message)
        self.segment = segment


class SingularityError(PlanningException):
    """Singularität der Flachheitsabbildung (freier Fall oder Gimbal Lock)."""


class InfeasibleInputError(PlanningException):
    """Die Rotoraufteilung verlangt negative Schubkräfte."""

    def __init__(self, message: str, forces: Sequence[float]) -> None:
        super().__init__(message)
        self.forces = tuple(float(force) for force in forces)


class ReplanFailure(PlanningException):
    """Die Neuplanung ist vollständig gescheitert."""


class MissionFailure(PlanningException):
    """Die Simulation wurde wegen eines Planungsfehlers abgebrochen."""

    def __init__(self, message: str, sim_time: float) -> None:
        super().__init__(message)
        self.sim_time = sim_time
