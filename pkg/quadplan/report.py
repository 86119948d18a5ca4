"""HTML-Missionsbericht."""

from __future__ import annotations

import math
from pathlib import Path
from typing import TYPE_CHECKING

from jinja2 import Environment, FileSystemLoader, select_autoescape

from .models import EventType
from .schemas import Scenario

if TYPE_CHECKING:
    from .sim import SimulationResult

TEMPLATE_DIR = Path(__file__).resolve().parent / "templates"

_environment = Environment(
    loader=FileSystemLoader(TEMPLATE_DIR),
    autoescape=select_autoescape(["html"]),
    keep_trailing_newline=True,
)


def _format_number(value: float | None, digits: int = 3) -> str:
    if value is None:
        return "–"
    if math.isinf(value):
        return "∞"
    return f"{value:.{digits}f}"


_environment.filters["num"] = _format_number


def render_mission_report(scenario: Scenario, result: SimulationResult) -> str:
    """Rendert Zusammenfassung, Ereignisliste und Neuplanungszeitpunkte einer Mission."""
    events = [event for event in result.events if event.type != EventType.SCAN]
    template = _environment.get_template("report.html")
    return template.render(
        scenario=scenario,
        summary=result.summary,
        events=events,
        replan_times=result.replan_times,
        waypoints=[tuple(float(v) for v in point) for point in result.context.path.positions],
    )
