"""Datenbankoperationen auf dem Laufarchiv."""

from __future__ import annotations

import json
from collections.abc import Iterable
from typing import TYPE_CHECKING

from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import Session, selectinload

from . import schemas
from .models import BenchmarkRun, RunEvent, RunStatus, SimulationRun

if TYPE_CHECKING:
    from .sim import SimulationResult


class CRUDException(RuntimeError):
    """Basisausnahme für Archivoperationen."""


def _finite_or_none(value: float | None) -> float | None:
    if value is None or value != value or value in (float("inf"), float("-inf")):
        return None
    return value


def record_simulation_run(db: Session, scenario: schemas.Scenario, result: SimulationResult) -> SimulationRun:
    summary = result.summary
    run = SimulationRun(
        scenario=scenario.name,
        seed=summary.seed,
        status=RunStatus.COMPLETED,
        mission_duration_s=summary.mission_duration_s,
        replan_count=summary.replan_count,
        detection_count=summary.detection_count,
        min_clearance_m=_finite_or_none(summary.min_clearance_m),
        peak_yaw_rate_radps=summary.peak_yaw_rate_after_replan_radps,
    )
    run.events = [
        RunEvent(t_s=event.t_s, type=event.type, payload=json.dumps(event.payload, sort_keys=True))
        for event in result.events
    ]
    try:
        db.add(run)
        db.commit()
    except SQLAlchemyError as exc:
        db.rollback()
        raise CRUDException(f"Simulationslauf konnte nicht archiviert werden: {exc}") from exc
    db.refresh(run)
    return run


def record_failed_run(db: Session, scenario: schemas.Scenario, seed: int, sim_time: float) -> SimulationRun:
    run = SimulationRun(scenario=scenario.name, seed=seed, status=RunStatus.FAILED, mission_duration_s=sim_time)
    try:
        db.add(run)
        db.commit()
    except SQLAlchemyError as exc:
        db.rollback()
        raise CRUDException(f"Fehlgeschlagener Lauf konnte nicht archiviert werden: {exc}") from exc
    db.refresh(run)
    return run


def record_benchmark(db: Session, rows: Iterable[schemas.BenchmarkRow], noise: bool) -> list[BenchmarkRun]:
    runs = [
        BenchmarkRun(
            method=row.method,
            mean_ms=row.mean_ms,
            std_ms=row.std_ms,
            frames=row.frames,
            trials=row.trials,
            obstacle_count=row.obstacle_count,
            noise=noise,
        )
        for row in rows
    ]
    if not runs:
        raise CRUDException("Keine Benchmarkergebnisse zum Archivieren.")
    try:
        db.add_all(runs)
        db.commit()
    except SQLAlchemyError as exc:
        db.rollback()
        raise CRUDException(f"Benchmark konnte nicht archiviert werden: {exc}") from exc
    for run in runs:
        db.refresh(run)
    return runs


def list_simulation_runs(db: Session) -> list[SimulationRun]:
    return db.query(SimulationRun).order_by(SimulationRun.id).all()


def get_simulation_run(db: Session, run_id: int) -> SimulationRun | None:
    return (
        db.query(SimulationRun)
        .options(selectinload(SimulationRun.events))
        .filter(SimulationRun.id == run_id)
        .first()
    )


def list_benchmark_runs(db: Session) -> list[BenchmarkRun]:
    return db.query(BenchmarkRun).order_by(BenchmarkRun.id).all()
