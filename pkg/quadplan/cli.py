"""Kommandos der Kommandozeile: Offline-Planung, Szenariosimulation, Erkennungs-Benchmark, Laufarchiv."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections.abc import Callable, Iterable, Iterator, Sequence
from contextlib import contextmanager
from pathlib import Path
from typing import Any, TypeVar

import numpy as np
import yaml
from pydantic import ValidationError
from sqlalchemy.orm import Session

from . import crud
from .dependencies import Settings, get_db
from .errors import InvalidInputError, MissionFailure, PlanningException
from .planning.geometry import Cuboid
from .planning.traj_qp import FLAT_OUTPUTS
from .perception import benchmark_detectors, synthesize_frames
from .replanner import PlannerSetup, plan_offline
from .report import render_mission_report
from .schemas import PlanResult, Scenario, TraceRecord
from .sim import SimulationResult, run_scenario

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_PLANNING = 4
EXIT_MISSION = 5

DEFAULT_FRAMES = 81
DEFAULT_TRIALS = 20

PLAN_SAMPLE_COLUMNS = [
    "t_s",
    "x_m",
    "y_m",
    "z_m",
    "yaw_rad",
    "vx_mps",
    "vy_mps",
    "vz_mps",
    "yaw_rate_radps",
]
BENCH_COLUMNS = ["method", "mean_ms", "std_ms", "frames", "trials", "obstacle_count"]
RUN_COLUMNS = [
    "id",
    "scenario",
    "seed",
    "status",
    "mission_duration_s",
    "replan_count",
    "detection_count",
    "min_clearance_m",
    "peak_yaw_rate_radps",
    "created_at",
]
EVENT_COLUMNS = ["run_id", "t_s", "type", "payload"]
BENCH_ARCHIVE_COLUMNS = ["id", *BENCH_COLUMNS, "noise", "created_at"]

T = TypeVar("T")


class ScenarioParseError(Exception):
    """Szenariodatei nicht lesbar oder kein gültiges YAML-Dokument."""


def trace_columns() -> list[str]:
    columns = ["t_s", "event"]
    columns += [f"{name}_d{k}" for k in range(5) for name in FLAT_OUTPUTS]
    columns += ["px_m", "py_m", "pz_m", "vx_mps", "vy_mps", "vz_mps"]
    columns += [f"r{row}{col}" for row in range(3) for col in range(3)]
    columns += ["p_radps", "q_radps", "r_radps", "thrust_n", "mx_nm", "my_nm", "mz_nm"]
    columns += ["f1_n", "f2_n", "f3_n", "f4_n"]
    return columns


def _cell(value: Any) -> str:
    # repr liefert die kürzeste exakt rückführbare Darstellung
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def trace_row(record: TraceRecord) -> list[str]:
    values: list[Any] = [record.t_s, record.event.value]
    values += [value for row in record.sigma for value in row]
    values += [*record.position_m, *record.velocity_mps, *record.rotation, *record.omega_radps]
    values += [record.thrust_n, *record.moment_nm, *record.rotor_forces_n]
    return [_cell(value) for value in values]


def _write_csv(path: Path, header: list[str], rows: Iterable[Sequence[Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([_cell(value) for value in row] for row in rows)


def load_scenario(path: str | Path) -> Scenario:
    """Liest und validiert eine YAML-Szenariodatei."""
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ScenarioParseError(f"Szenario {path} nicht lesbar: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioParseError(f"Szenario {path} enthält kein Objekt auf oberster Ebene.")
    return Scenario.model_validate(data)


def dump_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.model_dump(mode="json"), sort_keys=False, allow_unicode=True)


def _seed(scenario: Scenario, override: int | None) -> int:
    seed = scenario.seed if override is None else override
    if seed < 0:
        raise InvalidInputError(f"Die Saat muss nichtnegativ sein, erhalten: {seed}")
    return seed


@contextmanager
def _archive_session(url: str) -> Iterator[Session]:
    sessions = get_db(url)
    db = next(sessions)
    try:
        yield db
    finally:
        sessions.close()


def _archive(url: str | None, action: Callable[[Session], T]) -> T | None:
    """Archiviert Ergebnisse, falls eine Datenbank konfiguriert ist; Fehler werden nur protokolliert."""
    if not url:
        return None
    try:
        with _archive_session(url) as db:
            return action(db)
    except crud.CRUDException as exc:
        LOGGER.warning("Archivierung fehlgeschlagen: %s", exc)
        return None


# --- plan --------------------------------------------------------------------------------------


def build_plan_result(scenario: Scenario, seed: int) -> PlanResult:
    """Offline-Block auf den von Beginn an vorhandenen Hindernissen."""
    setup = PlannerSetup.from_scenario(scenario)
    obstacles = [Cuboid(spec.min_m, spec.max_m) for spec in scenario.obstacles if spec.appear_at_s <= 0.0]
    planner_seed, _ = np.random.SeedSequence(seed).spawn(2)
    start = scenario.start
    ctx = plan_offline(setup, start.position_m, start.yaw_rad, obstacles, np.random.default_rng(planner_seed))
    trajectory = ctx.trajectory

    dt = scenario.feasibility_dt_s
    count = int(np.floor((trajectory.t_end - trajectory.t_start) / dt)) + 1
    times = trajectory.t_start + dt * np.arange(count)
    if times[-1] < trajectory.t_end:
        times = np.append(times, trajectory.t_end)
    samples = [
        [float(t), *map(float, trajectory.evaluate_all(float(t), 0)), *map(float, trajectory.evaluate_all(float(t), 1))]
        for t in times
    ]
    return PlanResult(
        scenario=scenario.name,
        waypoints_raw=[tuple(map(float, point)) for point in ctx.raw_path],
        waypoints_los=[tuple(map(float, point)) for point in ctx.waypoints],
        yaws_rad=[float(yaw) for yaw in ctx.path.yaws],
        segment_times_s=[float(value) for value in ctx.path.segment_times],
        knots_s=[float(value) for value in trajectory.knot_times],
        coefficients={
            name: output.coefficients.tolist() for name, output in zip(FLAT_OUTPUTS, trajectory.outputs)
        },
        sample_columns=PLAN_SAMPLE_COLUMNS,
        samples=samples,
    )


def cmd_plan(args: argparse.Namespace, settings: Settings) -> int:
    scenario = load_scenario(args.scenario)
    result = build_plan_result(scenario, _seed(scenario, args.seed))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(result.model_dump_json(indent=2), encoding="utf-8")
    LOGGER.info("Plan mit %d Wegpunkten nach %s geschrieben.", len(result.waypoints_los), out)
    return EXIT_OK


# --- simulate ----------------------------------------------------------------------------------


def write_simulation(out_dir: Path, scenario: Scenario, result: SimulationResult, report: bool) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "trace.csv", trace_columns(), (trace_row(record) for record in result.trace))
    with (out_dir / "events.jsonl").open("w", encoding="utf-8") as handle:
        for event in result.events:
            handle.write(json.dumps(event.model_dump(mode="json"), sort_keys=True) + "\n")
    (out_dir / "summary.json").write_text(result.summary.model_dump_json(indent=2), encoding="utf-8")
    if report:
        (out_dir / "report.html").write_text(render_mission_report(scenario, result), encoding="utf-8")


def cmd_simulate(args: argparse.Namespace, settings: Settings) -> int:
    scenario = load_scenario(args.scenario)
    seed = _seed(scenario, args.seed)
    url = args.archive or settings.database_url
    try:
        result = run_scenario(scenario, seed)
    except MissionFailure as exc:
        _archive(url, lambda db: crud.record_failed_run(db, scenario, seed, exc.sim_time))
        raise
    write_simulation(Path(args.out), scenario, result, settings.report_enabled)
    run = _archive(url, lambda db: crud.record_simulation_run(db, scenario, result))
    if run is not None:
        LOGGER.info("Lauf %d archiviert.", run.id)
    return EXIT_OK


# --- bench-detect ------------------------------------------------------------------------------


def cmd_bench_detect(args: argparse.Namespace, settings: Settings) -> int:
    scenario = load_scenario(args.scenario)
    if args.frames < 1 or args.trials < 1:
        raise InvalidInputError("--frames und --trials müssen mindestens 1 sein.")
    noise = not args.no_noise
    if not noise:
        scenario = scenario.model_copy(update={"camera": scenario.camera.model_copy(update={"noise_sigma_m": 0.0})})
    frame_seed, bench_seed = np.random.SeedSequence(_seed(scenario, args.seed)).spawn(2)
    frames = synthesize_frames(scenario, args.frames, np.random.default_rng(frame_seed))
    rows = benchmark_detectors(
        frames,
        scenario.detection,
        args.trials,
        np.random.default_rng(bench_seed),
        noise_sigma=scenario.camera.noise_sigma_m,
        noise=noise,
    )
    out = Path(args.out)
    _write_csv(out, BENCH_COLUMNS, ([row.method.value, row.mean_ms, row.std_ms, row.frames, row.trials,
                                     row.obstacle_count] for row in rows))
    if settings.bench_keep_frames:
        frame_dir = out.parent / f"{out.stem}_frames"
        frame_dir.mkdir(parents=True, exist_ok=True)
        for index, frame in enumerate(frames):
            np.save(frame_dir / f"frame_{index:03d}.npy", frame)
    _archive(args.archive or settings.database_url, lambda db: crud.record_benchmark(db, rows, noise))
    return EXIT_OK


# --- runs --------------------------------------------------------------------------------------


def _run_rows(db: Session) -> list[list[Any]]:
    return [
        [
            run.id,
            run.scenario,
            run.seed,
            run.status.value,
            run.mission_duration_s,
            run.replan_count,
            run.detection_count,
            "" if run.min_clearance_m is None else run.min_clearance_m,
            "" if run.peak_yaw_rate_radps is None else run.peak_yaw_rate_radps,
            run.created_at.isoformat(),
        ]
        for run in crud.list_simulation_runs(db)
    ]


def _event_rows(db: Session, run_id: int) -> list[list[Any]]:
    run = crud.get_simulation_run(db, run_id)
    if run is None:
        raise InvalidInputError(f"Kein archivierter Lauf mit der Nummer {run_id}.")
    return [[run.id, event.t_s, event.type.value, event.payload] for event in run.events]


def _benchmark_rows(db: Session) -> list[list[Any]]:
    return [
        [
            row.id,
            row.method.value,
            row.mean_ms,
            row.std_ms,
            row.frames,
            row.trials,
            row.obstacle_count,
            row.noise,
            row.created_at.isoformat(),
        ]
        for row in crud.list_benchmark_runs(db)
    ]


def cmd_runs(args: argparse.Namespace, settings: Settings) -> int:
    """Listet archivierte Läufe, die Ereignisse eines Laufs oder die Benchmark-Zeilen."""
    url = args.archive or settings.database_url
    if not url:
        raise InvalidInputError("Kein Laufarchiv konfiguriert (--archive oder QUADPLAN_DATABASE_URL).")
    with _archive_session(url) as db:
        if args.run_id is not None:
            header, rows = EVENT_COLUMNS, _event_rows(db, args.run_id)
        elif args.benchmarks:
            header, rows = BENCH_ARCHIVE_COLUMNS, _benchmark_rows(db)
        else:
            header, rows = RUN_COLUMNS, _run_rows(db)
    if args.out:
        _write_csv(Path(args.out), header, rows)
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([_cell(value) for value in row] for row in rows)
    return EXIT_OK


COMMANDS: dict[str, Callable[[argparse.Namespace, Settings], int]] = {
    "plan": cmd_plan,
    "simulate": cmd_simulate,
    "bench-detect": cmd_bench_detect,
    "runs": cmd_runs,
}


def report_error(kind: str, message: str) -> None:
    """Schreibt einen maschinenlesbaren Fehler nach stderr."""
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def dispatch(args: argparse.Namespace, settings: Settings) -> int:
    """Führt ein Kommando aus und bildet Ausnahmen auf Exit-Codes ab."""
    try:
        return COMMANDS[args.command](args, settings)
    except (ScenarioParseError, OSError) as exc:
        report_error("parse", str(exc))
        return EXIT_PARSE
    except (ValidationError, InvalidInputError) as exc:
        report_error("validation", str(exc))
        return EXIT_VALIDATION
    except MissionFailure as exc:
        report_error("mission", str(exc))
        return EXIT_MISSION
    except PlanningException as exc:
        report_error("planning", str(exc))
        return EXIT_PLANNING
