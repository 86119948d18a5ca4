"""Gemeinsame Fixtures: Szenarien und eine SQLite-Sitzung im Speicher."""

from __future__ import annotations

from collections.abc import Iterator
from pathlib import Path

import numpy as np
import pytest
import yaml
from sqlalchemy.orm import Session

from quadplan.database import create_session_factory, init_db
from quadplan.schemas import Scenario

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def load_yaml_scenario(name: str) -> Scenario:
    return Scenario.model_validate(yaml.safe_load((SCENARIO_DIR / name).read_text(encoding="utf-8")))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def empty_scenario() -> Scenario:
    return Scenario.model_validate(
        {
            "name": "leer",
            "flight_space": {"min_m": (0.0, 0.0, 0.5), "max_m": (4.0, 4.0, 1.5)},
            "start": {"position_m": (0.5, 0.5, 1.0), "yaw_rad": 0.0},
            "target": {"position_m": (3.5, 3.0, 1.0), "yaw_rad": 0.0},
            "rrt": {"n_max": 300, "epsilon_m": 1.0, "rho_m": 1.0},
            "seed": 1,
        }
    )


@pytest.fixture
def wall_scenario() -> Scenario:
    return Scenario.model_validate(
        {
            "name": "wand",
            "flight_space": {"min_m": (0.0, 0.0, 0.5), "max_m": (4.0, 4.0, 1.5)},
            "obstacles": [{"min_m": (1.8, 0.0, 0.0), "max_m": (2.2, 2.8, 2.0)}],
            "start": {"position_m": (0.5, 0.5, 1.0), "yaw_rad": 0.0},
            "target": {"position_m": (3.5, 0.5, 1.0), "yaw_rad": 0.0},
            "rrt": {"n_max": 800, "epsilon_m": 1.0, "rho_m": 1.0},
            "seed": 2,
        }
    )


@pytest.fixture
def pillar_scenario() -> Scenario:
    return load_yaml_scenario("pillar_course.yaml")


@pytest.fixture
def room_scenario() -> Scenario:
    return load_yaml_scenario("room_experiment.yaml")


@pytest.fixture
def db_session() -> Iterator[Session]:
    engine, session_factory = create_session_factory("sqlite://")
    init_db(engine)
    db = session_factory()
    try:
        yield db
    finally:
        db.close()
        engine.dispose()
