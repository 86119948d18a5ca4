"""SQLAlchemy-Modelle für das Archiv von Simulations- und Benchmarkläufen."""

from __future__ import annotations

import enum
from datetime import datetime

from sqlalchemy import Boolean, DateTime, Enum, Float, ForeignKey, Integer, String, Text, func
from sqlalchemy.orm import Mapped, mapped_column, relationship

from .database import Base


class EventType(str, enum.Enum):
    """Ereignisse einer Mission; ``none`` markiert Trace-Zeilen ohne Ereignis."""

    NONE = "none"
    PLAN = "plan"
    SCAN = "scan"
    DETECTION = "detection"
    REPLAN = "replan"
    ARRIVAL = "arrival"


class DetectorMethod(str, enum.Enum):
    """Verfahren der Hinderniserkennung."""

    EIGHT_CORNER = "8corner"
    POINT_CLOUD = "pointcloud"


class RunStatus(str, enum.Enum):
    COMPLETED = "completed"
    FAILED = "failed"


class SimulationRun(Base):
    """Zusammenfassung eines Simulationslaufs."""

    __tablename__ = "simulation_runs"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, index=True)
    scenario: Mapped[str] = mapped_column(String(128), nullable=False)
    seed: Mapped[int] = mapped_column(Integer, nullable=False)
    status: Mapped[RunStatus] = mapped_column(Enum(RunStatus), default=RunStatus.COMPLETED, nullable=False)
    mission_duration_s: Mapped[float] = mapped_column(Float, nullable=False)
    replan_count: Mapped[int] = mapped_column(Integer, default=0, nullable=False)
    detection_count: Mapped[int] = mapped_column(Integer, default=0, nullable=False)
    min_clearance_m: Mapped[float | None] = mapped_column(Float)
    peak_yaw_rate_radps: Mapped[float | None] = mapped_column(Float)
    created_at: Mapped[datetime] = mapped_column(DateTime, server_default=func.now(), nullable=False)

    events: Mapped[list["RunEvent"]] = relationship(
        "RunEvent", back_populates="run", cascade="all, delete-orphan", order_by="RunEvent.id"
    )


class RunEvent(Base):
    """Einzelnes Ereignis eines Simulationslaufs (Nutzlast als JSON-Text)."""

    __tablename__ = "run_events"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, index=True)
    run_id: Mapped[int] = mapped_column(ForeignKey("simulation_runs.id"), nullable=False)
    t_s: Mapped[float] = mapped_column(Float, nullable=False)
    type: Mapped[EventType] = mapped_column(Enum(EventType), nullable=False)
    payload: Mapped[str] = mapped_column(Text(), default="{}", nullable=False)

    run: Mapped[SimulationRun] = relationship("SimulationRun", back_populates="events")


class BenchmarkRun(Base):
    """Laufzeitstatistik eines Erkennungsverfahrens."""

    __tablename__ = "benchmark_runs"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, index=True)
    method: Mapped[DetectorMethod] = mapped_column(Enum(DetectorMethod), nullable=False)
    mean_ms: Mapped[float] = mapped_column(Float, nullable=False)
    std_ms: Mapped[float] = mapped_column(Float, nullable=False)
    frames: Mapped[int] = mapped_column(Integer, nullable=False)
    trials: Mapped[int] = mapped_column(Integer, nullable=False)
    obstacle_count: Mapped[int] = mapped_column(Integer, default=0, nullable=False)
    noise: Mapped[bool] = mapped_column(Boolean, default=True, nullable=False)
    created_at: Mapped[datetime] = mapped_column(DateTime, server_default=func.now(), nullable=False)
