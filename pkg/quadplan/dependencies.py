"""Gemeinsame Konfiguration und Datenbanksitzungen."""

from __future__ import annotations

from collections.abc import Iterator
from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict
from sqlalchemy.orm import Session

from .database import create_session_factory, init_db


class Settings(BaseSettings):
    """Anwendungskonfiguration (Umgebungsvariablen mit Präfix ``QUADPLAN_``)."""

    database_url: str | None = None
    log_level: str = "INFO"
    report_enabled: bool = True
    bench_keep_frames: bool = False

    model_config = SettingsConfigDict(env_prefix="QUADPLAN_", extra="ignore")


@lru_cache
def get_settings() -> Settings:
    return Settings()


def get_db(url: str) -> Iterator[Session]:
    """Öffnet eine Sitzung auf dem Laufarchiv und legt fehlende Tabellen an."""
    engine, session_factory = create_session_factory(url)
    init_db(engine)
    db = session_factory()
    try:
        yield db
    finally:
        db.close()
        engine.dispose()
