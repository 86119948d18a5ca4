"""Datenbankkonfiguration und Session-Verwaltung für das Laufarchiv."""

from __future__ import annotations

from typing import Any

from sqlalchemy import Engine, create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

Base = declarative_base()


def create_session_factory(url: str) -> tuple[Engine, sessionmaker]:
    """Erzeugt Engine und Session-Fabrik; SQLite darf über Threads hinweg genutzt werden."""
    engine_kwargs: dict[str, Any] = {}
    if url.startswith("sqlite"):
        engine_kwargs["connect_args"] = {"check_same_thread": False}
    engine = create_engine(url, **engine_kwargs)
    return engine, sessionmaker(bind=engine, autocommit=False, autoflush=False)


def init_db(engine: Engine) -> None:
    """Initialisiert die Datenbanktabellen."""
    # Import erst innerhalb der Funktion, um zirkuläre Importe zu vermeiden.
    from . import models  # pylint: disable=import-outside-toplevel

    models  # nur zum Registrieren der Modelle benötigt
    Base.metadata.create_all(bind=engine)
