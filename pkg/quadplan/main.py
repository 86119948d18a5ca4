"""Einstiegspunkt der Kommandozeile ``quadplan``."""

from __future__ import annotations

import argparse
import logging
from collections.abc import Sequence

from .cli import DEFAULT_FRAMES, DEFAULT_TRIALS, dispatch
from .dependencies import get_settings


def create_parser() -> argparse.ArgumentParser:
    """Erzeugt den Parser mit den Unterkommandos plan, simulate, bench-detect und runs."""

    parser = argparse.ArgumentParser(
        prog="quadplan",
        description="Zweistufige Online-Trajektorienplanung für Quadrokopter.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def scenario_command(name: str, help_text: str, out_help: str) -> argparse.ArgumentParser:
        command = subparsers.add_parser(name, help=help_text)
        command.add_argument("--scenario", required=True, help="YAML-Szenariodatei")
        command.add_argument("--out", required=True, help=out_help)
        command.add_argument("--seed", type=int, default=None, help="überschreibt die Saat des Szenarios")
        return command

    scenario_command("plan", "Offline-Planung ausführen", "Ausgabedatei (JSON)")

    simulate = scenario_command("simulate", "Szenario simulieren", "Ausgabeverzeichnis")
    simulate.add_argument("--archive", default=None, help="Datenbank-URL des Laufarchivs")

    bench = scenario_command("bench-detect", "Laufzeitvergleich der Hinderniserkennung", "Ausgabedatei (CSV)")
    bench.add_argument("--frames", type=int, default=DEFAULT_FRAMES)
    bench.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    bench.add_argument("--no-noise", action="store_true", help="rauschfreie Variante")
    bench.add_argument("--archive", default=None, help="Datenbank-URL des Laufarchivs")

    runs = subparsers.add_parser("runs", help="archivierte Simulationsläufe auflisten")
    runs.add_argument("--archive", default=None, help="Datenbank-URL des Laufarchivs")
    runs.add_argument("--out", default=None, help="Ausgabedatei (CSV), sonst stdout")
    view = runs.add_mutually_exclusive_group()
    view.add_argument("--run-id", type=int, default=None, help="Ereignisse eines einzelnen Laufs ausgeben")
    view.add_argument("--benchmarks", action="store_true", help="archivierte Benchmark-Zeilen auflisten")

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = create_parser().parse_args(argv)
    settings = get_settings()
    logging.basicConfig(
        level=settings.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return dispatch(args, settings)


if __name__ == "__main__":
    raise SystemExit(main())
