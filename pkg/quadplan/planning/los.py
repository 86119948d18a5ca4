"""Sichtlinien-Optimierung: entfernt Wegpunkte, die eine freie Direktverbindung überspringt."""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np

from ..errors import InvalidInputError
from .geometry import Cuboid, segment_collision_free

LOGGER = logging.getLogger(__name__)


def los_prune(path: Sequence[Sequence[float]] | np.ndarray, obstacles: Sequence[Cuboid]) -> np.ndarray:
    """Verbindet vom aktuellen Anker aus den entferntesten sichtbaren Wegpunkt.

    Der Suchindex beginnt jeweils beim letzten Wegpunkt und wandert nur bei einer Kollision
    um eins zurück; er überschreitet den Anker nie. Erster und letzter Punkt bleiben erhalten.
    """
    waypoints = [np.asarray(point, dtype=float) for point in path]
    if len(waypoints) < 2:
        raise InvalidInputError("Die Sichtlinien-Optimierung benötigt mindestens zwei Wegpunkte.")

    anchor = 0
    i = 0
    while anchor < len(waypoints) - 1:
        target = max(len(waypoints) - 1 - i, anchor + 1)
        if segment_collision_free(waypoints[anchor], waypoints[target], obstacles):
            del waypoints[anchor + 1 : target]
            anchor += 1
            i = 0
        elif target == anchor + 1:
            # Das direkte Nachbarsegment ist blockiert: Eingabe verletzt die Vorbedingung.
            LOGGER.warning("Segment %d-%d ist nicht kollisionsfrei; Wegpunkt bleibt erhalten.", anchor, target)
            anchor += 1
            i = 0
        else:
            i += 1

    pruned = np.array(waypoints)
    LOGGER.debug("Sichtlinien-Optimierung: %d -> %d Wegpunkte.", len(path), len(pruned))
    return pruned
