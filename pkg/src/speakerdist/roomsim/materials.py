"""Versioned table of octave-band absorption coefficients."""
import json
from collections import defaultdict
from importlib import resources
from pathlib import Path

from .scene import BANDS_HZ, Material

SURFACE_CLASSES = ("floor", "wall", "ceiling")


def load_material_table(path=None):
    """Load materials from the bundled JSON table or a user file."""
    if path is None:
        text = resources.files("speakerdist.roomsim").joinpath("data/materials.json").read_text()
    else:
        text = Path(path).read_text()
    doc = json.loads(text)
    if tuple(doc.get("bands_hz", BANDS_HZ)) != BANDS_HZ:
        raise ValueError(f"material table bands {doc.get('bands_hz')} != {BANDS_HZ}")
    table = [Material(m["name"], tuple(m["absorption"]), m.get("surface")) for m in doc["materials"]]
    if not table:
        raise ValueError("material table is empty")
    return table


def by_surface_class(table):
    """Group a material table by surface class.

    Materials without a class are eligible for every surface.
    """
    groups = defaultdict(list)
    for m in table:
        for cls in SURFACE_CLASSES:
            if m.surface in (cls, None):
                groups[cls].append(m)
    missing = [c for c in SURFACE_CLASSES if not groups[c]]
    if missing:
        raise ValueError(f"material table has no entries for surface class(es) {missing}")
    return dict(groups)
