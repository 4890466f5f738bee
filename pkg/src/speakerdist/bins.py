"""Half-open distance bins shared by dataset statistics and evaluation."""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BinSpec:
    """Ascending, non-overlapping half-open intervals ``[a, b)`` in metres."""

    edges: tuple

    def __post_init__(self):
        edges = tuple((float(a), float(b)) for a, b in self.edges)
        for a, b in edges:
            if not a < b:
                raise ValueError(f"empty bin [{a}, {b})")
        for (_, b0), (a1, _) in zip(edges, edges[1:]):
            if a1 < b0:
                raise ValueError("bins must be ascending and non-overlapping")
        object.__setattr__(self, "edges", edges)

    @property
    def labels(self):
        return [label_for(a, b) for a, b in self.edges]

    def assign(self, y):
        """Bin index per value, -1 for values outside every bin."""
        y = np.asarray(y, dtype=float)
        out = np.full(y.shape, -1, dtype=int)
        for i, (a, b) in enumerate(self.edges):
            out[(y >= a) & (y < b)] = i
        return out

    def to_list(self):
        return [list(e) for e in self.edges]


def label_for(a, b):
    return f"[{a:g},{b:g})"


SYNTHETIC_BINS = BinSpec(((1, 2), (2, 4), (4, 8), (8, 14)))
VOICEHOME_BINS = BinSpec(((1, 2), (2, 3), (3, 4.5)))
STARSS_BINS = BinSpec(((1, 2), (2, 2.5), (2.5, 3)))
