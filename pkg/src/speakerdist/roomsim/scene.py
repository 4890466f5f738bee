"""Data types for shoebox scenes and impulse responses."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

SPEED_OF_SOUND = 343.0
SAMPLE_RATE = 16000
BANDS_HZ = (125, 250, 500, 1000, 2000, 4000)

# Surface order used everywhere: floor z=0, ceiling z=Lz, west x=0,
# east x=Lx, south y=0, north y=Ly.
SURFACES = ("floor", "ceiling", "west", "east", "south", "north")
SURFACE_CLASS = {"floor": "floor", "ceiling": "ceiling", "west": "wall",
                 "east": "wall", "south": "wall", "north": "wall"}
# index into SURFACES for the kernel's (x0, x1, y0, y1, z0, z1) ordering
KERNEL_ORDER = (2, 3, 4, 5, 0, 1)

MIN_WALL_CLEARANCE = 0.1
MAX_ELEVATION_DEG = 35.0


class SceneError(ValueError):
    """Raised for geometrically invalid scenes."""


@dataclass(frozen=True)
class Material:
    name: str
    absorption: tuple[float, ...]
    surface: str | None = None

    def __post_init__(self):
        a = tuple(float(v) for v in self.absorption)
        if len(a) != len(BANDS_HZ):
            raise ValueError(f"material {self.name!r}: need {len(BANDS_HZ)} bands, got {len(a)}")
        if any(not (0.0 <= v <= 1.0) for v in a):
            raise ValueError(f"material {self.name!r}: absorption outside [0, 1]: {a}")
        object.__setattr__(self, "absorption", a)

    @classmethod
    def uniform(cls, alpha, name=None):
        return cls(name or f"uniform_{alpha:g}", (alpha,) * len(BANDS_HZ))


@dataclass(frozen=True)
class RoomSpec:
    dims: tuple[float, float, float]
    materials: tuple[Material, ...]

    def __post_init__(self):
        dims = tuple(float(v) for v in self.dims)
        if len(dims) != 3 or any(v <= 0 for v in dims):
            raise SceneError(f"room dimensions must be 3 positive values, got {self.dims}")
        if len(self.materials) != len(SURFACES):
            raise SceneError(f"need one material per surface ({len(SURFACES)}), got {len(self.materials)}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "materials", tuple(self.materials))

    @classmethod
    def uniform(cls, dims, alpha):
        m = Material.uniform(alpha)
        return cls(tuple(dims), (m,) * len(SURFACES))

    @property
    def volume(self):
        return float(np.prod(self.dims))

    def surface_areas(self):
        """Areas in SURFACES order."""
        lx, ly, lz = self.dims
        return np.array([lx * ly, lx * ly, ly * lz, ly * lz, lx * lz, lx * lz])

    def absorption_matrix(self):
        """(6 surfaces, 6 bands) absorption coefficients in SURFACES order."""
        return np.array([m.absorption for m in self.materials])

    def reflection_matrix(self):
        """Pressure reflection factors sqrt(1 - alpha) in kernel surface order."""
        beta = np.sqrt(1.0 - self.absorption_matrix())
        return beta[list(KERNEL_ORDER)]


@dataclass(frozen=True)
class SceneSpec:
    room: RoomSpec
    source_pos: tuple[float, float, float]
    mic_pos: tuple[float, float, float]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "source_pos", tuple(float(v) for v in self.source_pos))
        object.__setattr__(self, "mic_pos", tuple(float(v) for v in self.mic_pos))

    @property
    def distance_m(self):
        return float(np.linalg.norm(np.subtract(self.source_pos, self.mic_pos)))

    @property
    def elevation_deg(self):
        v = np.subtract(self.source_pos, self.mic_pos)
        return float(np.degrees(np.arctan2(v[2], np.hypot(v[0], v[1]))))

    def validate(self, clearance=MIN_WALL_CLEARANCE, max_elevation_deg=None):
        """Raise :class:`SceneError` unless both points sit ``clearance`` inside
        the room (and within ``max_elevation_deg`` of horizontal, if given)."""
        dims = np.array(self.room.dims)
        for label, p in (("source", self.source_pos), ("mic", self.mic_pos)):
            p = np.array(p)
            if np.any(p < clearance) or np.any(p > dims - clearance):
                raise SceneError(
                    f"{label} position {tuple(p)} is not at least {clearance} m inside room {tuple(dims)}")
        if self.distance_m <= 0:
            raise SceneError("source and mic coincide")
        if max_elevation_deg is not None and abs(self.elevation_deg) > max_elevation_deg + 1e-9:
            raise SceneError(f"elevation {self.elevation_deg:.1f} deg outside +-{max_elevation_deg}")
        return self

    def swapped(self):
        return replace(self, source_pos=self.mic_pos, mic_pos=self.source_pos)

    def to_dict(self):
        return {
            "dims": list(self.room.dims),
            "materials": [m.name for m in self.room.materials],
            "source_pos": list(self.source_pos),
            "mic_pos": list(self.mic_pos),
            "distance_m": self.distance_m,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Rir:
    taps: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE
    rt60_s: float = float("nan")
    drr_db: float = float("nan")
    direct_delay_samples: float = float("nan")
    flags: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 1 or taps.size == 0:
            raise ValueError("rir taps must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(taps)):
            raise ValueError("rir taps must be finite")
        object.__setattr__(self, "taps", taps)

    @property
    def energy(self):
        return float(np.sum(self.taps ** 2))

    def with_(self, **kw):
        return replace(self, **kw)
