"""Random scene generation with per-surface material randomisation."""
from dataclasses import dataclass

import numpy as np

from .materials import by_surface_class, load_material_table
from .scene import MAX_ELEVATION_DEG, MIN_WALL_CLEARANCE, RoomSpec, SceneError, SceneSpec


@dataclass(frozen=True)
class RoomSampling:
    """Ranges for room sampling; tunable, defaults match the bundled table."""
    x_range: tuple[float, float] = (3.0, 15.0)
    y_range: tuple[float, float] = (3.0, 15.0)
    z_range: tuple[float, float] = (2.5, 4.5)
    clearance: float = MIN_WALL_CLEARANCE
    max_elevation_deg: float = MAX_ELEVATION_DEG
    max_room_tries: int = 2000
    direction_tries: int = 16


def _sample_room(rng, cfg, groups):
    dims = (rng.uniform(*cfg.x_range), rng.uniform(*cfg.y_range), rng.uniform(*cfg.z_range))
    floor = groups["floor"][rng.integers(len(groups["floor"]))]
    ceiling = groups["ceiling"][rng.integers(len(groups["ceiling"]))]
    wall = groups["wall"][rng.integers(len(groups["wall"]))]
    return RoomSpec(dims, (floor, ceiling, wall, wall, wall, wall))


def sample_scene(rng_seed, distance_range=(1.0, 14.0), material_table=None, config=None):
    """Draw a random scene; deterministic in ``rng_seed``.

    The distance is drawn uniformly from ``[d_min, d_max)`` first.  Rooms
    (dimensions plus one random material per surface class, walls sharing
    one) are then drawn until one can hold that distance: for each trial
    direction (uniform azimuth, elevation uniform within the allowed
    range) the set of feasible microphone positions is an axis-aligned
    box, from which the microphone is drawn uniformly.
    """
    cfg = config or RoomSampling()
    d_min, d_max = map(float, distance_range)
    if not 0 < d_min < d_max:
        raise ValueError(f"invalid distance range {distance_range}")
    table = load_material_table() if material_table is None else list(material_table)
    if not table:
        raise ValueError("material table is empty")
    groups = by_surface_class(table)
    rng = np.random.default_rng(rng_seed)
    dist = rng.uniform(d_min, d_max)
    el_max = np.radians(cfg.max_elevation_deg)
    m = cfg.clearance
    for _ in range(cfg.max_room_tries):
        room = _sample_room(rng, cfg, groups)
        dims = np.array(room.dims)
        if np.linalg.norm(dims - 2 * m) < dist:
            continue
        for _ in range(cfg.direction_tries):
            az = rng.uniform(0, 2 * np.pi)
            el = rng.uniform(-el_max, el_max)
            v = dist * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
            lo = m - np.minimum(v, 0)
            hi = dims - m - np.maximum(v, 0)
            if np.all(hi > lo):
                mic = rng.uniform(lo, hi)
                seed = int(np.random.SeedSequence(rng_seed).generate_state(1)[0])
                return SceneSpec(room, tuple(mic + v), tuple(mic), seed=seed).validate(
                    m, cfg.max_elevation_deg)
    raise SceneError(
        f"could not place distance {dist:.2f} m in {cfg.max_room_tries} sampled rooms "
        f"(ranges x={cfg.x_range}, y={cfg.y_range}, z={cfg.z_range})")
