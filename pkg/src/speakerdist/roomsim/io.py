"""RIR persistence: 32-bit float mono WAV plus JSON sidecar."""
import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .scene import Rir


def _jsonable(x):
    if isinstance(x, float) and not np.isfinite(x):
        return repr(x)  # 'inf' / 'nan'
    return x


def save_rir(path, rir, scene=None):
    """Write ``path`` (.wav) and ``path.with_suffix('.json')``."""
    path = Path(path)
    wavfile.write(path, rir.sample_rate_hz, rir.taps.astype(np.float32))
    side = {
        "sample_rate_hz": rir.sample_rate_hz,
        "rt60_s": _jsonable(rir.rt60_s),
        "drr_db": _jsonable(rir.drr_db),
        "direct_delay_samples": _jsonable(rir.direct_delay_samples),
        "flags": list(rir.flags),
        "meta": rir.meta,
    }
    if scene is not None:
        side["scene"] = scene.to_dict()
        side["distance_m"] = scene.distance_m
        side["seed"] = scene.seed
    path.with_suffix(".json").write_text(json.dumps(side, indent=1, sort_keys=True))
    return path


def load_rir(path):
    path = Path(path)
    fs, taps = wavfile.read(path)
    side_path = path.with_suffix(".json")
    side = json.loads(side_path.read_text()) if side_path.exists() else {}
    return Rir(np.asarray(taps, dtype=np.float64), int(fs),
               rt60_s=float(side.get("rt60_s", "nan")), drr_db=float(side.get("drr_db", "nan")),
               direct_delay_samples=float(side.get("direct_delay_samples", "nan")),
               flags=tuple(side.get("flags", ())), meta=side.get("meta", {}))
