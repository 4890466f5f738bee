"""STFT magnitude / sin-phase / cos-phase feature stacks."""
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

SAMPLE_RATE = 16000
WINDOW = 512   # 32 ms
HOP = 256      # 50 % overlap
N_BINS = WINDOW // 2 + 1
CHANNEL_NAMES = ("magnitude", "sin_phase", "cos_phase")
SUBSETS = {"all": (0, 1, 2), "magnitude_only": (0,), "phase_only": (1, 2)}

EXTRACTION_CONFIG = {"sample_rate_hz": SAMPLE_RATE, "window": WINDOW, "hop": HOP,
                     "window_fn": "hann_periodic", "padding": "none", "normalization": "none",
                     "zero_magnitude_phase": 0.0}


def extraction_hash():
    blob = json.dumps(EXTRACTION_CONFIG, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    """``data`` is T x F x C; ``channels`` names the C channels in order."""

    data: np.ndarray
    channels: tuple = CHANNEL_NAMES
    frame_hop_s: float = HOP / SAMPLE_RATE
    window_s: float = WINDOW / SAMPLE_RATE

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] != len(self.channels):
            raise ValueError(f"data shape {self.data.shape} does not match channels {self.channels}")

    @property
    def n_frames(self):
        return self.data.shape[0]

    @property
    def n_bins(self):
        return self.data.shape[1]


def n_frames_for(n_samples):
    """Frame count without edge padding."""
    if n_samples < WINDOW:
        return 0
    return 1 + (n_samples - WINDOW) // HOP


def stft(x):
    """Complex one-sided STFT, frames x bins (periodic Hann, no padding)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < WINDOW:
        raise ValueError(f"need a mono signal of at least {WINDOW} samples, got shape {x.shape}")
    frames = sliding_window_view(x, WINDOW)[::HOP]
    return np.fft.rfft(frames * get_window("hann", WINDOW), axis=-1)


def extract_features(clip, dtype=np.float32):
    """T x 257 x 3 stack of |S|, sin(angle S), cos(angle S).

    ``clip`` is an :class:`~speakerdist.scenegen.AudioClip` or a 1-D
    array at 16 kHz.  Bins with exactly zero magnitude get phase 0.
    """
    x = getattr(clip, "samples", clip)
    rate = getattr(clip, "sample_rate_hz", SAMPLE_RATE)
    if rate != SAMPLE_RATE:
        raise ValueError(f"features are defined at {SAMPLE_RATE} Hz, got {rate}")
    s = stft(x)
    mag = np.abs(s)
    safe = np.where(mag > 0, mag, 1.0)
    sin = np.where(mag > 0, s.imag / safe, 0.0)
    cos = np.where(mag > 0, s.real / safe, 1.0)
    return FeatureTensor(np.stack([mag, sin, cos], axis=-1).astype(dtype))


def select_channels(feat, subset):
    """Keep the channels of ``subset`` ("all", "magnitude_only", "phase_only")."""
    if subset not in SUBSETS:
        raise ValueError(f"unknown channel subset {subset!r}; choose from {sorted(SUBSETS)}")
    names = list(feat.channels)
    try:
        idx = [names.index(CHANNEL_NAMES[i]) for i in SUBSETS[subset]]
    except ValueError:
        raise ValueError(f"tensor with channels {feat.channels} has no {subset} channels") from None
    return FeatureTensor(feat.data[:, :, idx], tuple(names[i] for i in idx),
                         feat.frame_hop_s, feat.window_s)


def to_complex(feat):
    """Rebuild the complex STFT from a full three-channel tensor."""
    d = feat.data.astype(np.float64)
    return d[..., 0] * (d[..., 2] + 1j * d[..., 1])


class FeatureCache:
    """One ``.npy`` per clip plus a JSON header (shape, channels, config hash).

    Entries are keyed by the clip path and its size/mtime, so edited audio
    is re-extracted; a header from a different extraction config is a miss.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _key(self, path):
        st = Path(path).stat()
        raw = f"{Path(path).resolve()}|{st.st_size}|{st.st_mtime_ns}|{extraction_hash()}"
        return hashlib.sha256(raw.encode()).hexdigest()[:24]

    def get(self, path, loader):
        """Features of the clip at ``path``; ``loader(path)`` gives the clip on a miss."""
        key = self._key(path)
        npy, head = self.directory / f"{key}.npy", self.directory / f"{key}.json"
        if npy.exists() and head.exists():
            meta = json.loads(head.read_text())
            if meta.get("config_hash") == extraction_hash():
                data = np.load(npy)
                if list(data.shape) == meta["shape"]:
                    return FeatureTensor(data, tuple(meta["channels"]))
        feat = extract_features(loader(path))
        tmp = self.directory / f"{key}.tmp.npy"
        np.save(tmp, feat.data)
        tmp.replace(npy)
        head.write_text(json.dumps({"shape": list(feat.data.shape), "channels": list(feat.channels),
                                    "config_hash": extraction_hash(), "source": str(path)}))
        return feat
