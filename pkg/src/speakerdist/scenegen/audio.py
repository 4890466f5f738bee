"""Mono 16 kHz clips: I/O, reverberant convolution, calibrated noise mixing."""
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import signal
from scipy.io import wavfile

SAMPLE_RATE = 16000
PEAK_LEVEL = 0.9


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono audio at 16 kHz.

    Use :meth:`from_array` to ingest audio at any other rate; the
    constructor itself only accepts 16 kHz.
    """

    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE
    source_id: str = ""

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError(f"clip must be mono (1-D), got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("clip contains non-finite samples")
        if int(self.sample_rate_hz) != SAMPLE_RATE:
            raise ValueError(f"clips are stored at {SAMPLE_RATE} Hz; use AudioClip.from_array to resample")
        object.__setattr__(self, "samples", x)

    @classmethod
    def from_array(cls, x, sample_rate_hz, source_id=""):
        return cls(resample(x, sample_rate_hz), SAMPLE_RATE, source_id)

    @property
    def duration_s(self):
        return self.samples.size / self.sample_rate_hz

    @property
    def power(self):
        return float(np.mean(self.samples ** 2)) if self.samples.size else 0.0

    def __len__(self):
        return self.samples.size


def resample(x, from_hz, to_hz=SAMPLE_RATE):
    """Polyphase resampling along the last axis (no-op when rates match)."""
    x = np.asarray(x, dtype=np.float64)
    if int(from_hz) == int(to_hz):
        return x
    r = Fraction(int(to_hz), int(from_hz))
    return signal.resample_poly(x, r.numerator, r.denominator, axis=-1)


def read_wav(path, channel=0):
    """Read a WAV file as float64 in [-1, 1]; multichannel files give ``channel``."""
    path = Path(path)
    sr, data = wavfile.read(path)
    if np.issubdtype(data.dtype, np.integer):
        info = np.iinfo(data.dtype)
        if data.dtype == np.uint8:
            data = (data.astype(np.float64) - 128.0) / 128.0
        else:
            data = data.astype(np.float64) / max(abs(info.min), info.max)
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 2:
        data = data[:, channel]
    return data, int(sr)


def load_clip(path, channel=0, source_id=None):
    x, sr = read_wav(path, channel)
    return AudioClip.from_array(x, sr, source_id if source_id is not None else Path(path).stem)


def save_clip(path, clip):
    """Write 32-bit float mono WAV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(path, clip.sample_rate_hz, clip.samples.astype(np.float32))
    return path


def fit_length(x, n):
    """Trim or zero-pad ``x`` to ``n`` samples."""
    if x.size >= n:
        return x[:n]
    return np.concatenate([x, np.zeros(n - x.size)])


def convolve_scene(dry, rir, duration_s=None):
    """Reverberant rendering of ``dry`` through ``rir``.

    Full linear convolution (dry length + RIR length - 1), then trimmed or
    zero-padded to ``duration_s`` when given.
    """
    if int(rir.sample_rate_hz) != dry.sample_rate_hz:
        raise ValueError(f"sample rates differ: clip {dry.sample_rate_hz} Hz, rir {rir.sample_rate_hz} Hz")
    if not np.any(dry.samples):
        raise ValueError(f"dry clip {dry.source_id!r} is silent")
    wet = signal.fftconvolve(dry.samples, rir.taps)
    if duration_s is not None:
        wet = fit_length(wet, int(round(duration_s * dry.sample_rate_hz)))
    return AudioClip(wet, dry.sample_rate_hz, dry.source_id)


def peak_normalize(clip, level=PEAK_LEVEL):
    peak = np.max(np.abs(clip.samples))
    if peak == 0:
        raise ValueError("cannot normalize a silent clip")
    return AudioClip(clip.samples * (level / peak), clip.sample_rate_hz, clip.source_id)


def noise_gain(clean_power, noise_power, snr_db):
    """Scale for the noise so the mixture has the requested SNR."""
    if clean_power <= 0 or noise_power <= 0:
        raise ValueError("clean and noise power must be positive")
    return math.sqrt(clean_power / (noise_power * 10.0 ** (snr_db / 10.0)))


def mix_noise(clean, noise, snr_db, rng_seed=None):
    """Add a random segment of ``noise`` to ``clean`` at ``snr_db``.

    The segment has the clean clip's length and starts at a seeded random
    offset; powers are full-signal means.  ``snr_db=inf`` returns ``clean``.
    """
    if snr_db is None or snr_db == math.inf:
        return clean
    n = len(clean)
    if len(noise) < n:
        raise ValueError(f"noise ({len(noise)} samples) is shorter than the clip ({n})")
    rng = np.random.default_rng(rng_seed)
    start = int(rng.integers(0, len(noise) - n + 1))
    seg = noise.samples[start:start + n]
    g = noise_gain(clean.power, float(np.mean(seg ** 2)), snr_db)
    return AudioClip(clean.samples + g * seg, clean.sample_rate_hz, clean.source_id)


def measure_snr(clean, mixture):
    """SNR in dB of ``mixture`` with respect to its clean component."""
    resid = np.asarray(mixture, dtype=float) - np.asarray(clean, dtype=float)
    return 10.0 * math.log10(np.mean(np.asarray(clean, dtype=float) ** 2) / np.mean(resid ** 2))
