"""Dry excitation sources: a directory of recordings or built-in generators.

The built-in speech-like generator is a source-filter model: a jittered
glottal pulse train (or noise, for unvoiced segments) through three
formant resonators, cut into syllables with pauses.  It is not speech, but
it has speech's spectral envelope and on/off structure, which is what the
reverberation cues act on.
"""
import math
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import signal

from .audio import SAMPLE_RATE, AudioClip, load_clip

EXPECTED_LAYOUT = "a directory containing mono .wav files (any sample rate, >= 1 s each), searched recursively"


def _resonator(freq, bw, fs):
    r = math.exp(-math.pi * bw / fs)
    return [1.0, -2.0 * r * math.cos(2 * math.pi * freq / fs), r * r]


def speech_like(duration_s, seed, sample_rate_hz=SAMPLE_RATE):
    """Seeded speech-like signal of ``duration_s`` seconds, peak 0.9."""
    fs = sample_rate_hz
    n = int(round(duration_s * fs))
    if n <= 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(seed)
    out = np.zeros(n)
    f0_base = rng.uniform(90.0, 240.0)
    t = int(rng.uniform(0.0, 0.1) * fs)
    while t < n:
        if rng.random() < 0.25:
            t += int(rng.uniform(0.05, 0.4) * fs)
            continue
        m = min(int(rng.uniform(0.12, 0.35) * fs), n - t)
        if m < 16:
            break
        if rng.random() < 0.8:
            # voiced: pulse train with a slow pitch glide and jitter
            f0 = f0_base * (1 + rng.uniform(-0.15, 0.15)) * np.linspace(1.0, rng.uniform(0.85, 1.15), m)
            f0 *= 1 + 0.01 * rng.standard_normal(m)
            phase = np.cumsum(f0) / fs
            exc = np.diff(np.floor(phase), prepend=np.floor(phase[0])).astype(float)
            exc = signal.lfilter([1.0], [1.0, -0.9], exc)  # glottal roll-off
            formants = [(rng.uniform(300, 900), rng.uniform(60, 120)),
                        (rng.uniform(900, 2500), rng.uniform(80, 150)),
                        (rng.uniform(2300, 3500), rng.uniform(100, 200))]
        else:
            exc = rng.standard_normal(m) * 0.3
            formants = [(rng.uniform(2500, 6000), rng.uniform(800, 2000))]
        seg = exc
        for freq, bw in formants:
            seg = signal.lfilter([1.0 - math.exp(-math.pi * bw / fs)], _resonator(freq, bw, fs), seg)
        seg = seg * np.sin(np.pi * (np.arange(m) + 0.5) / m) ** 0.5
        peak = np.max(np.abs(seg))
        if peak > 0:
            out[t:t + m] += seg / peak * rng.uniform(0.3, 1.0)
        t += m
    peak = np.max(np.abs(out))
    if peak == 0:
        # pathological draw (all pauses); fall back to one voiced burst
        return speech_like(duration_s, (seed, 1), sample_rate_hz)
    return out * (0.9 / peak)


def ambient_noise(n_samples, seed, slope_db_per_octave=-3.0):
    """Seeded stationary coloured Gaussian noise (pink by default), unit power."""
    rng = np.random.default_rng(seed)
    spec = np.fft.rfft(rng.standard_normal(n_samples))
    f = np.fft.rfftfreq(n_samples, 1.0 / SAMPLE_RATE)
    shape = np.ones_like(f)
    shape[1:] = (np.maximum(f[1:], 20.0) / 1000.0) ** (slope_db_per_octave / (20 * math.log10(2)))
    shape[0] = 0.0
    x = np.fft.irfft(spec * shape, n_samples)
    return x / np.sqrt(np.mean(x ** 2))


class ClipSource:
    """Supplies seeded excerpts either from WAV files or from a generator.

    Parameters
    ----------
    directory : path or None
        Recordings to draw from.  ``None`` selects the built-in generator.
    kind : {"speech", "noise"}
        Which built-in generator to use when ``directory`` is None.
    """

    def __init__(self, directory=None, kind="speech"):
        self.kind = kind
        self.directory = None if directory is None else Path(directory)
        self.files = []
        if self.directory is not None:
            if not self.directory.is_dir():
                raise FileNotFoundError(f"{kind} corpus {self.directory} not found; expected {EXPECTED_LAYOUT}")
            self.files = sorted(p for p in self.directory.rglob("*") if p.suffix.lower() == ".wav")
            if not self.files:
                raise FileNotFoundError(f"{kind} corpus {self.directory} has no .wav files; expected {EXPECTED_LAYOUT}")

    @property
    def label(self):
        return "builtin" if self.directory is None else str(self.directory)

    def excerpt(self, seed, duration_s):
        """A clip of at most ``duration_s`` (files shorter than that are used whole)."""
        rng = np.random.default_rng(seed)
        n = int(round(duration_s * SAMPLE_RATE))
        if self.directory is None:
            sub = int(rng.integers(2 ** 31))
            if self.kind == "noise":
                return AudioClip(ambient_noise(n, sub), source_id=f"noise-{sub}")
            return AudioClip(speech_like(duration_s, sub), source_id=f"speech-{sub}")
        path = self.files[int(rng.integers(len(self.files)))]
        clip = _cached_clip(str(path))
        if len(clip) <= n:
            return clip
        start = int(rng.integers(0, len(clip) - n + 1))
        return AudioClip(clip.samples[start:start + n], source_id=clip.source_id)


@lru_cache(maxsize=64)
def _cached_clip(path):
    return load_clip(path)
