"""Omnidirectional shoebox impulse responses.

Early part: image-source lattice with per-band wall reflection factors.
Late part (default): diffuse tail shaped by the ray-traced energy envelope
of :mod:`.raytrace`.  ``late_model="ism"`` renders the whole response from
images instead.
"""
import math
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy import signal

from .. import kernels
from .._ism_py import axis_images
from .acoustics import compute_drr, eyring_rt60, fit_rt60
from .raytrace import energy_histogram
from .scene import BANDS_HZ, SAMPLE_RATE, SPEED_OF_SOUND, Rir

SINC_HALF_TAPS = 40          # 81-tap filter
HANN_HALF_WIDTH = SINC_HALF_TAPS + 1
DEFAULT_OVERSAMPLE = 16
DEFAULT_MAX_LENGTH_S = 3.0
MIN_LENGTH_S = 0.25
MAX_ORDER_CAP = 400
HIGHPASS_HZ = 20.0
TRANSITION_S = 0.08
DEFAULT_SCATTERING = 0.3
ENVELOPE_BIN_S = 0.004
FADE_S = 0.002


def windowed_sinc(frac):
    """81 taps of a Hann-windowed sinc delayed by ``frac`` samples.

    Tap ``k`` (for ``k = -40..40``) is the response at integer offset ``k``
    from the pulse's integer part.
    """
    t = np.arange(-SINC_HALF_TAPS, SINC_HALF_TAPS + 1) - frac
    return np.sinc(t) * 0.5 * (1.0 + np.cos(np.pi * t / HANN_HALF_WIDTH))


def band_responses(freqs):
    """Zero-phase octave-band weights, shape (6, len(freqs)).

    Triangular in log-frequency between neighbouring band centres, flat
    outside the outermost centres, and summing to exactly 1 at every
    frequency, so any per-band gain vector is linearly interpolated.
    """
    u = np.log2(np.maximum(np.asarray(freqs, dtype=float), 1e-9) / BANDS_HZ[0])
    nb = len(BANDS_HZ)
    out = np.zeros((nb, u.size))
    for b in range(nb):
        w = np.clip(1.0 - np.abs(u - b), 0.0, 1.0)
        if b == 0:
            w[u <= 0] = 1.0
        if b == nb - 1:
            w[u >= nb - 1] = 1.0
        out[b] = w
    return out


@lru_cache(maxsize=4)
def _dc_blocker(fs, cutoff=HIGHPASS_HZ):
    return signal.butter(2, cutoff, "highpass", fs=fs, output="sos")


def block_dc(x, fs, cutoff=HIGHPASS_HZ):
    """Causal 2nd-order Butterworth high-pass.

    Many positive image pulses landing within one sample add coherently at
    the lowest frequencies; without this the late energy is dominated by a
    near-DC drift.  Causal so that no reflection energy leaks in front of
    the direct sound.
    """
    return signal.sosfilt(_dc_blocker(float(fs), cutoff), x)


@lru_cache(maxsize=8)
def _frac_spectra(oversample, nfft):
    spectra = np.empty((oversample, nfft // 2 + 1), dtype=complex)
    idx = np.arange(-SINC_HALF_TAPS, SINC_HALF_TAPS + 1) % nfft
    for p in range(oversample):
        h = np.zeros(nfft)
        h[idx] = windowed_sinc(p / oversample)
        spectra[p] = sfft.rfft(h)
    return spectra


@lru_cache(maxsize=8)
def _band_spectra(nfft, fs):
    return band_responses(np.fft.rfftfreq(nfft, 1.0 / fs))


def _orders_for(dims, reach_s, max_order, c):
    need = [int(math.ceil(c * reach_s / L)) + 1 for L in dims]
    cap = MAX_ORDER_CAP if max_order is None else int(max_order)
    return [min(n, cap) for n in need], need


def synthesize_rir(scene, max_order=None, length_s=None, *, sample_rate_hz=SAMPLE_RATE,
                   c=SPEED_OF_SOUND, oversample=DEFAULT_OVERSAMPLE,
                   max_length_s=DEFAULT_MAX_LENGTH_S, late_model="raytrace",
                   scattering=DEFAULT_SCATTERING, transition_s=None, n_rays=10000):
    """Render the omnidirectional RIR of ``scene``.

    Each image adds a windowed-sinc pulse at its propagation delay with
    amplitude ``gain / distance`` per octave band; the six band signals are
    shaped by :func:`band_responses` and summed.  Image delays are snapped
    to ``1/oversample`` of a sample so fractional-delay filtering happens
    once per polyphase branch; ``oversample=0`` renders every image at its
    exact delay (slow, small rooms only).

    With ``late_model="raytrace"`` images are used up to ``transition_s``
    (default: 80 ms or a quarter of the Eyring RT60, whichever is
    shorter, but at least 20 ms past the direct sound) and the rest
    is Gaussian noise following the ray-traced per-band energy envelope.

    ``length_s`` defaults to 1.5x the longest-band Eyring RT60, clipped to
    ``[0.25 s, max_length_s]``; ``max_order`` defaults to the order that
    fills the image-rendered span.  Truncation of either is recorded in
    ``Rir.flags``.
    """
    if late_model not in ("raytrace", "ism"):
        raise ValueError(f"unknown late_model {late_model!r}")
    scene.validate()
    fs = float(sample_rate_hz)
    rt_pred = float(np.max(eyring_rt60(scene.room)))
    flags = []
    if length_s is None:
        length_s = min(max(1.5 * rt_pred, MIN_LENGTH_S), max_length_s)
    direct_s = scene.distance_m / c
    length_s = max(length_s, direct_s + (SINC_HALF_TAPS + 1) / fs)
    if length_s < rt_pred:
        flags.append("length_truncated")
    n = int(math.ceil(length_s * fs))

    if late_model == "ism":
        ism_s = length_s
    else:
        if transition_s is None:
            # short rooms hand over earlier so the decay fit sees the diffuse tail
            transition_s = max(min(TRANSITION_S, 0.25 * rt_pred), direct_s + 0.02)
        ism_s = min(length_s, transition_s)
    n_ism = min(n, int(math.ceil(ism_s * fs)))
    orders, need = _orders_for(scene.room.dims, ism_s, max_order, c)
    complete_s = min(o * L for o, L in zip(orders, scene.room.dims)) / c
    if any(o < nd for o, nd in zip(orders, need)) and complete_s < min(rt_pred, ism_s):
        flags.append("order_truncated")

    beta = scene.room.reflection_matrix()
    nfft = sfft.next_fast_len(2 * n + 2 * HANN_HALF_WIDTH)
    bands = _band_spectra(nfft, fs)
    direct_amp = 1.0 / scene.distance_m

    if oversample:
        grid, count = kernels.accumulate_images(
            np.asarray(scene.source_pos, dtype=float), np.asarray(scene.mic_pos, dtype=float),
            np.asarray(scene.room.dims, dtype=float), np.ascontiguousarray(beta),
            np.asarray(orders, dtype=np.int64), fs, c, n_ism, int(oversample))
        # take the direct path out so the DC blocker only touches reflections
        q = int(math.floor(direct_s * fs * oversample + 0.5))
        grid[:, q % oversample, q // oversample] -= direct_amp
        frac = _frac_spectra(int(oversample), nfft)
        spec = np.zeros(nfft // 2 + 1, dtype=complex)
        for b in range(grid.shape[0]):
            spec += bands[b] * np.einsum("pf,pf->f", frac, sfft.rfft(grid[b], nfft, axis=-1))
        direct_frac = (q % oversample) / oversample
        direct_at = q // oversample
    else:
        spec, count = _exact_reflections(scene, orders, beta, fs, c, n_ism, nfft, bands)
        direct_at = int(round(direct_s * fs))
        direct_frac = direct_s * fs - direct_at
    taps = sfft.irfft(spec, nfft)[:n]
    meta = {"max_order": orders, "length_s": n / fs, "n_images": int(count),
            "eyring_rt60_s": rt_pred, "oversample": int(oversample),
            "backend": kernels.BACKEND if oversample else "exact", "late_model": late_model}
    if late_model == "raytrace" and n > n_ism:
        taps = taps + _diffuse_tail(scene, n, n_ism, fs, c, nfft, bands, scattering, n_rays)
        meta.update(transition_s=n_ism / fs, scattering=scattering, n_rays=n_rays)
    taps = block_dc(taps, fs)
    k = np.arange(-SINC_HALF_TAPS, SINC_HALF_TAPS + 1)
    pulse = direct_amp * windowed_sinc(direct_frac)
    ok = (direct_at + k >= 0) & (direct_at + k < n)
    taps[direct_at + k[ok]] += pulse[ok]

    rir = Rir(taps, int(sample_rate_hz), direct_delay_samples=direct_s * fs,
              flags=tuple(flags), meta=meta)
    fit = fit_rt60(rir.taps, rir.sample_rate_hz)
    if fit.flagged:
        flags.append("rt60_short_decay")
    return rir.with_(rt60_s=fit.rt60_s, drr_db=compute_drr(rir), flags=tuple(flags))


def _diffuse_tail(scene, n, n_start, fs, c, nfft, bands, scattering, n_rays):
    hist = energy_histogram(scene, n / fs, ENVELOPE_BIN_S, n_rays=n_rays,
                            scattering=scattering, c=c, seed=scene.seed)
    bin_len = ENVELOPE_BIN_S * fs
    centres = (np.arange(hist.shape[1]) + 0.5) * bin_len
    t = np.arange(n)
    rng = np.random.default_rng([scene.seed, 0x7A11])
    noise = rng.standard_normal(n)
    fade = np.clip((t - n_start) / (FADE_S * fs), 0.0, 1.0)
    spec = np.zeros(nfft // 2 + 1, dtype=complex)
    for b in range(hist.shape[0]):
        # energy per sample, interpolated between bin centres
        env = np.interp(t, centres, hist[b] / bin_len)
        spec += bands[b] * sfft.rfft(noise * np.sqrt(env) * fade, nfft)
    return sfft.irfft(spec, nfft)[:n]


def _exact_reflections(scene, orders, beta, fs, c, n, nfft, bands):
    """Reflections with exact per-image fractional delays (direct excluded)."""
    tabs = []
    for ax in range(3):
        coord, near, far = axis_images(scene.source_pos[ax], scene.room.dims[ax], orders[ax])
        g = beta[2 * ax][None, :] ** near[:, None] * beta[2 * ax + 1][None, :] ** far[:, None]
        tabs.append((coord - scene.mic_pos[ax], g))
    (dx, gx), (dy, gy), (dz, gz) = tabs
    d = np.sqrt(dx[:, None, None] ** 2 + dy[None, :, None] ** 2 + dz[None, None, :] ** 2)
    g = gx[:, None, None, :] * gy[None, :, None, :] * gz[None, None, :, :]
    o = np.array(orders)
    g[o[0], o[1], o[2]] = 0.0  # direct path rendered separately
    d, g = d.ravel(), g.reshape(-1, beta.shape[1])
    delay = d * fs / c
    keep = delay < n
    d, g, delay = d[keep], g[keep], delay[keep]
    base = np.round(delay).astype(np.int64)
    k = np.arange(-SINC_HALF_TAPS, SINC_HALF_TAPS + 1)
    t = k[None, :] + (base - delay)[:, None]
    w = np.sinc(t) * 0.5 * (1.0 + np.cos(np.pi * t / HANN_HALF_WIDTH))
    idx = (base[:, None] + k[None, :]) % nfft
    spec = np.zeros(nfft // 2 + 1, dtype=complex)
    for b in range(beta.shape[1]):
        buf = np.bincount(idx.ravel(), weights=(w * (g[:, b] / d)[:, None]).ravel(), minlength=nfft)
        spec += bands[b] * sfft.rfft(buf)
    return spec, int(keep.sum())
