"""Room acoustic descriptors: Schroeder RT60, DRR, Eyring prediction."""
from typing import NamedTuple

import numpy as np

DRR_WINDOW_S = 0.0025
# a T20 fit needs this much raw decay to stay clear of the truncation tail
MIN_DECAY_RANGE_DB = 35.0
_ENVELOPE_WINDOW_S = 0.01
# tail energy below this fraction of the direct energy counts as anechoic
_ANECHOIC_FLOOR = 1e-12


class Rt60Fit(NamedTuple):
    rt60_s: float
    span_db: float
    flagged: bool


def schroeder_edc_db(taps):
    """Backward-integrated energy decay curve in dB re. total energy."""
    e = np.asarray(taps, dtype=float) ** 2
    edc = np.cumsum(e[::-1])[::-1]
    total = edc[0]
    if total <= 0:
        raise ValueError("impulse response has zero energy")
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(edc / total)


def fit_rt60(taps, sample_rate_hz, start_db=-5.0, stop_db=-25.0):
    """T20-style RT60 fit with diagnostics.

    A line is fitted to the EDC between ``start_db`` and ``stop_db`` and
    extrapolated to 60 dB.  If the EDC never reaches ``stop_db`` the widest
    span below ``start_db`` is used.  The estimate is flagged in that case
    and whenever the raw energy envelope decays by less than
    ``MIN_DECAY_RANGE_DB`` (truncated responses, whose EDC plunges at the
    end regardless of the true decay).
    """
    edc = schroeder_edc_db(taps)
    short = decay_range_db(taps, sample_rate_hz) < MIN_DECAY_RANGE_DB
    finite = np.isfinite(edc)
    floor = edc[finite].min()
    stop = stop_db
    flagged = False
    if floor > stop_db:
        stop = floor
        flagged = True
    sel = finite & (edc <= start_db) & (edc >= stop)
    if sel.sum() < 2:
        # energy vanishes in a single step: no decaying tail
        return Rt60Fit(0.0, 0.0, flagged)
    flagged = flagged or short
    t = np.flatnonzero(sel) / sample_rate_hz
    slope, _ = np.polyfit(t, edc[sel], 1)
    if slope >= 0:
        return Rt60Fit(float("inf"), float(start_db - stop), True)
    return Rt60Fit(float(-60.0 / slope), float(start_db - stop), flagged)


def decay_range_db(taps, sample_rate_hz):
    """Level drop of the 10 ms energy envelope from its peak to the end."""
    e = np.asarray(taps, dtype=float) ** 2
    w = max(1, int(round(_ENVELOPE_WINDOW_S * sample_rate_hz)))
    n = e.size // w
    if n < 2:
        return 0.0
    env = e[:n * w].reshape(n, w).sum(axis=1)
    k = int(np.argmax(env))
    last = env[-1]
    if last <= 0:
        return float("inf")
    return float(10.0 * np.log10(env[k] / last))


def estimate_rt60(rir):
    """RT60 in seconds of a :class:`Rir` via Schroeder integration (T20)."""
    return fit_rt60(rir.taps, rir.sample_rate_hz).rt60_s


def detect_direct_delay(taps, threshold=0.25):
    """Direct-path arrival in (fractional) samples for measured responses.

    Takes the first local maximum of ``|h|`` reaching ``threshold`` times the
    global peak, refined by parabolic interpolation.  Near walls the early
    reflections can sum to over twice the direct pulse, hence the low
    default threshold.
    """
    a = np.abs(np.asarray(taps, dtype=float))
    peak = a.max()
    if peak <= 0:
        raise ValueError("impulse response is all zeros")
    cand = np.flatnonzero(a >= threshold * peak)
    i = int(cand[0])
    while i + 1 < a.size and a[i + 1] > a[i]:
        i += 1
    if 0 < i < a.size - 1:
        y0, y1, y2 = a[i - 1], a[i], a[i + 1]
        den = y0 - 2 * y1 + y2
        if den != 0:
            return i + 0.5 * (y0 - y2) / den
    return float(i)


def compute_drr(rir, window_s=DRR_WINDOW_S):
    """Direct-to-reverberant ratio in dB.

    Direct energy is taken in ``+-window_s`` around the direct arrival; the
    rest is reverberant.  An impulse response without reverberant energy
    returns ``+inf``.
    """
    if not np.isfinite(rir.direct_delay_samples):
        raise ValueError("direct_delay_samples is unknown")
    h2 = rir.taps ** 2
    half = int(round(window_s * rir.sample_rate_hz))
    n0 = int(round(rir.direct_delay_samples))
    lo, hi = max(n0 - half, 0), min(n0 + half + 1, h2.size)
    e_direct = float(h2[lo:hi].sum())
    e_rev = float(h2.sum() - e_direct)
    if e_direct <= 0:
        return float("-inf")
    if e_rev <= _ANECHOIC_FLOOR * e_direct:
        return float("inf")
    return float(10.0 * np.log10(e_direct / e_rev))


def eyring_rt60(room):
    """Per-band Eyring RT60 (s) from area-weighted mean absorption."""
    areas = room.surface_areas()
    alpha = room.absorption_matrix()
    mean_alpha = areas @ alpha / areas.sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = -areas.sum() * np.log1p(-mean_alpha)
        rt = np.where(mean_alpha >= 1.0, 0.0, 0.161 * room.volume / denom)
    return rt


def mid_rt60(room):
    """Eyring RT60 averaged over the 500 Hz and 1 kHz bands."""
    rt = eyring_rt60(room)
    return float(0.5 * (rt[2] + rt[3]))
