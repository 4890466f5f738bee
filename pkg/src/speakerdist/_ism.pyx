# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled image-source accumulation kernel.

Walks the shoebox image lattice and deposits each image's per-band
amplitude into a polyphase grid ``out[band, phase, sample]``.  The
fractional-delay filtering and band shaping happen afterwards in
:mod:`speakerdist.roomsim.synth`.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor

cnp.import_array()


cdef void _axis_tables(double pos, double length, int order,
                       double[:] coord, double[:] gain_near_exp,
                       double[:] gain_far_exp) noexcept nogil:
    cdef int n, m, i
    for i in range(2 * order + 1):
        n = i - order
        if n % 2 == 0:
            coord[i] = n * length + pos
        else:
            coord[i] = (n + 1) * length - pos
        if n >= 0:
            gain_far_exp[i] = (n + 1) // 2
            gain_near_exp[i] = n // 2
        else:
            m = -n
            gain_near_exp[i] = (m + 1) // 2
            gain_far_exp[i] = m // 2


def accumulate_images(double[:] src, double[:] mic, double[:] dims,
                      double[:, :] beta, long[:] order,
                      double fs, double c, Py_ssize_t n_samples,
                      int oversample):
    """Deposit all lattice images into a (6, oversample, n_samples) grid.

    ``beta`` is (6 surfaces, 6 bands) of pressure reflection factors with
    surfaces ordered x0, x1, y0, y1, z0, z1.  Returns ``(grid, count)``
    where ``count`` is the number of images that landed inside the grid.
    """
    cdef Py_ssize_t nb = beta.shape[1]
    out_arr = np.zeros((nb, oversample, n_samples), dtype=np.float64)
    cdef double[:, :, :] out = out_arr
    cdef int ax, i, j, k, b, ox, oy, oz
    cdef Py_ssize_t idx, q
    cdef double scale = fs * oversample / c
    cdef double dx2, dxy2, d, amp, delay_q
    cdef long count = 0

    ox = order[0]; oy = order[1]; oz = order[2]
    # per-axis image coordinates and per-band gains
    gx = np.empty((2 * ox + 1, nb)); gy = np.empty((2 * oy + 1, nb)); gz = np.empty((2 * oz + 1, nb))
    cx = np.empty(2 * ox + 1); cy = np.empty(2 * oy + 1); cz = np.empty(2 * oz + 1)
    for ax, (o, cc, gg) in enumerate(((ox, cx, gx), (oy, cy, gy), (oz, cz, gz))):
        ne = np.empty(2 * o + 1); fe = np.empty(2 * o + 1)
        _axis_tables(src[ax], dims[ax], o, cc, ne, fe)
        for b in range(nb):
            gg[:, b] = np.power(beta[2 * ax, b], ne) * np.power(beta[2 * ax + 1, b], fe)
    cdef double[:] vcx = cx, vcy = cy, vcz = cz
    cdef double[:, :] vgx = gx, vgy = gy, vgz = gz
    cdef double gxy[16]
    cdef double mx = mic[0], my = mic[1], mz = mic[2]
    cdef double limit = <double>n_samples * oversample

    if nb > 16:
        raise ValueError("at most 16 bands supported")

    with nogil:
        for i in range(2 * ox + 1):
            dx2 = (vcx[i] - mx) * (vcx[i] - mx)
            for j in range(2 * oy + 1):
                dxy2 = dx2 + (vcy[j] - my) * (vcy[j] - my)
                if sqrt(dxy2) * scale >= limit:
                    continue
                for b in range(nb):
                    gxy[b] = vgx[i, b] * vgy[j, b]
                for k in range(2 * oz + 1):
                    d = sqrt(dxy2 + (vcz[k] - mz) * (vcz[k] - mz))
                    delay_q = d * scale
                    if delay_q >= limit:
                        continue
                    q = <Py_ssize_t>floor(delay_q + 0.5)
                    idx = q // oversample
                    if idx >= n_samples:
                        continue
                    count += 1
                    for b in range(nb):
                        amp = gxy[b] * vgz[k, b] / d
                        out[b, q % oversample, idx] += amp
    return out_arr, count
