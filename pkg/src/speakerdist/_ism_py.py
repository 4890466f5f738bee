"""Pure numpy implementation of the image-source accumulation kernel.

Same contract as the compiled ``_ism.accumulate_images``; used when the
extension is not built or ``SPEAKERDIST_PURE_PYTHON=1`` is set.
"""
import numpy as np


def axis_images(pos, length, order):
    """Image coordinates and (near, far) wall-hit counts along one axis.

    Index ``n`` in ``-order..order``: even ``n`` maps to ``n*L + pos``, odd
    ``n`` to ``(n+1)*L - pos``.  ``|n|`` is the number of reflections on
    this axis.
    """
    n = np.arange(-order, order + 1)
    coord = np.where(n % 2 == 0, n * length + pos, (n + 1) * length - pos)
    m = np.abs(n)
    far = np.where(n >= 0, (m + 1) // 2, m // 2)
    near = np.where(n >= 0, m // 2, (m + 1) // 2)
    return coord.astype(float), near, far


def _axis_gains(beta, ax, near, far):
    return beta[2 * ax][None, :] ** near[:, None] * beta[2 * ax + 1][None, :] ** far[:, None]


def accumulate_images(src, mic, dims, beta, order, fs, c, n_samples, oversample):
    beta = np.asarray(beta, dtype=float)
    nb = beta.shape[1]
    out = np.zeros((nb, oversample, n_samples))
    flat = out.reshape(nb, -1)
    scale = fs * oversample / c
    limit = n_samples * oversample

    tabs = []
    for ax in range(3):
        coord, near, far = axis_images(src[ax], dims[ax], int(order[ax]))
        tabs.append((coord - mic[ax], _axis_gains(beta, ax, near, far)))
    (dx, gx), (dy, gy), (dz, gz) = tabs

    count = 0
    dyz2 = dy[:, None] ** 2 + dz[None, :] ** 2
    gyz = gy[:, None, :] * gz[None, :, :]
    pending_pos, pending_g, pending_n = [], [], 0

    def flush():
        pos = np.concatenate(pending_pos)
        g = np.concatenate(pending_g)
        for b in range(nb):
            flat[b] += np.bincount(pos, weights=g[:, b], minlength=flat.shape[1])
        pending_pos.clear()
        pending_g.clear()

    for i in range(len(dx)):
        d = np.sqrt(dx[i] ** 2 + dyz2)
        q = np.floor(d * scale + 0.5).astype(np.int64)
        keep = q < limit
        if not keep.any():
            continue
        q = q[keep]
        d = d[keep]
        pending_g.append(gyz[keep] * gx[i][None, :] / d[:, None])
        # flat index = phase * n_samples + sample
        pending_pos.append((q % oversample) * n_samples + q // oversample)
        pending_n += len(q)
        count += len(q)
        if pending_n > 2_000_000:
            flush()
            pending_n = 0
    if pending_pos:
        flush()
    return out, count
