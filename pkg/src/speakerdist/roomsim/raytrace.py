"""Stochastic ray tracing of the diffuse late-reverberation envelope.

Rays leave the source uniformly; at each wall hit their per-band energy is
scaled by ``1 - alpha`` and, with probability ``scattering``, they leave in
a Lambertian direction instead of the specular one.  Energy crossing a
sphere around the receiver is histogrammed in time, normalised so that a
free-field path of length ``d`` would register ``1/d**2`` -- the same
scale as an image with unit gain.
"""
import numpy as np

from .scene import KERNEL_ORDER, SPEED_OF_SOUND


def _sphere_fraction_inside(center, radius, dims, n=20000, seed=1234):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n, 3))
    v *= (rng.random(n) ** (1 / 3) / np.linalg.norm(v, axis=1))[:, None]
    p = np.asarray(center) + radius * v
    inside = np.all((p >= 0) & (p <= np.asarray(dims)), axis=1)
    return max(inside.mean(), 1e-3)


def _lambert(normal_axis, sign, rng, n):
    """Cosine-weighted directions around the inward normal of one wall."""
    u1, u2 = rng.random(n), rng.random(n)
    r, phi = np.sqrt(u1), 2 * np.pi * u2
    local = np.column_stack([r * np.cos(phi), r * np.sin(phi), np.sqrt(1 - u1)])
    out = np.empty((n, 3))
    others = [a for a in range(3) if a != normal_axis]
    out[:, others[0]] = local[:, 0]
    out[:, others[1]] = local[:, 1]
    out[:, normal_axis] = sign * local[:, 2]
    return out


def energy_histogram(scene, length_s, bin_s, *, n_rays=20000, scattering=0.2,
                     receiver_radius=0.3, c=SPEED_OF_SOUND, seed=0):
    """Per-band received energy per time bin, shape (6, n_bins)."""
    rng = np.random.default_rng(seed)
    dims = np.asarray(scene.room.dims, dtype=float)
    mic = np.asarray(scene.mic_pos, dtype=float)
    # (6 surfaces in kernel order x0,x1,y0,y1,z0,z1, bands)
    refl = (1.0 - scene.room.absorption_matrix())[list(KERNEL_ORDER)]
    nb = refl.shape[1]
    n_bins = int(np.ceil(length_s / bin_s))
    hist = np.zeros((nb, n_bins))

    d = rng.normal(size=(n_rays, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    p = np.tile(np.asarray(scene.source_pos, dtype=float), (n_rays, 1))
    travelled = np.zeros(n_rays)
    energy = np.ones((n_rays, nb))
    max_path = c * length_s
    frac = _sphere_fraction_inside(mic, receiver_radius, dims)
    norm = 4 * np.pi / (n_rays * (4 / 3) * np.pi * receiver_radius ** 3 * frac)
    r2 = receiver_radius ** 2
    alive = np.arange(n_rays)

    while alive.size:
        pa, da = p[alive], d[alive]
        with np.errstate(divide="ignore", invalid="ignore"):
            tw = np.where(da > 0, (dims - pa) / da, np.where(da < 0, -pa / da, np.inf))
        axis = np.argmin(tw, axis=1)
        step = tw[np.arange(alive.size), axis]

        # receiver crossing along this segment
        w = mic - pa
        proj = np.einsum("ij,ij->i", w, da)
        perp2 = np.einsum("ij,ij->i", w, w) - proj ** 2
        hit = perp2 < r2
        if hit.any():
            h = np.sqrt(r2 - perp2[hit])
            enter = np.clip(proj[hit] - h, 0, step[hit])
            leave = np.clip(proj[hit] + h, 0, step[hit])
            chord = leave - enter
            ok = chord > 0
            if ok.any():
                idx = alive[hit][ok]
                t = (travelled[idx] + 0.5 * (enter[ok] + leave[ok])) / c
                b = (t / bin_s).astype(np.int64)
                inb = b < n_bins
                wts = energy[idx[inb]] * (chord[ok][inb] * norm)[:, None]
                for band in range(nb):
                    hist[band] += np.bincount(b[inb], weights=wts[:, band], minlength=n_bins)

        # advance to the wall and reflect
        p[alive] = pa + step[:, None] * da
        travelled[alive] += step
        far = da[np.arange(alive.size), axis] > 0
        surface = 2 * axis + far
        energy[alive] *= refl[surface]
        new_d = da.copy()
        new_d[np.arange(alive.size), axis] *= -1
        # draw for every ray so the stream never depends on absorption
        scat = rng.random(n_rays)[alive] < scattering
        for ax in range(3):
            for side in (0, 1):
                m = scat & (axis == ax) & (far == bool(side))
                if m.any():
                    new_d[m] = _lambert(ax, -1.0 if side else 1.0, rng, int(m.sum()))
        d[alive] = new_d
        alive = alive[travelled[alive] < max_path]
    return hist
