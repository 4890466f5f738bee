"""Shoebox image-source lattice enumeration."""
import itertools

import numpy as np

from .._ism_py import axis_images
from .scene import KERNEL_ORDER


def enumerate_images(scene, max_order):
    """List every image with lattice index ``|n|_inf <= max_order``.

    Returns a list of ``(position, band_gains)`` pairs.  ``band_gains`` is
    the product of ``sqrt(1 - alpha)`` over every wall hit on the way, one
    value per octave band.  The order-0 entry is the source itself.
    """
    if max_order < 0:
        raise ValueError(f"max_order must be >= 0, got {max_order}")
    scene.validate()
    beta = scene.room.reflection_matrix()
    axes = []
    for ax in range(3):
        coord, near, far = axis_images(scene.source_pos[ax], scene.room.dims[ax], max_order)
        gains = beta[2 * ax][None, :] ** near[:, None] * beta[2 * ax + 1][None, :] ** far[:, None]
        axes.append((coord, gains))
    images = []
    # order-0 first: iterate indices sorted by |n|_inf
    idx = range(-max_order, max_order + 1)
    triples = sorted(itertools.product(idx, idx, idx), key=lambda t: max(map(abs, t)))
    for t in triples:
        pos = np.array([axes[a][0][t[a] + max_order] for a in range(3)])
        g = axes[0][1][t[0] + max_order] * axes[1][1][t[1] + max_order] * axes[2][1][t[2] + max_order]
        images.append((pos, g))
    return images


__all__ = ["enumerate_images", "KERNEL_ORDER"]
