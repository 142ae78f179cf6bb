"""Synthetic test images."""

from __future__ import annotations

import numpy as np


def blob_images(n_images, size, seed=0, n_blobs=6, noise=0.05):
    """Sums of random isotropic Gaussian blobs plus white noise.

    Returns an array of shape (n_images, 1, size, size). Blob centers are
    uniform over the grid, widths uniform in [1, 4] samples and amplitudes
    standard normal.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[:size, :size]
    out = np.empty((n_images, 1, size, size))
    for i in range(n_images):
        img = np.zeros((size, size))
        for _ in range(n_blobs):
            cx, cy = rng.uniform(0, size, 2)
            width = rng.uniform(1, 4)
            img += rng.normal() * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * width ** 2))
        out[i, 0] = img + noise * rng.standard_normal((size, size))
    return out
