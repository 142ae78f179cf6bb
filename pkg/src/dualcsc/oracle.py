"""Dense reference constructions and brute-force solvers for verification.

Everything here materializes the circulant operators explicitly and is only
meant for small grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import spectral
from .exceptions import DimensionError

MAX_GRID = 4096


@dataclass
class DenseProblem:
    """Explicit dictionary matrix.

    ``matrix`` has shape (J*D, K*D); column ``k*D + s`` holds filter ``k``
    (all channels stacked) circularly shifted by the flat grid offset ``s``.
    ``columns[c] == (k, s)`` records that mapping.
    """

    matrix: np.ndarray
    dims: tuple
    n_filters: int
    channels: int
    x: np.ndarray = None

    @property
    def columns(self):
        size = math.prod(self.dims)
        return [(k, s) for k in range(self.n_filters) for s in range(size)]


def _check_size(dims):
    size = math.prod(dims)
    if size > MAX_GRID:
        raise DimensionError("refusing to materialize a grid of %d > %d points"
                             % (size, MAX_GRID))
    return size


def shift_matrix(base, dims):
    """Circulant matrix whose column ``s`` is ``base`` shifted by grid offset ``s``."""
    dims = tuple(dims)
    size = _check_size(dims)
    base = np.asarray(base, dtype=float).reshape(dims)
    out = np.empty((size, size))
    for s, offset in enumerate(np.ndindex(*dims)):
        out[:, s] = np.roll(base, offset, axis=tuple(range(len(dims)))).ravel()
    return out


def materialize(filters, dims, x=None):
    """Build the dense dictionary matrix for filters of shape (K, J, *support)."""
    filters = np.asarray(filters, dtype=float)
    dims = tuple(dims)
    size = _check_size(dims)
    n_filters, channels = filters.shape[:2]
    padded = spectral.pad_filter(filters, dims)
    mat = np.zeros((channels * size, n_filters * size))
    for k in range(n_filters):
        for j in range(channels):
            mat[j * size:(j + 1) * size, k * size:(k + 1) * size] = \
                shift_matrix(padded[k, j], dims)
    x_vec = None if x is None else np.asarray(x, dtype=float).ravel()
    return DenseProblem(mat, dims, n_filters, channels, x_vec)


def materialize_maps(maps, support):
    """Dense learning operators for maps of shape (N, K, *dims).

    Returns
    -------
    Z_mat : ndarray, shape (N*D, K*D)
        Stacked circulant matrices of the maps.
    S : ndarray, shape (K*M, K*D)
        Block-diagonal selection of each filter's support.
    """
    maps = np.asarray(maps, dtype=float)
    n_signals, n_filters = maps.shape[:2]
    dims = maps.shape[2:]
    size = _check_size(dims)
    z_mat = np.zeros((n_signals * size, n_filters * size))
    for n in range(n_signals):
        for k in range(n_filters):
            z_mat[n * size:(n + 1) * size, k * size:(k + 1) * size] = \
                shift_matrix(maps[n, k], dims)
    mask = np.zeros(dims, dtype=bool)
    mask[tuple(slice(0, m) for m in support)] = True
    pick = np.flatnonzero(mask.ravel())
    m_size = pick.size
    sel = np.zeros((n_filters * m_size, n_filters * size))
    for k in range(n_filters):
        sel[k * m_size + np.arange(m_size), k * size + pick] = 1.0
    return z_mat, sel


def lasso_objective(A, x, z, beta):
    r = A @ z - x
    return 0.5 * float(r @ r) + beta * float(np.abs(z).sum())


def power_norm(A, iters=500, seed=0):
    """Estimate ``||A' A||_2`` by power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    val = 0.0
    for _ in range(iters):
        w = A.T @ (A @ v)
        new = np.linalg.norm(w)
        if new == 0:
            return 0.0
        v = w / new
        if abs(new - val) <= 1e-12 * new:
            val = new
            break
        val = new
    return val


def soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def fista_lasso(D_mat, x, beta, iters=20000, tol=1e-14):
    """FISTA for ``0.5 ||x - A z||^2 + beta ||z||_1``.

    Uses a fixed step ``1/L`` with ``L`` from :func:`power_norm` (inflated
    slightly to cover the estimate's error) and gradient-based adaptive
    restart. Stops when the objective stalls to ``tol`` relative.
    """
    A = np.asarray(D_mat, dtype=float)
    x = np.asarray(x, dtype=float).ravel()
    lip = power_norm(A) * 1.01
    z = np.zeros(A.shape[1])
    if lip == 0:
        return z
    Atx = A.T @ x
    y, t = z.copy(), 1.0
    prev = lasso_objective(A, x, z, beta)
    stall = 0
    for _ in range(iters):
        grad = A.T @ (A @ y) - Atx
        z_new = soft_threshold(y - grad / lip, beta / lip)
        if np.dot(y - z_new, z_new - z) > 0:
            t = 1.0
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = z_new + ((t - 1.0) / t_new) * (z_new - z)
        z, t = z_new, t_new
        obj = lasso_objective(A, x, z, beta)
        stall = stall + 1 if abs(prev - obj) <= tol * max(abs(obj), 1e-300) else 0
        if stall >= 20:
            break
        prev = obj
    return z


def cd_lasso(D_mat, x, beta, iters=5000, tol=1e-13):
    """Cyclic coordinate descent for the same LASSO problem as :func:`fista_lasso`."""
    A = np.asarray(D_mat, dtype=float)
    x = np.asarray(x, dtype=float).ravel()
    col_sq = np.sum(A * A, axis=0)
    z = np.zeros(A.shape[1])
    r = x.copy()
    for _ in range(iters):
        biggest = 0.0
        for i in np.flatnonzero(col_sq > 0):
            a = A[:, i]
            old = z[i]
            rho = a @ r + col_sq[i] * old
            new = soft_threshold(rho, beta) / col_sq[i]
            if new != old:
                r -= a * (new - old)
                z[i] = new
                biggest = max(biggest, abs(new - old))
        if biggest <= tol:
            break
    return z


def project_filters(d, n_filters):
    """Project each filter block of ``d`` (rows) onto the unit Euclidean ball."""
    blocks = d.reshape(n_filters, -1, *d.shape[1:])
    flat = blocks.reshape(n_filters, -1)
    norms = np.linalg.norm(flat, axis=1)
    scale = 1.0 / np.maximum(norms, 1.0)
    return (flat * scale[:, None]).reshape(d.shape)


def learning_objective(B, x, d):
    r = B @ d - x
    return 0.5 * float(np.sum(r * r))


def projected_gradient_dict(Z_mat, S, x, iters=20000, n_filters=None, tol=1e-15):
    """Accelerated projected gradient for ``min 0.5 ||x - Z S' d||^2``, ``||d_k|| <= 1``.

    ``x`` may be a vector of length N*D or a matrix (N*D, J) for multi-channel
    data; in the latter case ``d`` has shape (K*M, J) and each filter's norm
    runs over all channels.
    """
    B = np.asarray(Z_mat, dtype=float) @ np.asarray(S, dtype=float).T
    x = np.asarray(x, dtype=float)
    if n_filters is None:
        raise ValueError("n_filters is required to group the rows of d")
    d = np.zeros((B.shape[1],) + x.shape[1:])
    lip = power_norm(B) * 1.01
    if lip == 0:
        return d
    y, t = d.copy(), 1.0
    prev = learning_objective(B, x, d)
    stall = 0
    for _ in range(iters):
        grad = B.T @ (B @ y - x)
        d_new = project_filters(y - grad / lip, n_filters)
        if np.sum((y - d_new) * (d_new - d)) > 0:
            t = 1.0
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = d_new + ((t - 1.0) / t_new) * (d_new - d)
        d, t = d_new, t_new
        obj = learning_objective(B, x, d)
        stall = stall + 1 if abs(prev - obj) <= tol * max(abs(obj), 1e-300) else 0
        if stall >= 20:
            break
        prev = obj
    return d
