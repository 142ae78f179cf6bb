"""Dictionary update through the dual of the norm-penalized least squares.

For fixed multipliers ``mu_k`` the filters solve

    min_d 0.5 ||x - Z S' d||^2 + sum_k mu_k ||d_k||^2

whose dual variable has the closed form

    gamma = -(I + sum_k Z_k S_k' S_k Z_k' / (2 mu_k))^-1 x

and gives back ``d_k = -S_k Z_k' gamma / (2 mu_k)``. The system is solved with
conjugate gradient, every operator application done with FFTs, and the
multipliers follow the fixed-point ascent ``mu_k <- mu_k ||d_k||`` until
each filter sits on the unit sphere (or strictly inside it with ``mu_k`` at
its floor).

Arrays: signals ``x`` are (N, J, *dims), maps ``z`` are (N, K, *dims) and are
shared by all channels, filters come out as (K, J, *support).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import spectral
from .core import Dictionary, SolverConfig
from .exceptions import DimensionError, NumericalError

logger = logging.getLogger(__name__)

NORM_TOL = 1e-3


@dataclass
class LearningDualState:
    """Warm-start data carried between learning solves.

    Attributes
    ----------
    gamma : ndarray, shape (N, J, *dims) or None
    mu : ndarray, shape (K,)
    mu_iterations, cg_iterations : int
        Totals accumulated over every solve that used this state.
    """

    gamma: Optional[np.ndarray]
    mu: np.ndarray
    mu_iterations: int = 0
    cg_iterations: int = 0

    @classmethod
    def initial(cls, n_filters, mu0=1.0):
        return cls(None, np.full(n_filters, float(mu0)))

    def copy(self):
        gamma = None if self.gamma is None else self.gamma.copy()
        return LearningDualState(gamma, self.mu.copy(), self.mu_iterations,
                                 self.cg_iterations)


@dataclass
class CGInfo:
    iterations: int
    converged: bool
    relative_residual: float
    residuals: list = field(default_factory=list)


@dataclass
class LearningStats:
    mu_iterations: int = 0
    cg_iterations: int = 0
    cg_per_solve: list = field(default_factory=list)
    converged: bool = False
    cg_failures: int = 0
    rescaled: list = field(default_factory=list)
    dead: list = field(default_factory=list)
    degenerate: bool = False
    clamped_mu: bool = False


class MapOperator:
    """Spectral realization of ``Z`` and ``Z'`` for a fixed set of maps.

    Parameters
    ----------
    maps : ndarray, shape (N, K, *dims)
    support : tuple
        Filter support; ``S_k`` keeps this low-index corner of the grid.
    """

    def __init__(self, maps, support):
        maps = np.asarray(maps, dtype=float)
        if maps.ndim < 3:
            raise DimensionError("maps must have shape (N, K, *dims)")
        self.dims = maps.shape[2:]
        self.support = tuple(support)
        if len(self.support) != len(self.dims):
            raise DimensionError("support %s does not match grid %s"
                                 % (self.support, self.dims))
        self.ndim = len(self.dims)
        self.n_signals, self.n_filters = maps.shape[:2]
        self.z_hat = spectral.forward_rdft(maps, self.ndim)
        self.active = np.any(maps.reshape(self.n_signals, self.n_filters, -1) != 0,
                             axis=(0, 2))

    def correlate(self, v):
        """``S Z' v`` summed over signals: (N, *dims) -> (K, *support)."""
        v_hat = spectral.forward_rdft(v, self.ndim)
        # the sum over signals commutes with the inverse transform
        corr_hat = np.einsum("nk...,n...->k...", np.conj(self.z_hat), v_hat)
        return spectral.crop_filter(spectral.inverse_rdft(corr_hat, self.dims), self.support)

    def convolve(self, c):
        """``Z S' c``: (K, *support) -> (N, *dims)."""
        c_hat = spectral.forward_rdft(spectral.pad_filter(c, self.dims), self.ndim)
        out_hat = np.einsum("nk...,k...->n...", self.z_hat, c_hat)
        return spectral.inverse_rdft(out_hat, self.dims)


def _weights(mu, floor):
    mu = np.asarray(mu, dtype=float)
    clamped = bool(np.any(mu < floor))
    return 0.5 / np.maximum(mu, floor), clamped


def learning_operator_apply(z, mu, v, support=None, mu_floor=1e-6):
    """Apply ``I + sum_k Z_k S_k' S_k Z_k' / (2 mu_k)`` to ``v``.

    Parameters
    ----------
    z : MapOperator or ndarray, shape (N, K, *dims)
    mu : array_like, shape (K,)
        Multipliers; values below ``mu_floor`` are clamped (with a warning).
    v : ndarray, shape (N, *dims)
    support : tuple
        Needed when ``z`` is a raw array.
    """
    op = z if isinstance(z, MapOperator) else MapOperator(z, support)
    w, clamped = _weights(mu, mu_floor)
    if clamped:
        logger.warning("multipliers below floor %g were clamped", mu_floor)
    v = np.asarray(v, dtype=float)
    c = op.correlate(v) * w.reshape((-1,) + (1,) * op.ndim)
    return v + op.convolve(c)


def conjugate_gradient(apply, b, x0=None, tol=1e-6, maxiter=200, callback=None):
    """Plain conjugate gradient for a symmetric positive definite operator.

    Stops when ``||b - A x|| <= tol * ||b||``. If the iteration cap is reached
    the iterate with the smallest residual is returned.

    Returns
    -------
    x : ndarray
    info : CGInfo
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    b_norm = np.linalg.norm(b)
    if b_norm == 0:
        return np.zeros_like(b), CGInfo(0, True, 0.0, [0.0])
    r = b - apply(x)
    rr = float(np.vdot(r, r))
    res = math.sqrt(rr) / b_norm
    history = [res]
    best_x, best_res = x, res
    if callback is not None:
        callback(x, r)
    if res <= tol:
        return x, CGInfo(0, True, res, history)
    p = r.copy()
    it = 0
    while it < maxiter:
        it += 1
        Ap = apply(p)
        pAp = float(np.vdot(p, Ap))
        if pAp <= 0 or not math.isfinite(pAp):
            raise NumericalError("operator is not positive definite (p'Ap = %g)" % pAp)
        alpha = rr / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        rr_new = float(np.vdot(r, r))
        res = math.sqrt(rr_new) / b_norm
        history.append(res)
        if callback is not None:
            callback(x, r)
        if res < best_res:
            best_x, best_res = x, res
        if res <= tol or rr_new == 0:
            return x, CGInfo(it, True, res, history)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return best_x, CGInfo(it, False, best_res, history)


def gamma_solve(x, z, mu, cfg, warm=None, support=None, callback=None):
    """Solve for the dual variable of one channel.

    Parameters
    ----------
    x : ndarray, shape (N, *dims)
        One channel of every signal.
    z : MapOperator or ndarray, shape (N, K, *dims)
    mu : ndarray, shape (K,)
    cfg : SolverConfig
    warm : ndarray, shape (N, *dims), optional
        Starting point, typically the previous solution.

    Returns
    -------
    gamma : ndarray, shape (N, *dims)
    info : CGInfo
    """
    op = z if isinstance(z, MapOperator) else MapOperator(z, support)
    w, _ = _weights(mu, cfg.mu_floor)
    w = w.reshape((-1,) + (1,) * op.ndim)

    def apply(v):
        return v + op.convolve(op.correlate(v) * w)

    # solve A g = x and negate: gamma = -g
    x0 = None if warm is None else -np.asarray(warm, dtype=float)
    g, info = conjugate_gradient(apply, x, x0=x0, tol=cfg.cg_tol, maxiter=cfg.cg_max,
                                 callback=callback)
    if not info.converged:
        logger.debug("CG stopped at %d iterations, relative residual %.2e",
                     info.iterations, info.relative_residual)
    return -g, info


def d_recover(gamma, z, mu, support=None, mu_floor=1e-6):
    """Filters from the dual variable: ``d_k = -S_k Z_k' gamma / (2 mu_k)``.

    Parameters
    ----------
    gamma : ndarray, shape (N, J, *dims)
    z : MapOperator or ndarray, shape (N, K, *dims)

    Returns
    -------
    ndarray, shape (K, J, *support)
    """
    op = z if isinstance(z, MapOperator) else MapOperator(z, support)
    gamma = np.asarray(gamma, dtype=float)
    w, _ = _weights(mu, mu_floor)
    w = w.reshape((-1,) + (1,) * op.ndim)
    channels = [-w * op.correlate(gamma[:, j]) for j in range(gamma.shape[1])]
    return np.stack(channels, axis=1)


def filter_norms(filters):
    filters = np.asarray(filters)
    return np.sqrt(np.sum(filters.reshape(filters.shape[0], -1) ** 2, axis=1))


def mu_update(mu, d, mu_floor=1e-6):
    """Multiplicative ascent ``mu_k <- mu_k ||d_k||``, floored at ``mu_floor``.

    ``d`` is either an array of filters (K, ...) or the vector of their norms.
    """
    mu = np.asarray(mu, dtype=float)
    d = np.asarray(d, dtype=float)
    norms = d if d.shape == mu.shape else filter_norms(d)
    return np.maximum(mu * norms, mu_floor)


def _satisfied(norms, mu, active, floor):
    on_sphere = np.abs(norms - 1.0) <= NORM_TOL
    inactive = (mu <= floor) & (norms < 1.0)
    return on_sphere | inactive | ~active


def solve_learning_arrays(x, z, support, cfg, warm=None):
    """Array-level learning solve.

    Parameters
    ----------
    x : ndarray, shape (N, J, *dims)
    z : ndarray, shape (N, K, *dims)
    support : tuple
    cfg : SolverConfig
    warm : LearningDualState, optional
        Copied, not modified.

    Returns
    -------
    filters : ndarray, shape (K, J, *support)
    state : LearningDualState
    stats : LearningStats
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.ndim != z.ndim or x.shape[0] != z.shape[0] or x.shape[2:] != z.shape[2:]:
        raise DimensionError("signals %s and maps %s are inconsistent" % (x.shape, z.shape))
    n_signals, channels = x.shape[:2]
    n_filters = z.shape[1]
    support = tuple(support)
    state = LearningDualState.initial(n_filters) if warm is None else warm.copy()
    if state.mu.shape != (n_filters,):
        raise DimensionError("warm state holds %d multipliers, expected %d"
                             % (state.mu.size, n_filters))
    if state.gamma is not None and state.gamma.shape != x.shape:
        state.gamma = None
    stats = LearningStats()
    stats.clamped_mu = bool(np.any(state.mu < cfg.mu_floor))
    state.mu = np.maximum(state.mu, cfg.mu_floor)

    op = MapOperator(z, support)
    stats.dead = [int(k) for k in np.flatnonzero(~op.active)]
    filters = np.zeros((n_filters, channels) + support)
    if not op.active.any():
        stats.degenerate = True
        stats.converged = True
        state.gamma = -x.copy()
        return filters, state, stats

    gamma = -x.copy() if state.gamma is None else state.gamma.copy()
    for _ in range(max(cfg.max_mu_iters, 1)):
        solve_cg = 0
        for j in range(channels):
            gamma[:, j], info = gamma_solve(x[:, j], op, state.mu, cfg, warm=gamma[:, j])
            solve_cg += info.iterations
            stats.cg_failures += not info.converged
        stats.cg_per_solve.append(solve_cg)
        stats.cg_iterations += solve_cg
        stats.mu_iterations += 1
        filters = d_recover(gamma, op, state.mu, mu_floor=cfg.mu_floor)
        if not np.all(np.isfinite(filters)):
            raise NumericalError("non-finite filters in learning solve")
        norms = filter_norms(filters)
        if np.all(_satisfied(norms, state.mu, op.active, cfg.mu_floor)):
            stats.converged = True
            break
        if stats.mu_iterations >= cfg.max_mu_iters:
            break
        state.mu = mu_update(state.mu, norms, cfg.mu_floor)

    norms = filter_norms(filters)
    over = norms > 1.0 + 1e-12
    if np.any(over):
        stats.rescaled = [int(k) for k in np.flatnonzero(over)]
        filters[over] /= norms[over].reshape((-1,) + (1,) * (filters.ndim - 1))
    state.gamma = gamma
    state.mu_iterations += stats.mu_iterations
    state.cg_iterations += stats.cg_iterations
    return filters, state, stats


def solve_learning(x, z, cfg: SolverConfig, support, warm: Optional[LearningDualState] = None):
    """Learn the dictionary for fixed sparse maps.

    Parameters
    ----------
    x : sequence of SignalTensor or ndarray, shape (N, J, *dims)
    z : sequence of SparseMaps or ndarray, shape (N, K, *dims)
    cfg : SolverConfig
    support : tuple of int
        Filter support.
    warm : LearningDualState, optional

    Returns
    -------
    dictionary : Dictionary
    state : LearningDualState
    stats : LearningStats
    """
    x = _stack(x, "values")
    z = _stack(z, "values")
    filters, state, stats = solve_learning_arrays(x, z, support, cfg, warm)
    if stats.degenerate:
        logger.warning("all sparse maps are zero; returning a zero dictionary")
    return Dictionary(filters), state, stats


def _stack(items, attr):
    if isinstance(items, np.ndarray):
        return items
    return np.stack([getattr(it, attr, it) for it in items])
