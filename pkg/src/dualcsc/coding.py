"""Sparse-map inference through the dual of the convolutional LASSO.

The coding problem ``min_z 0.5 ||x - Dz||^2 + beta ||z||_1`` is solved via

    min_lambda  0.5 lambda'lambda + lambda'x   s.t.  ||D' lambda||_inf <= beta

with ADMM on the split ``theta = D' lambda``. The ADMM multiplier attached to
that split is the sparse map vector ``z`` itself, and at the optimum
``lambda = Dz - x`` is the reconstruction residual.

Each iteration is

    lambda <- (D D' + I/rho)^-1 (D theta + D z / rho - x / rho)
    theta  <- clip(D' lambda - z / rho, -beta, beta)
    z      <- z + rho (theta - D' lambda)

For a single channel ``D D'`` is diagonal in frequency, so the lambda step
is one division per frequency bin. Spectra held in the state are the half
spectra of :func:`spectral.forward_rdft`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import spectral
from .core import Dictionary, SignalTensor, SolverConfig, SparseMaps
from .exceptions import DimensionError, NumericalError

logger = logging.getLogger(__name__)


@dataclass
class CodingDualState:
    """ADMM iterate for one signal.

    Attributes
    ----------
    lam : ndarray, shape (J, *dims)
        Dual variable (reconstruction residual at the optimum).
    theta : ndarray, shape (K, *dims)
        Split variable, always inside the box ``[-beta, beta]`` after an update.
    z : ndarray, shape (K, *dims)
        Multiplier of the split, i.e. the sparse maps.
    lam_hat, theta_hat, z_hat : ndarray
        Cached half spectra of the above.
    """

    lam: np.ndarray
    theta: np.ndarray
    z: np.ndarray
    lam_hat: np.ndarray
    theta_hat: np.ndarray
    z_hat: np.ndarray

    @classmethod
    def zeros(cls, n_filters, channels, dims):
        dims = tuple(dims)
        lam = np.zeros((channels,) + dims)
        maps = np.zeros((n_filters,) + dims)
        lam_hat = spectral.forward_rdft(lam, len(dims))
        maps_hat = spectral.forward_rdft(maps, len(dims))
        return cls(lam, maps, maps.copy(), lam_hat, maps_hat, maps_hat.copy())

    @property
    def dims(self):
        return self.z.shape[1:]

    def copy(self):
        return CodingDualState(*(a.copy() for a in (
            self.lam, self.theta, self.z, self.lam_hat, self.theta_hat, self.z_hat)))

    def set_maps(self, z):
        self.z = np.array(z, dtype=float)
        self.z_hat = spectral.forward_rdft(self.z, len(self.dims))


@dataclass
class CodingStats:
    iterations: int = 0
    converged: bool = False
    primal_residual: float = float("nan")
    degenerate: bool = False
    dual_infeasibility: float = 0.0


def filter_spectra(filters, dims):
    """Half spectra of the zero-padded filters, shape (K, J, *half_dims)."""
    filters = np.asarray(filters, dtype=float)
    return spectral.forward_rdft(spectral.pad_filter(filters, dims), len(dims))


class ScalarLambdaSolver:
    """Per-frequency solve of ``(D D' + I/rho) lambda = rhs`` for one channel.

    The denominator ``sum_k |d_k(w)|^2 + 1/rho`` is formed once and reused.
    """

    def __init__(self, d_hat, x_hat, rho):
        if d_hat.shape[1] != 1:
            raise DimensionError("scalar lambda solve needs a single channel, got %d"
                                 % d_hat.shape[1])
        if not (np.all(np.isfinite(d_hat)) and np.all(np.isfinite(x_hat))):
            raise NumericalError("non-finite spectra in lambda update")
        self.d = d_hat[:, 0]
        self.x = x_hat[0]
        self.rho = rho
        self.denominator = np.sum(np.abs(self.d) ** 2, axis=0) + 1.0 / rho

    def __call__(self, theta_hat, z_hat):
        rhs = np.sum(self.d * (theta_hat + z_hat / self.rho), axis=0) - self.x / self.rho
        return (rhs / self.denominator)[np.newaxis]


def lambda_update(state, x_hat, d_hat, rho):
    """One lambda step for a single-channel problem; updates ``state`` in place.

    Parameters
    ----------
    state : CodingDualState
    x_hat : ndarray, shape (1, *half_dims)
        Half spectrum of the signal.
    d_hat : ndarray, shape (K, 1, *half_dims)
        Half spectra of the padded filters (:func:`filter_spectra`).
    rho : float
    """
    lam_hat = ScalarLambdaSolver(d_hat, x_hat, rho)(state.theta_hat, state.z_hat)
    state.lam_hat = lam_hat
    state.lam = spectral.inverse_rdft(lam_hat, state.dims)
    return state.lam


def adjoint_apply(d_hat, lam_hat):
    """Spectrum of ``D' lambda``: per filter, sum over channels of conj(d) * lambda."""
    return np.einsum("kj...,j...->k...", np.conj(d_hat), lam_hat)


def theta_update(state, d_hat, rho, beta, dtl=None):
    """Project ``D' lambda - z / rho`` onto the box ``[-beta, beta]``.

    The projection is separable per spatial coefficient, so it is applied in
    the spatial domain. ``dtl`` may carry a precomputed ``D' lambda``.
    """
    if dtl is None:
        dtl = spectral.inverse_rdft(adjoint_apply(d_hat, state.lam_hat), state.dims)
    state.theta = np.clip(dtl - state.z / rho, -beta, beta)
    state.theta_hat = spectral.forward_rdft(state.theta, len(state.dims))
    return state.theta


def z_update(state, d_hat, rho, dtl=None, dtl_hat=None):
    """``z <- z + rho (theta - D' lambda)``, with the cached spectrum kept in step."""
    if dtl_hat is None:
        dtl_hat = adjoint_apply(d_hat, state.lam_hat)
    if dtl is None:
        dtl = spectral.inverse_rdft(dtl_hat, state.dims)
    state.z = state.z + rho * (state.theta - dtl)
    state.z_hat = state.z_hat + rho * (state.theta_hat - dtl_hat)
    return state.z


def dual_objective(lam, x):
    """Value of ``-0.5 lambda'lambda - lambda'x`` (a lower bound on the coding objective)."""
    lam = np.asarray(lam)
    return float(-0.5 * np.sum(lam * lam) - np.sum(lam * x))


def run_admm(x, d_hat, cfg, state, lambda_solver):
    """Iterate the dual ADMM updates until the inner stopping rule holds.

    Parameters
    ----------
    x : ndarray, shape (J, *dims)
    d_hat : ndarray, shape (K, J, *dims)
    cfg : SolverConfig
    state : CodingDualState
        Starting point, updated in place.
    lambda_solver : callable
        ``lambda_solver(theta_hat, z_hat) -> lam_hat`` solving the lambda step.

    Returns
    -------
    CodingStats
    """
    dims = x.shape[1:]
    rho, beta, tol = cfg.rho, cfg.beta, cfg.admm_tol
    stats = CodingStats()
    for it in range(1, cfg.max_admm + 1):
        lam_hat = lambda_solver(state.theta_hat, state.z_hat)
        state.lam_hat = lam_hat
        dtl_hat = adjoint_apply(d_hat, lam_hat)
        dtl = spectral.inverse_rdft(dtl_hat, dims)

        z_old, theta_old = state.z, state.theta
        theta_update(state, d_hat, rho, beta, dtl=dtl)
        z_update(state, d_hat, rho, dtl=dtl, dtl_hat=dtl_hat)

        r_norm = np.linalg.norm(state.theta - dtl)
        scale = max(np.linalg.norm(state.theta), np.linalg.norm(dtl), 1.0)
        dz = np.linalg.norm(state.z - z_old)
        dtheta = np.linalg.norm(state.theta - theta_old)
        stats.iterations = it
        stats.primal_residual = r_norm / scale
        if not math.isfinite(stats.primal_residual):
            raise NumericalError("ADMM diverged at iteration %d" % it)
        # theta movement stands in for the dual residual; without it a first
        # step that lands inside the box would look converged
        if (stats.primal_residual <= tol and dtheta <= tol * scale
                and dz <= tol * np.linalg.norm(state.z)):
            stats.converged = True
            break
    _make_feasible(state, d_hat, beta, stats)
    return stats


def _make_feasible(state, d_hat, beta, stats):
    # ADMM only reaches the box in the limit; shrinking lambda onto it keeps
    # the reported dual value a true lower bound (z and theta are untouched,
    # and the next lambda step does not read lambda)
    dims = state.dims
    dtl = spectral.inverse_rdft(adjoint_apply(d_hat, state.lam_hat), dims)
    peak = float(np.max(np.abs(dtl)))
    stats.dual_infeasibility = max(peak - beta, 0.0)
    if peak > beta:
        state.lam_hat = state.lam_hat * (beta / peak)
    state.lam = spectral.inverse_rdft(state.lam_hat, dims)


def code_signal(x, filters, cfg, warm=None, d_hat=None):
    """Array-level coding solve for one signal.

    Parameters
    ----------
    x : ndarray, shape (J, *dims)
    filters : ndarray, shape (K, J, *support)
    cfg : SolverConfig
    warm : CodingDualState, optional
        Previous iterate; copied, not modified.
    d_hat : ndarray, optional
        Precomputed :func:`filter_spectra`.

    Returns
    -------
    z, state, stats
    """
    x = np.asarray(x, dtype=float)
    dims = x.shape[1:]
    n_filters, channels = filters.shape[:2]
    if channels != x.shape[0]:
        raise DimensionError("dictionary has %d channels but signal has %d"
                             % (channels, x.shape[0]))
    if channels != 1:
        from .tcsc import code_signal_tcsc
        return code_signal_tcsc(x, filters, cfg, warm=warm, d_hat=d_hat)
    if d_hat is None:
        d_hat = filter_spectra(filters, dims)
    state = _start_state(warm, n_filters, channels, dims)

    if not np.any(filters):
        return _degenerate(x, state)
    x_hat = spectral.forward_rdft(x, len(dims))
    stats = run_admm(x, d_hat, cfg, state, ScalarLambdaSolver(d_hat, x_hat, cfg.rho))
    if not stats.converged:
        logger.debug("coding ADMM stopped at cap %d (residual %.2e)",
                     stats.iterations, stats.primal_residual)
    return state.z.copy(), state, stats


def _start_state(warm, n_filters, channels, dims):
    if warm is None:
        return CodingDualState.zeros(n_filters, channels, dims)
    if warm.z.shape != (n_filters,) + tuple(dims) or warm.lam.shape[0] != channels:
        raise DimensionError("warm state shape does not match the problem")
    return warm.copy()


def _degenerate(x, state):
    # all-zero dictionary: D' lambda = 0 is always feasible, so lambda = -x
    state.set_maps(np.zeros_like(state.z))
    state.theta = np.zeros_like(state.z)
    state.theta_hat = np.zeros_like(state.z_hat)
    state.lam = -x.copy()
    state.lam_hat = spectral.forward_rdft(state.lam, x.ndim - 1)
    return state.z.copy(), state, CodingStats(0, True, 0.0, degenerate=True)


def solve_coding(x: SignalTensor, d: Dictionary, cfg: SolverConfig,
                 warm: Optional[CodingDualState] = None):
    """Infer the sparse maps of ``x`` for a fixed dictionary.

    Returns
    -------
    maps : SparseMaps
    state : CodingDualState
        Final ADMM iterate, usable as ``warm`` for a later call.
    stats : CodingStats
    """
    d.check_grid(x.dims)
    z, state, stats = code_signal(x.values, d.filters, cfg, warm=warm)
    return SparseMaps(z), state, stats
