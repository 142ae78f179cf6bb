"""Tensor CSC: multi-channel signals with maps shared across channels.

Unfolding the (J, K) filter bank gives a block-circulant dictionary of size
JD x KD. In frequency it is block diagonal: at every bin ``w`` there is a
J x K matrix ``B(w)`` with ``B(w)[j, k] = fft(pad(d_jk))[w]``, and the lambda
step of the dual ADMM becomes D independent J x J solves

    (B B^H + I / rho) lambda(w) = r(w).

When K < J the Woodbury identity

    (B B^H + I/rho)^-1 = rho I - rho^2 B (I_K + rho B^H B)^-1 B^H

trades the J x J inverse for a K x K one. Learning is separable per channel
for fixed multipliers; the norm constraint (and so ``mu``) is per filter
across all channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral
from .coding import _degenerate, _start_state, filter_spectra, run_admm
from .core import Dictionary, SignalTensor, SolverConfig, SparseMaps
from .exceptions import DimensionError, NumericalError
from .learning import _stack, solve_learning_arrays


@dataclass
class BlockSpectrumDictionary:
    """Per-frequency J x K matrices of a multi-channel dictionary.

    ``blocks`` has shape (F, J, K), one matrix per frequency bin in row-major
    order over ``spectrum_shape``. With ``half=True`` only the bins of the
    real-input transform are kept (``F = D`` otherwise).
    """

    blocks: np.ndarray
    dims: tuple
    half: bool = False

    @property
    def channels(self):
        return self.blocks.shape[1]

    @property
    def n_filters(self):
        return self.blocks.shape[2]

    @property
    def spectrum_shape(self):
        if self.half:
            return self.dims[:-1] + (self.dims[-1] // 2 + 1,)
        return self.dims

    def filter_spectra(self):
        """Back to the (K, J, *spectrum_shape) layout used by the ADMM loop."""
        return self.blocks.transpose(2, 1, 0).reshape(
            (self.n_filters, self.channels) + self.spectrum_shape)

    def to_filters(self, support):
        """Reassemble the spatial filters, shape (K, J, *support)."""
        spec = self.filter_spectra()
        if self.half:
            spatial = spectral.inverse_rdft(spec, self.dims)
        else:
            spatial = spectral.inverse_dft(spec, len(self.dims))
        return spectral.crop_filter(spatial, support)


def build_block_spectra(d, dims, half=False):
    """Assemble ``B(w)[j, k]`` from a Dictionary or a (K, J, *support) array."""
    filters = d.filters if isinstance(d, Dictionary) else np.asarray(d, dtype=float)
    dims = tuple(dims)
    padded = spectral.pad_filter(filters, dims)
    if half:
        d_hat = spectral.forward_rdft(padded, len(dims))
    else:
        d_hat = spectral.forward_dft(padded, len(dims))
    return _blocks_from_spectra(d_hat, dims, half)


def _blocks_from_spectra(d_hat, dims, half=True):
    n_filters, channels = d_hat.shape[:2]
    flat = d_hat.reshape(n_filters, channels, -1)
    return BlockSpectrumDictionary(np.ascontiguousarray(flat.transpose(2, 1, 0)),
                                   tuple(dims), half)


class BlockLambdaSolver:
    """Cached per-frequency factorization of ``B B^H + I/rho``.

    Parameters
    ----------
    blocks : BlockSpectrumDictionary
    x_hat : ndarray, shape (J, *spectrum_shape)
    rho : float
    method : {'auto', 'woodbury', 'direct'}
        'auto' uses Woodbury when K < J.
    cache : bool
        With ``False`` the per-frequency inverses are rebuilt on every call.
    """

    def __init__(self, blocks, x_hat, rho, method="auto", cache=True):
        if method not in ("auto", "woodbury", "direct"):
            raise ValueError("unknown method %r" % method)
        B = blocks.blocks
        if not (np.all(np.isfinite(B)) and np.all(np.isfinite(x_hat))):
            raise NumericalError("non-finite input to the blocked lambda solve")
        channels, n_filters = B.shape[1:]
        if method == "auto":
            method = "woodbury" if n_filters < channels else "direct"
        self.method = method
        self.B = B
        self.BH = np.conj(np.swapaxes(B, 1, 2))
        self.rho = rho
        self.shape = blocks.spectrum_shape
        self.x = x_hat.reshape(channels, -1).T
        self.cache = cache
        self._factor = self.factorize() if cache else None

    def factorize(self):
        channels, n_filters = self.B.shape[1:]
        if self.method == "direct":
            return np.linalg.inv(self.B @ self.BH + np.eye(channels) / self.rho)
        return np.linalg.inv(np.eye(n_filters) + self.rho * (self.BH @ self.B))

    def apply_inverse(self, rhs):
        """Apply ``(B B^H + I/rho)^-1`` to per-frequency vectors ``rhs`` (F, J)."""
        factor = self._factor if self.cache else self.factorize()
        if self.method == "direct":
            return np.einsum("fij,fj->fi", factor, rhs)
        rho = self.rho
        t = np.einsum("fkj,fj->fk", self.BH, rhs)
        t = np.einsum("fkl,fl->fk", factor, t)
        return rho * rhs - rho * rho * np.einsum("fjk,fk->fj", self.B, t)

    def rhs(self, theta_hat, z_hat):
        n_filters = theta_hat.shape[0]
        v = (theta_hat + z_hat / self.rho).reshape(n_filters, -1).T
        return np.einsum("fjk,fk->fj", self.B, v) - self.x / self.rho

    def __call__(self, theta_hat, z_hat):
        lam = self.apply_inverse(self.rhs(theta_hat, z_hat))
        return lam.T.reshape((lam.shape[1],) + self.shape)


def lambda_update_blocked(state, x_hat, blocks, rho, method="auto", solver=None):
    """Blocked lambda step; updates ``state`` in place and returns ``lambda``.

    Parameters
    ----------
    state : CodingDualState
    x_hat : ndarray, shape (J, *half_dims)
        Half spectrum of the signal, matching the state's cached spectra.
    blocks : BlockSpectrumDictionary
        Built with ``half=True``.
    rho : float
    method : {'auto', 'woodbury', 'direct'}
    solver : BlockLambdaSolver, optional
        Reuse an existing factorization.
    """
    if solver is None:
        solver = BlockLambdaSolver(blocks, x_hat, rho, method)
    state.lam_hat = solver(state.theta_hat, state.z_hat)
    state.lam = spectral.inverse_rdft(state.lam_hat, blocks.dims)
    return state.lam


def code_signal_tcsc(x, filters, cfg, warm=None, d_hat=None, method="auto", cache=True):
    """Array-level multi-channel coding solve; see :func:`solve_coding_tcsc`."""
    x = np.asarray(x, dtype=float)
    filters = np.asarray(filters, dtype=float)
    dims = x.shape[1:]
    n_filters, channels = filters.shape[:2]
    if channels != x.shape[0]:
        raise DimensionError("dictionary has %d channels but signal has %d"
                             % (channels, x.shape[0]))
    if d_hat is None:
        d_hat = filter_spectra(filters, dims)
    state = _start_state(warm, n_filters, channels, dims)
    if not np.any(filters):
        return _degenerate(x, state)
    x_hat = spectral.forward_rdft(x, len(dims))
    solver = BlockLambdaSolver(_blocks_from_spectra(d_hat, dims), x_hat, cfg.rho, method,
                                cache=cache)
    stats = run_admm(x, d_hat, cfg, state, solver)
    return state.z.copy(), state, stats


def solve_coding_tcsc(x: SignalTensor, d: Dictionary, cfg: SolverConfig, warm=None,
                      method="auto"):
    """Sparse maps shared across the J channels of ``x``.

    The per-frequency factorization is computed once per call and reused by
    every ADMM iteration.

    Returns
    -------
    maps : SparseMaps
    state : CodingDualState
    stats : CodingStats
    """
    if d.channels != x.channels:
        raise DimensionError("dictionary has %d channels but signal has %d"
                             % (d.channels, x.channels))
    d.check_grid(x.dims)
    z, state, stats = code_signal_tcsc(x.values, d.filters, cfg, warm=warm, method=method)
    return SparseMaps(z), state, stats


def solve_learning_tcsc(x, z, cfg: SolverConfig, support, warm=None):
    """Multi-channel dictionary update with maps shared across channels.

    One gamma system per channel (all with the same operator, since the maps
    are shared); the multiplier ascent is joint because each filter's norm
    runs over every channel.

    Parameters
    ----------
    x : ndarray, shape (N, J, *dims) or sequence of SignalTensor
    z : ndarray, shape (N, K, *dims) or sequence of SparseMaps

    Returns
    -------
    dictionary : Dictionary
    state : LearningDualState
    stats : LearningStats
    """
    x = _stack(x, "values")
    z = _stack(z, "values")
    filters, state, stats = solve_learning_arrays(x, z, support, cfg, warm)
    return Dictionary(filters), state, stats
