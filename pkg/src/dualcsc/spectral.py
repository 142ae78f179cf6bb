"""DFT helpers and circulant-operator algebra.

Convention: unnormalized forward transform, ``1/D`` on the inverse, so that
``||x||^2 == ||fft(x)||^2 / D``. A spectrum is a complex ndarray holding the
full (not half-packed) set of bins over the trailing grid axes; any leading
axes are batch axes.

The solvers work on real signals and use the half spectra of
:func:`forward_rdft` / :func:`inverse_rdft` internally. Every operation they
perform is pointwise per frequency bin, so the missing half is implied by
conjugate symmetry.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionError, NumericalError

IMAG_RTOL = 1e-8


def _axes(arr, ndim):
    if ndim is None:
        ndim = arr.ndim
    return tuple(range(arr.ndim - ndim, arr.ndim))


def forward_dft(s, ndim=None):
    """Multi-dimensional DFT over the trailing ``ndim`` axes (all by default)."""
    s = np.asarray(s)
    return np.fft.fftn(s, axes=_axes(s, ndim))


def inverse_dft(S, ndim=None, real=True, rtol=IMAG_RTOL):
    """Inverse of :func:`forward_dft`.

    With ``real=True`` the imaginary residue is discarded after checking that
    it is below ``rtol`` relative to the real part.

    Raises
    ------
    NumericalError
        If the input is not (numerically) conjugate symmetric.
    """
    S = np.asarray(S)
    out = np.fft.ifftn(S, axes=_axes(S, ndim))
    if not real:
        return out
    scale = np.max(np.abs(out.real), initial=0.0)
    residue = np.max(np.abs(out.imag), initial=0.0)
    if residue > rtol * max(scale, np.finfo(float).tiny):
        raise NumericalError(
            "imaginary residue %.3e exceeds %.1e relative to %.3e"
            % (residue, rtol, scale))
    return np.ascontiguousarray(out.real)


def forward_rdft(s, ndim=None):
    """Half spectrum of a real array over the trailing ``ndim`` axes."""
    s = np.asarray(s, dtype=float)
    return np.fft.rfftn(s, axes=_axes(s, ndim))


def inverse_rdft(S, dims):
    """Real inverse of :func:`forward_rdft` onto the grid ``dims``."""
    S = np.asarray(S)
    dims = tuple(dims)
    return np.fft.irfftn(S, s=dims, axes=tuple(range(S.ndim - len(dims), S.ndim)))


def is_conjugate_symmetric(S, ndim=None, tol=1e-10):
    """Check ``S[w] == conj(S[-w])`` over the trailing ``ndim`` axes."""
    S = np.asarray(S)
    axes = _axes(S, ndim)
    flipped = S
    for ax in axes:
        flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
    scale = max(np.max(np.abs(S), initial=0.0), 1.0)
    return bool(np.max(np.abs(S - np.conj(flipped)), initial=0.0) <= tol * scale)


def pad_filter(filters, dims):
    """Zero-pad the trailing axes of ``filters`` to the grid ``dims``.

    The filter occupies the low-index corner of the grid. Leading axes are
    treated as batch axes.
    """
    filters = np.asarray(filters)
    dims = tuple(dims)
    support = filters.shape[filters.ndim - len(dims):]
    if any(m > n for m, n in zip(support, dims)):
        raise DimensionError("support %s larger than grid %s" % (support, dims))
    out = np.zeros(filters.shape[:filters.ndim - len(dims)] + dims, dtype=filters.dtype)
    out[(Ellipsis,) + tuple(slice(0, m) for m in support)] = filters
    return out


def crop_filter(arr, support):
    """Adjoint of :func:`pad_filter`: keep the low-index corner ``support``."""
    arr = np.asarray(arr)
    return arr[(Ellipsis,) + tuple(slice(0, m) for m in support)]


def circulant_apply(d_hat, z_hat, adjoint=False):
    """Apply the circulant operator with base spectrum ``d_hat`` to ``z_hat``.

    In the frequency domain a circular convolution is a pointwise product;
    the adjoint (circular correlation) uses the conjugated filter spectrum.
    """
    if adjoint:
        return np.conj(d_hat) * z_hat
    return d_hat * z_hat


def convolve(a, b, ndim=None):
    """Circular convolution of two real arrays of equal shape."""
    return inverse_dft(forward_dft(a, ndim) * forward_dft(b, ndim), ndim)


def correlate(a, b, ndim=None):
    """Circular correlation ``sum_t a[t] b[t + s]`` (adjoint of convolving with ``a``)."""
    return inverse_dft(np.conj(forward_dft(a, ndim)) * forward_dft(b, ndim), ndim)
