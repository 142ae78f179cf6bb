"""Input checks shared by the estimator and the command line."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DimensionError


def check_signals(X, n_spatial_dims=2, channels_axis=None):
    """Coerce ``X`` to a float64 array of shape (N, J, *dims).

    Parameters
    ----------
    X : array_like
        Either (N, *dims) for single-channel data or (N, J, *dims).
    n_spatial_dims : int
        Number of grid axes.
    channels_axis : bool, optional
        Force interpretation; by default inferred from ``X.ndim``.

    Returns
    -------
    ndarray
    """
    arr = check_array(X, ensure_2d=False, allow_nd=True, dtype=np.float64,
                      ensure_all_finite=True, input_name="X")
    if channels_axis is None:
        channels_axis = arr.ndim == n_spatial_dims + 2
    expected = n_spatial_dims + (2 if channels_axis else 1)
    if arr.ndim != expected:
        raise DimensionError("expected an array with %d axes (samples%s, %d grid axes), "
                             "got shape %s" % (expected, ", channels" if channels_axis else "",
                                               n_spatial_dims, arr.shape))
    if not channels_axis:
        arr = arr[:, np.newaxis]
    if min(arr.shape) < 1:
        raise DimensionError("empty axis in input of shape %s" % (arr.shape,))
    return arr


def check_support(filter_size, n_spatial_dims):
    """Expand an int or sequence into a support tuple of length ``n_spatial_dims``."""
    if isinstance(filter_size, numbers.Integral):
        support = (int(filter_size),) * n_spatial_dims
    else:
        support = tuple(int(m) for m in filter_size)
    if len(support) != n_spatial_dims:
        raise DimensionError("filter_size %s does not have %d entries"
                             % (filter_size, n_spatial_dims))
    if any(m < 1 for m in support):
        raise ValueError("filter sizes must be >= 1, got %s" % (support,))
    return support


def check_fits(support, dims):
    if len(support) != len(dims) or any(m > n for m, n in zip(support, dims)):
        raise DimensionError("filter support %s does not fit grid %s"
                             % (tuple(support), tuple(dims)))


def check_positive_int(value, name, minimum=1):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool) or value < minimum:
        raise ValueError("%s must be an integer >= %d, got %r" % (name, minimum, value))
    return int(value)


def parse_int_list(text, name="value"):
    """Parse ``"4,8,16"`` into a list of ints; empty input is an error."""
    items = [t.strip() for t in str(text).split(",") if t.strip()]
    if not items:
        raise ValueError("%s list is empty" % name)
    return [int(t) for t in items]


def parse_float_list(text, name="value"):
    items = [t.strip() for t in str(text).split(",") if t.strip()]
    if not items:
        raise ValueError("%s list is empty" % name)
    return [float(t) for t in items]
