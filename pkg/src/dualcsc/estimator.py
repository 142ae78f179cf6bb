"""scikit-learn style front end for dictionary learning and coding."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import core
from .coding import code_signal, filter_spectra
from .core import SolverConfig
from .exceptions import DimensionError
from .pipeline import CHANNEL_MODES, Dataset, RunConfig, normalize_array, run_csc
from .validation import check_fits, check_positive_int, check_signals, check_support


class ConvolutionalSparseCoding(TransformerMixin, BaseEstimator):
    """Convolutional dictionary learning with dual-domain solvers.

    ``fit`` alternates sparse coding and dictionary updates; ``transform``
    infers sparse maps for new signals against the learned filters and
    ``inverse_transform`` synthesizes signals from maps.

    Parameters
    ----------
    n_filters : int, default=16
    filter_size : int or tuple of int, default=11
        Spatial support of every filter.
    beta : float, default=0.5
        Weight of the l1 penalty on the maps.
    rho : float, default=0.1
        ADMM penalty of the coding solver.
    tol : float, default=1e-3
        Outer stopping threshold on the relative change of the objective
        and of both variable blocks.
    max_outer, max_admm, max_mu_iters : int
        Iteration caps of the outer loop, the coding ADMM and the multiplier
        ascent of each learning step.
    admm_tol, cg_tol : float
        Inner tolerances.
    cg_max : int
        Conjugate-gradient iteration budget per linear solve.
    mu_floor : float
    normalize : {'none', 'global', 'local'}, default='global'
        Contrast normalization applied to every signal before fitting or
        coding.
    channels : {'separate', 'joint'}, default='separate'
        With 'joint', multi-channel signals share their maps across channels.
        With 'separate', every channel is treated as its own signal.
    n_spatial_dims : int, default=2
        Number of grid axes. Inputs are (N, *dims) or (N, J, *dims).
    random_state : int, default=0
        Seed of the dictionary initialization.
    n_jobs : int, default=1
        Worker threads for the per-signal coding solves.

    Attributes
    ----------
    dictionary_ : Dictionary
    components_ : ndarray, shape (K, J, *support)
    trace_ : ConvergenceTrace
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, n_filters=16, filter_size=11, beta=0.5, rho=0.1, tol=1e-3,
                 max_outer=50, max_admm=1000, admm_tol=1e-4, max_mu_iters=10,
                 cg_tol=1e-6, cg_max=200, mu_floor=1e-6, normalize="global",
                 channels="separate", n_spatial_dims=2, random_state=0, n_jobs=1):
        self.n_filters = n_filters
        self.filter_size = filter_size
        self.beta = beta
        self.rho = rho
        self.tol = tol
        self.max_outer = max_outer
        self.max_admm = max_admm
        self.admm_tol = admm_tol
        self.max_mu_iters = max_mu_iters
        self.cg_tol = cg_tol
        self.cg_max = cg_max
        self.mu_floor = mu_floor
        self.normalize = normalize
        self.channels = channels
        self.n_spatial_dims = n_spatial_dims
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _solver_config(self):
        return SolverConfig(beta=self.beta, rho=self.rho, tol=self.tol,
                            max_outer=self.max_outer, max_admm=self.max_admm,
                            admm_tol=self.admm_tol, max_mu_iters=self.max_mu_iters,
                            cg_tol=self.cg_tol, cg_max=self.cg_max, mu_floor=self.mu_floor,
                            seed=int(self.random_state or 0), normalize=self.normalize)

    def fit(self, X, y=None):
        """Learn the dictionary from signals ``X``.

        Parameters
        ----------
        X : array_like, shape (N, *dims) or (N, J, *dims)
        y : ignored
        """
        check_positive_int(self.n_filters, "n_filters")
        check_positive_int(self.n_jobs, "n_jobs")
        if self.channels not in CHANNEL_MODES:
            raise ValueError("channels must be one of %s" % (CHANNEL_MODES,))
        arr = check_signals(X, self.n_spatial_dims)
        support = check_support(self.filter_size, self.n_spatial_dims)
        check_fits(support, arr.shape[2:])
        cfg = RunConfig(self._solver_config(), self.n_filters, support,
                        Dataset.from_array(arr), channel_mode=self.channels)
        dictionary, _, trace = run_csc(cfg, threads=self.n_jobs)
        self.dictionary_ = dictionary
        self.components_ = np.array(dictionary.filters)
        self.trace_ = trace
        self.n_iter_ = trace.records[-1].outer_iter if len(trace) else 0
        self.converged_ = trace.converged
        self.n_channels_in_ = arr.shape[1]
        self.grid_shape_ = arr.shape[2:]
        return self

    def _prepare(self, X):
        arr = check_signals(X, self.n_spatial_dims)
        if arr.shape[1] != self.n_channels_in_:
            raise DimensionError("fitted on %d channels, got %d"
                                 % (self.n_channels_in_, arr.shape[1]))
        check_fits(self.dictionary_.support, arr.shape[2:])
        out = np.stack([normalize_array(a, self.normalize)[0] for a in arr])
        if self.components_.shape[1] == 1 and out.shape[1] > 1:
            out = out.reshape((-1, 1) + out.shape[2:])
        return arr.shape, out

    def transform(self, X):
        """Sparse maps of ``X`` against the learned filters.

        Returns
        -------
        ndarray
            (N, K, *dims), or (N, J, K, *dims) when channels were coded
            separately.
        """
        check_is_fitted(self, "components_")
        shape, x = self._prepare(X)
        cfg = self._solver_config()
        d_hat = filter_spectra(self.components_, x.shape[2:])
        maps = np.stack([code_signal(x[n], self.components_, cfg, d_hat=d_hat)[0]
                         for n in range(len(x))])
        if self.components_.shape[1] == 1 and shape[1] > 1:
            maps = maps.reshape(shape[:2] + maps.shape[1:])
        return maps

    def inverse_transform(self, Z):
        """Synthesize (normalized) signals from maps produced by :meth:`transform`.

        Single-channel results come back as (N, *dims), multi-channel ones
        as (N, J, *dims).
        """
        check_is_fitted(self, "components_")
        Z = np.asarray(Z, dtype=float)
        separate = Z.ndim == self.n_spatial_dims + 3
        flat = Z.reshape((-1,) + Z.shape[-self.n_spatial_dims - 1:])
        if flat.shape[1] != self.components_.shape[0]:
            raise DimensionError("maps hold %d filters, dictionary has %d"
                                 % (flat.shape[1], self.components_.shape[0]))
        out = np.stack([core.synthesize(self.components_, z) for z in flat])
        if separate:
            return out.reshape(Z.shape[:2] + out.shape[2:])
        if out.shape[1] == 1:
            return out[:, 0]
        return out

    def score(self, X, y=None):
        """Negative coding objective of ``X`` summed over signals."""
        check_is_fitted(self, "components_")
        _, x = self._prepare(X)
        maps = self.transform(X).reshape((len(x), self.components_.shape[0]) + x.shape[2:])
        parts = [core.objective_terms(x[n], self.components_, maps[n], self.beta)
                 for n in range(len(x))]
        return -core.combine(parts).total
