"""Domain types, solver configuration and objective evaluation.

Array conventions used throughout the package:

* a signal is stored as ``(J, n_1, ..., n_d)``: channels first, then the grid;
* a dictionary is stored as ``(K, J, m_1, ..., m_d)``: one filter per row,
  each filter holding one slice per channel, placed at the low-index corner
  of the grid when zero-padded;
* sparse maps are stored as ``(K, n_1, ..., n_d)`` and shared across the
  channels of a signal.

All convolutions are circular.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import spectral
from .exceptions import DimensionError, NumericalError

NORMALIZE_MODES = ("none", "global", "local")


def _frozen_copy(values, dtype=np.float64):
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SignalTensor:
    """Real multi-channel signal on a regular grid.

    Parameters
    ----------
    values : array_like, shape (J, n_1, ..., n_d)
        Channel-major samples.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_copy(self.values)
        if arr.ndim < 2:
            raise DimensionError(
                "signal values must have shape (channels, *dims), got %s" % (arr.shape,))
        if min(arr.shape) < 1:
            raise DimensionError("all signal dimensions must be >= 1")
        if not np.all(np.isfinite(arr)):
            raise NumericalError("signal contains non-finite values")
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_grid(cls, grid) -> "SignalTensor":
        """Wrap a single-channel array of shape ``dims``."""
        return cls(np.asarray(grid, dtype=np.float64)[np.newaxis])

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> tuple:
        return self.values.shape[1:]

    @property
    def size(self) -> int:
        """Number of grid points ``D``."""
        return math.prod(self.dims)


@dataclass(frozen=True, eq=False)
class Dictionary:
    """K filters with a common spatial support.

    Parameters
    ----------
    filters : array_like, shape (K, J, m_1, ..., m_d)
    """

    filters: np.ndarray

    def __post_init__(self):
        arr = _frozen_copy(self.filters)
        if arr.ndim < 3:
            raise DimensionError(
                "filters must have shape (K, channels, *support), got %s" % (arr.shape,))
        if min(arr.shape) < 1:
            raise DimensionError("all filter dimensions must be >= 1")
        if not np.all(np.isfinite(arr)):
            raise NumericalError("dictionary contains non-finite values")
        object.__setattr__(self, "filters", arr)

    @property
    def n_filters(self) -> int:
        return self.filters.shape[0]

    @property
    def channels(self) -> int:
        return self.filters.shape[1]

    @property
    def support(self) -> tuple:
        return self.filters.shape[2:]

    def norms(self) -> np.ndarray:
        """Euclidean norm of every filter, taken over all channels."""
        return np.sqrt(np.sum(self.filters.reshape(self.n_filters, -1) ** 2, axis=1))

    def check_grid(self, dims: Sequence[int]) -> None:
        if len(dims) != len(self.support):
            raise DimensionError(
                "filter support %s and grid %s differ in dimensionality"
                % (self.support, tuple(dims)))
        if any(m > n for m, n in zip(self.support, dims)):
            raise DimensionError(
                "filter support %s exceeds grid %s" % (self.support, tuple(dims)))


@dataclass(frozen=True, eq=False)
class SparseMaps:
    """K coefficient maps on the signal grid.

    Parameters
    ----------
    values : array_like, shape (K, n_1, ..., n_d)
    """

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_copy(self.values)
        if arr.ndim < 2:
            raise DimensionError(
                "maps must have shape (K, *dims), got %s" % (arr.shape,))
        if not np.all(np.isfinite(arr)):
            raise NumericalError("sparse maps contain non-finite values")
        object.__setattr__(self, "values", arr)

    @property
    def n_filters(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> tuple:
        return self.values.shape[1:]

    def l1_norm(self) -> float:
        return float(np.abs(self.values).sum())


@dataclass(frozen=True)
class SolverConfig:
    """Parameters shared by the coding and learning solvers.

    ``admm_tol`` is the relative tolerance of the inner ADMM stopping rule;
    setting it to 0 forces exactly ``max_admm`` iterations. ``max_mu_iters``
    bounds the multiplier ascent of one learning call; inside the alternating
    loop the multipliers are carried over between calls, so a small cap is
    enough there. Standalone learning solves usually want a larger one.
    """

    beta: float = 0.5
    rho: float = 0.1
    tol: float = 1e-3
    max_outer: int = 50
    max_admm: int = 1000
    admm_tol: float = 1e-4
    max_mu_iters: int = 10
    cg_tol: float = 1e-6
    cg_max: int = 200
    mu_floor: float = 1e-6
    seed: int = 0
    normalize: str = "global"

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be > 0, got %r" % self.beta)
        if not self.rho > 0:
            raise ValueError("rho must be > 0, got %r" % self.rho)
        if not self.tol > 0:
            raise ValueError("tol must be > 0, got %r" % self.tol)
        if not self.mu_floor > 0:
            raise ValueError("mu_floor must be > 0, got %r" % self.mu_floor)
        if self.admm_tol < 0 or self.cg_tol < 0:
            raise ValueError("inner tolerances must be >= 0")
        for name in ("max_outer", "max_admm", "max_mu_iters", "cg_max"):
            if getattr(self, name) < 0:
                raise ValueError("%s must be >= 0" % name)
        if self.normalize not in NORMALIZE_MODES:
            raise ValueError("normalize must be one of %s, got %r"
                             % (NORMALIZE_MODES, self.normalize))


@dataclass(frozen=True)
class ObjectiveBreakdown:
    data_term: float
    l1_term: float
    total: float
    residual_norm: float


@dataclass(frozen=True)
class TraceRecord:
    outer_iter: int
    phase: str
    objective: ObjectiveBreakdown
    admm_iters: int
    cg_iters: int
    elapsed_ms: float


@dataclass
class ConvergenceTrace:
    """Per half-step history of a coordinate-descent run."""

    records: list = field(default_factory=list)
    converged: bool = False

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def totals(self) -> np.ndarray:
        return np.array([r.objective.total for r in self.records])

    def is_monotone(self, slack: float = 1e-9) -> bool:
        totals = self.totals()
        return bool(np.all(np.diff(totals) <= slack))


# ---------------------------------------------------------------------------
# objective


def _check_shapes(x: SignalTensor, d: Dictionary, z: SparseMaps) -> None:
    if d.n_filters != z.n_filters:
        raise DimensionError("dictionary has %d filters but %d maps were given"
                             % (d.n_filters, z.n_filters))
    if d.channels != x.channels:
        raise DimensionError("dictionary has %d channels but signal has %d"
                             % (d.channels, x.channels))
    if z.dims != x.dims:
        raise DimensionError("map grid %s differs from signal grid %s" % (z.dims, x.dims))
    d.check_grid(x.dims)


def synthesize(filters: np.ndarray, maps: np.ndarray) -> np.ndarray:
    """Array form of :func:`reconstruct`.

    ``filters`` has shape (K, J, *support) and ``maps`` (K, *dims); the
    result has shape (J, *dims).
    """
    dims = maps.shape[1:]
    ndim = len(dims)
    d_hat = spectral.forward_rdft(spectral.pad_filter(filters, dims), ndim)
    z_hat = spectral.forward_rdft(maps, ndim)
    out_hat = np.einsum("kj...,k...->j...", d_hat, z_hat)
    return spectral.inverse_rdft(out_hat, dims)


def reconstruct(d: Dictionary, z: SparseMaps) -> SignalTensor:
    """Sum of circular convolutions of each filter with its map."""
    if d.n_filters != z.n_filters:
        raise DimensionError("dictionary has %d filters but %d maps were given"
                             % (d.n_filters, z.n_filters))
    d.check_grid(z.dims)
    return SignalTensor(synthesize(d.filters, z.values))


def objective_terms(x: np.ndarray, filters: np.ndarray, maps: np.ndarray,
                    beta: float) -> ObjectiveBreakdown:
    """Array form of :func:`evaluate_objective` for one signal."""
    residual = synthesize(filters, maps) - x
    data = 0.5 * float(np.sum(residual ** 2))
    l1 = beta * float(np.abs(maps).sum())
    return ObjectiveBreakdown(data, l1, data + l1, math.sqrt(2.0 * data))


def combine(parts: Sequence[ObjectiveBreakdown]) -> ObjectiveBreakdown:
    """Sum per-signal breakdowns into one."""
    data = sum(p.data_term for p in parts)
    l1 = sum(p.l1_term for p in parts)
    return ObjectiveBreakdown(data, l1, data + l1, math.sqrt(2.0 * data))


def evaluate_objective(x: SignalTensor, d: Dictionary, z: SparseMaps,
                       beta: float) -> ObjectiveBreakdown:
    """Evaluate ``0.5 * ||x - sum_k d_k * z_k||^2 + beta * sum_k ||z_k||_1``.

    The residual is formed in the spatial domain, so the value does not
    depend on any DFT normalization.
    """
    _check_shapes(x, d, z)
    out = objective_terms(x.values, d.filters, z.values, beta)
    if not math.isfinite(out.total):
        raise NumericalError("objective is not finite")
    return out


def evaluate_dataset_objective(signals: Sequence[SignalTensor], d: Dictionary,
                               maps: Sequence[SparseMaps], beta: float,
                               ) -> ObjectiveBreakdown:
    if len(signals) != len(maps):
        raise DimensionError("%d signals but %d map sets" % (len(signals), len(maps)))
    return combine([evaluate_objective(x, d, z, beta) for x, z in zip(signals, maps)])


def zero_maps(n_filters: int, dims: Sequence[int]) -> SparseMaps:
    return SparseMaps(np.zeros((n_filters,) + tuple(dims)))
