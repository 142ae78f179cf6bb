"""Alternating minimization driver, preprocessing and initialization."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from . import core
from .coding import CodingDualState, code_signal, filter_spectra
from .core import (ConvergenceTrace, Dictionary, SignalTensor, SolverConfig, SparseMaps,
                   TraceRecord)
from .exceptions import DimensionError, NumericalError
from .learning import LearningDualState, solve_learning_arrays

logger = logging.getLogger(__name__)

CHANNEL_MODES = ("separate", "joint")
DEFAULT_SUPPORT_2D = (11, 11)
LOCAL_SIGMA = 3.0
LOCAL_TRUNCATE = 4.0
STD_FLOOR = 1e-8


@dataclass
class Dataset:
    """N signals sharing grid and channel count."""

    signals: list
    names: list = field(default_factory=list)

    def __post_init__(self):
        self.signals = [s if isinstance(s, SignalTensor) else SignalTensor(s)
                        for s in self.signals]
        if not self.names:
            self.names = ["%04d" % i for i in range(len(self.signals))]
        if len(self.names) != len(self.signals):
            raise ValueError("got %d names for %d signals"
                             % (len(self.names), len(self.signals)))
        shapes = {s.values.shape for s in self.signals}
        if len(shapes) > 1:
            raise DimensionError("signals differ in shape: %s" % sorted(shapes))

    @classmethod
    def from_array(cls, arr, names=None):
        """Build from an array of shape (N, J, *dims)."""
        return cls(list(np.asarray(arr, dtype=float)), list(names or []))

    def __len__(self):
        return len(self.signals)

    @property
    def dims(self):
        return self.signals[0].dims

    @property
    def channels(self):
        return self.signals[0].channels

    def as_array(self):
        return np.stack([s.values for s in self.signals])


@dataclass
class RunConfig:
    solver: SolverConfig
    n_filters: int
    support: tuple
    dataset: Optional[Dataset] = None
    out_dir: Optional[str] = None
    channel_mode: str = "separate"

    def __post_init__(self):
        self.support = tuple(int(m) for m in self.support)
        if self.n_filters < 1:
            raise ValueError("n_filters must be >= 1, got %r" % self.n_filters)
        if self.channel_mode not in CHANNEL_MODES:
            raise ValueError("channel_mode must be one of %s" % (CHANNEL_MODES,))
        if any(m < 1 for m in self.support):
            raise ValueError("support sizes must be >= 1")
        if self.dataset is not None:
            if len(self.dataset) == 0:
                raise ValueError("dataset is empty")
            dims = self.dataset.dims
            if len(dims) != len(self.support) or any(
                    m > n for m, n in zip(self.support, dims)):
                raise DimensionError("support %s does not fit grid %s"
                                     % (self.support, dims))

    def coding_channels(self):
        """Channel count seen by the solvers (1 unless TCSC is active)."""
        if self.dataset is None:
            return 1
        return self.dataset.channels if self.channel_mode == "joint" else 1


# ---------------------------------------------------------------------------
# preprocessing


def normalize_array(x, mode):
    """Contrast-normalize one signal array of shape (J, *dims).

    Returns the normalized array and a flag set when the signal was constant
    (global mode), in which case the output is all zeros.
    """
    x = np.asarray(x, dtype=float)
    if mode == "none":
        return x.copy(), False
    if mode == "global":
        centered = x - x.mean()
        std = centered.std()
        return centered / max(std, STD_FLOOR), bool(std < STD_FLOOR)
    if mode == "local":
        sigma = (0.0,) + (LOCAL_SIGMA,) * (x.ndim - 1)
        blur = lambda a: ndimage.gaussian_filter(a, sigma, mode="wrap",
                                                 truncate=LOCAL_TRUNCATE)
        centered = x - blur(x)
        local_std = np.sqrt(np.maximum(blur(centered ** 2), 0.0))
        out = np.empty_like(x)
        for j in range(x.shape[0]):
            floor = max(local_std[j].mean(), STD_FLOOR)
            out[j] = centered[j] / np.maximum(local_std[j], floor)
        return out, bool(np.all(local_std < STD_FLOOR))
    raise ValueError("unknown normalization mode %r" % mode)


def normalize(x: SignalTensor, mode: str) -> SignalTensor:
    """Contrast normalization: ``none``, ``global`` (per-signal z-score) or
    ``local`` (subtract a Gaussian local mean, divide by the local deviation)."""
    out, constant = normalize_array(x.values, mode)
    if constant:
        logger.warning("constant signal under %s normalization; output is zero", mode)
    return SignalTensor(out)


def prepare_signals(cfg: RunConfig) -> np.ndarray:
    """Normalized signals in solver layout (N', J', *dims).

    In ``separate`` mode every channel becomes its own single-channel signal.
    """
    if cfg.dataset is None or len(cfg.dataset) == 0:
        raise ValueError("dataset is empty")
    arr = np.stack([normalize(s, cfg.solver.normalize).values for s in cfg.dataset.signals])
    if cfg.channel_mode == "separate" and arr.shape[1] > 1:
        arr = arr.reshape((-1, 1) + arr.shape[2:])
    return arr


# ---------------------------------------------------------------------------
# initialization


def random_filters(n_filters, channels, support, seed):
    """Uniform [-0.5, 0.5] filters scaled to unit norm (over all channels)."""
    rng = np.random.default_rng(seed)
    filters = rng.uniform(-0.5, 0.5, size=(n_filters, channels) + tuple(support))
    norms = np.sqrt(np.sum(filters.reshape(n_filters, -1) ** 2, axis=1))
    return filters / norms.reshape((-1,) + (1,) * (filters.ndim - 1))


def init_variables(cfg: RunConfig):
    """Zero maps and split variables, random unit-norm filters, ``mu = 1``.

    Returns
    -------
    dictionary : Dictionary
    maps : list of SparseMaps
    coding_states : list of CodingDualState
    learning_state : LearningDualState
    """
    channels = cfg.coding_channels()
    filters = random_filters(cfg.n_filters, channels, cfg.support, cfg.solver.seed)
    if cfg.dataset is None:
        return Dictionary(filters), [], [], LearningDualState.initial(cfg.n_filters)
    n_signals = len(cfg.dataset)
    if cfg.channel_mode == "separate":
        n_signals *= cfg.dataset.channels
    dims = cfg.dataset.dims
    maps = [core.zero_maps(cfg.n_filters, dims) for _ in range(n_signals)]
    states = [CodingDualState.zeros(cfg.n_filters, channels, dims) for _ in range(n_signals)]
    return Dictionary(filters), maps, states, LearningDualState.initial(cfg.n_filters)


# ---------------------------------------------------------------------------
# coordinate descent


def _objectives(x, filters, maps, beta):
    return [core.objective_terms(x[n], filters, maps[n], beta) for n in range(len(x))]


def _relative_change(new, old):
    denom = max(np.linalg.norm(new), np.linalg.norm(old), np.finfo(float).tiny)
    return float(np.linalg.norm(new - old) / denom)


def _check_finite(obj, outer, phase, filters, maps):
    if not math.isfinite(obj.total):
        raise NumericalError(
            "non-finite objective after %s step of outer iteration %d: data=%r l1=%r; "
            "filter norms=%s, max |z|=%r"
            % (phase, outer, obj.data_term, obj.l1_term,
               np.array2string(np.sqrt(np.sum(filters.reshape(len(filters), -1) ** 2, 1))),
               float(np.max(np.abs(maps)))))


def alternate(x, filters, cfg: SolverConfig, support, max_outer=None, threads=1,
              coding_states=None, learning_state=None, maps=None, callback=None):
    """Alternate coding and learning on solver-layout arrays.

    Parameters
    ----------
    x : ndarray, shape (N, J, *dims)
    filters : ndarray, shape (K, J, *support)
        Initial dictionary.
    cfg : SolverConfig
    support : tuple
    max_outer : int, optional
        Defaults to ``cfg.max_outer``.
    threads : int
        Worker threads for the per-signal coding solves.

    Returns
    -------
    filters : ndarray
    maps : ndarray, shape (N, K, *dims)
    trace : ConvergenceTrace
    coding_states, learning_state
        Final warm-start data.

    Notes
    -----
    A block update that would raise the joint objective (possible only
    through inexact inner solves) is rejected and the previous block kept,
    so the logged objective never increases.
    """
    x = np.asarray(x, dtype=float)
    filters = np.array(filters, dtype=float)
    n_signals = x.shape[0]
    n_filters = filters.shape[0]
    dims = x.shape[2:]
    max_outer = cfg.max_outer if max_outer is None else max_outer
    maps = np.zeros((n_signals, n_filters) + dims) if maps is None else np.array(maps)
    if coding_states is None:
        coding_states = [CodingDualState.zeros(n_filters, x.shape[1], dims)
                         for _ in range(n_signals)]
    if learning_state is None:
        learning_state = LearningDualState.initial(n_filters)
    trace = ConvergenceTrace()
    per_signal = _objectives(x, filters, maps, cfg.beta)
    previous = core.combine(per_signal)

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for outer in range(1, max_outer + 1):
            # coding half-step
            start = time.perf_counter()
            d_hat = filter_spectra(filters, dims)
            jobs = [(x[n], filters, cfg, coding_states[n], d_hat) for n in range(n_signals)]
            results = list(pool.map(lambda a: code_signal(*a), jobs)) if pool else \
                [code_signal(*a) for a in jobs]
            new_maps = maps.copy()
            admm_iters = 0
            for n, (z, state, stats) in enumerate(results):
                coding_states[n] = state
                admm_iters += stats.iterations
                candidate = core.objective_terms(x[n], filters, z, cfg.beta)
                if candidate.total <= per_signal[n].total:
                    new_maps[n] = z
                    per_signal[n] = candidate
                else:
                    logger.debug("coding step for signal %d rejected (%.3e > %.3e)",
                                 n, candidate.total, per_signal[n].total)
            elapsed = (time.perf_counter() - start) * 1e3
            z_change = _relative_change(new_maps, maps)
            maps = new_maps
            after_coding = core.combine(per_signal)
            _check_finite(after_coding, outer, "coding", filters, maps)
            trace.append(TraceRecord(outer, "coding", after_coding, admm_iters, 0, elapsed))

            # learning half-step
            start = time.perf_counter()
            candidate_filters, learning_state, lstats = solve_learning_arrays(
                x, maps, support, cfg, learning_state)
            candidate_parts = _objectives(x, candidate_filters, maps, cfg.beta)
            candidate = core.combine(candidate_parts)
            if candidate.total <= after_coding.total:
                d_change = _relative_change(candidate_filters, filters)
                filters = candidate_filters
                per_signal = candidate_parts
            else:
                logger.debug("learning step rejected (%.3e > %.3e)",
                             candidate.total, after_coding.total)
                d_change = 0.0
            elapsed = (time.perf_counter() - start) * 1e3
            after_learning = core.combine(per_signal)
            _check_finite(after_learning, outer, "learning", filters, maps)
            trace.append(TraceRecord(outer, "learning", after_learning, 0,
                                     lstats.cg_iterations, elapsed))
            if callback is not None:
                callback(outer, filters, maps, trace)

            obj_change = abs(previous.total - after_learning.total) / max(
                abs(previous.total), np.finfo(float).tiny)
            logger.info("outer %d: objective %.6g (change %.2e), d change %.2e, z change %.2e",
                        outer, after_learning.total, obj_change, d_change, z_change)
            previous = after_learning
            if obj_change < cfg.tol and d_change < cfg.tol and z_change < cfg.tol:
                trace.converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return filters, maps, trace, coding_states, learning_state


def run_csc(cfg: RunConfig, threads: int = 1):
    """Learn a dictionary for ``cfg.dataset``.

    Returns
    -------
    dictionary : Dictionary
    maps : list of SparseMaps
        One entry per solver signal (per image, or per image channel in
        ``separate`` mode with multi-channel input).
    trace : ConvergenceTrace
    """
    x = prepare_signals(cfg)
    dictionary, maps, states, lstate = init_variables(cfg)
    if cfg.solver.max_outer == 0:
        return dictionary, maps, ConvergenceTrace()
    filters, z, trace, _, _ = alternate(
        x, dictionary.filters, cfg.solver, cfg.support, threads=threads,
        coding_states=states, learning_state=lstate)
    return Dictionary(filters), [SparseMaps(m) for m in z], trace


def default_support(ndim):
    if ndim == 2:
        return DEFAULT_SUPPORT_2D
    return (11,) * ndim
