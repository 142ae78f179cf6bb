"""Timing harness for the scaling of the coding and learning half-steps."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .core import SolverConfig
from .datasets import blob_images
from .pipeline import alternate, normalize_array, random_filters

logger = logging.getLogger(__name__)

VARY_CHOICES = ("k", "n", "beta")
BENCH_HEADER = ("varied_value", "phase", "mean_ms_per_outer_iter", "std_ms")


@dataclass
class BenchConfig:
    """Fixed parameters of a sweep; the varied one is taken from ``grid``.

    ``admm_iters``, ``mu_iters`` and ``cg_iters`` are run exactly (inner
    tolerances are zeroed) so that the per-iteration cost is what gets
    compared.
    """

    vary: str
    grid: tuple
    repeats: int = 3
    size: int = 64
    n_filters: int = 16
    n_images: int = 1
    beta: float = 0.5
    rho: float = 0.1
    filter_size: int = 11
    admm_iters: int = 50
    mu_iters: int = 2
    cg_iters: int = 20
    outer: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.vary not in VARY_CHOICES:
            raise ValueError("vary must be one of %s" % (VARY_CHOICES,))
        self.grid = tuple(self.grid)
        if not self.grid:
            raise ValueError("grid is empty")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.outer < 1:
            raise ValueError("outer must be >= 1")


@dataclass(frozen=True)
class BenchRow:
    varied_value: float
    phase: str
    mean_ms_per_outer_iter: float
    std_ms: float


def _setting(cfg, value):
    n_filters, n_images, beta = cfg.n_filters, cfg.n_images, cfg.beta
    if cfg.vary == "k":
        n_filters = int(value)
    elif cfg.vary == "n":
        n_images = int(value)
    else:
        beta = float(value)
    return n_filters, n_images, beta


def time_setting(cfg, value, repeat):
    """Per-outer-iteration milliseconds of each phase for one run."""
    n_filters, n_images, beta = _setting(cfg, value)
    x = blob_images(n_images, cfg.size, seed=cfg.seed + repeat)
    x = np.stack([normalize_array(a, "global")[0] for a in x])
    support = (cfg.filter_size, cfg.filter_size)
    filters = random_filters(n_filters, 1, support, cfg.seed + repeat)
    solver = SolverConfig(beta=beta, rho=cfg.rho, max_outer=cfg.outer,
                          max_admm=cfg.admm_iters, admm_tol=0.0,
                          max_mu_iters=cfg.mu_iters, cg_tol=0.0, cg_max=cfg.cg_iters,
                          seed=cfg.seed, normalize="none")
    # the trace timings wrap the solver calls only
    _, _, trace, _, _ = alternate(x, filters, solver, support)
    out = {"coding": [], "learning": []}
    for rec in trace:
        out[rec.phase].append(rec.elapsed_ms)
    return out


def run_bench(cfg: BenchConfig):
    """Run the sweep and return one BenchRow per (value, phase)."""
    rows = []
    for value in cfg.grid:
        samples = {"coding": [], "learning": []}
        for r in range(cfg.repeats):
            for phase, times in time_setting(cfg, value, r).items():
                samples[phase].extend(times)
        for phase in ("coding", "learning"):
            t = np.array(samples[phase])
            rows.append(BenchRow(value, phase, float(t.mean()), float(t.std())))
            logger.info("%s=%s %s: %.2f ms (+- %.2f)", cfg.vary, value, phase,
                        rows[-1].mean_ms_per_outer_iter, rows[-1].std_ms)
    return rows


def write_bench_csv(fh, rows):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(BENCH_HEADER)
    for row in rows:
        writer.writerow([row.varied_value, row.phase, "%.6f" % row.mean_ms_per_outer_iter,
                         "%.6f" % row.std_ms])


def linear_fit_r2(x, y):
    """Coefficient of determination of the least-squares line through (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    total = np.sum((y - y.mean()) ** 2)
    if total == 0:
        return 1.0
    return float(1.0 - np.sum(resid ** 2) / total)
