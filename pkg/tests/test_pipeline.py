import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dualcsc import spectral
from dualcsc.core import SignalTensor, SolverConfig, synthesize
from dualcsc.datasets import blob_images
from dualcsc.exceptions import DimensionError
from dualcsc.learning import filter_norms
from dualcsc.pipeline import (Dataset, RunConfig, alternate, default_support, init_variables,
                              normalize, normalize_array, prepare_signals, random_filters,
                              run_csc)


def _config(n_images=2, size=16, n_filters=4, support=(5, 5), **solver):
    data = Dataset.from_array(blob_images(n_images, size, seed=1))
    return RunConfig(SolverConfig(**solver), n_filters, support, data)


def test_normalize_modes(rng):
    x = SignalTensor(rng.uniform(0, 5, size=(1, 12, 12)))
    assert np.array_equal(normalize(x, "none").values, x.values)
    g = normalize(x, "global").values
    assert abs(g.mean()) < 1e-10 and abs(g.std() - 1) < 1e-8
    loc = normalize(x, "local").values
    assert loc.shape == x.values.shape and np.all(np.isfinite(loc))
    with pytest.raises(ValueError):
        normalize_array(x.values, "median")


def test_constant_signal_normalizes_to_zero(caplog):
    with caplog.at_level(logging.WARNING, logger="dualcsc.pipeline"):
        out = normalize(SignalTensor(np.full((1, 5, 5), 3.0)), "global")
    assert not np.any(out.values)
    assert "constant" in caplog.text
    out, flag = normalize_array(np.full((1, 5, 5), 3.0), "local")
    assert flag and not np.any(out)


def test_local_normalization_removes_offset_and_scale(rng):
    x = rng.standard_normal((1, 16, 16))
    a, _ = normalize_array(x, "local")
    b, _ = normalize_array(4.0 * x + 7.0, "local")
    assert np.allclose(a, b, atol=1e-10)


@given(st.integers(0, 10 ** 6))
def test_global_normalization_is_affine_invariant(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 6, 6))
    a, _ = normalize_array(x, "global")
    b, _ = normalize_array(0.5 * x - 2.0, "global")
    assert np.allclose(a, b, atol=1e-10)


def test_initialization_contract():
    cfg = _config()
    d1, maps, states, lstate = init_variables(cfg)
    d2 = init_variables(cfg)[0]
    assert np.array_equal(d1.filters, d2.filters)
    assert np.abs(filter_norms(d1.filters) - 1).max() <= 1e-12
    assert all(not np.any(m.values) for m in maps) and len(maps) == 2
    assert all(not np.any(s.theta) for s in states)
    assert np.array_equal(lstate.mu, np.ones(4))
    other = random_filters(4, 1, (5, 5), seed=1)
    assert not np.array_equal(other, d1.filters)
    color = random_filters(3, 2, (3, 3), seed=0)
    assert color.shape == (3, 2, 3, 3)
    assert np.allclose(filter_norms(color), 1)


def test_max_outer_zero_returns_initialization():
    cfg = _config(max_outer=0)
    d, maps, trace = run_csc(cfg)
    assert np.array_equal(d.filters, init_variables(cfg)[0].filters)
    assert len(trace) == 0
    assert all(not np.any(m.values) for m in maps)


def test_run_is_monotone_and_feasible():
    d, maps, trace = run_csc(_config(max_outer=5))
    assert len(trace) == 10
    assert [r.phase for r in trace][:2] == ["coding", "learning"]
    assert trace.is_monotone(1e-9)
    assert np.all(filter_norms(d.filters) <= 1 + 1e-6)


def test_serial_runs_are_identical_and_threads_agree():
    a = run_csc(_config(n_images=3, max_outer=3))[2].totals()
    b = run_csc(_config(n_images=3, max_outer=3))[2].totals()
    c = run_csc(_config(n_images=3, max_outer=3), threads=3)[2].totals()
    assert np.array_equal(a, b)
    assert np.allclose(a, c, rtol=1e-8, atol=0)


def test_single_filter_recovers_planted_atom():
    # the image is itself a unit-norm 2x2 filter padded onto a 4x4 grid
    rng = np.random.default_rng(4)
    atom = rng.standard_normal((2, 2))
    atom /= np.linalg.norm(atom)
    x = spectral.pad_filter(atom, (4, 4))[np.newaxis, np.newaxis]
    solver = SolverConfig(beta=0.01, rho=10.0, normalize="none", max_outer=200,
                          max_admm=5000, admm_tol=1e-8, max_mu_iters=100, cg_tol=1e-10)
    d, maps, trace = run_csc(RunConfig(solver, 1, (2, 2), Dataset.from_array(x)))
    recon = synthesize(d.filters, maps[0].values)
    err = np.linalg.norm(recon - x[0]) / np.linalg.norm(x[0])
    assert err <= 0.05
    last = trace.records[-1].objective
    assert last.data_term <= 0.05 * last.total + 1e-12


def test_separate_mode_splits_color_channels(rng):
    data = Dataset.from_array(rng.standard_normal((2, 3, 8, 8)))
    cfg = RunConfig(SolverConfig(max_outer=1), 2, (3, 3), data)
    assert prepare_signals(cfg).shape == (6, 1, 8, 8)
    assert cfg.coding_channels() == 1
    d, maps, _ = run_csc(cfg)
    assert d.filters.shape == (2, 1, 3, 3) and len(maps) == 6


def test_joint_mode_keeps_channels(rng):
    data = Dataset.from_array(rng.standard_normal((2, 3, 8, 8)))
    cfg = RunConfig(SolverConfig(max_outer=2), 2, (3, 3), data, channel_mode="joint")
    d, maps, trace = run_csc(cfg)
    assert d.filters.shape == (2, 3, 3, 3) and len(maps) == 2
    assert trace.is_monotone(1e-9)


def test_three_dimensional_signal(rng):
    data = Dataset.from_array(rng.standard_normal((1, 1, 4, 8, 8)))
    d, maps, trace = run_csc(RunConfig(SolverConfig(max_outer=2), 2, (2, 3, 3), data))
    assert d.filters.shape == (2, 1, 2, 3, 3)
    assert trace.is_monotone(1e-9)


def test_warm_starts_resume_a_run(rng):
    x = prepare_signals(_config())
    filters = random_filters(4, 1, (5, 5), seed=0)
    cfg = SolverConfig()
    f1, z1, t1, states, lstate = alternate(x, filters, cfg, (5, 5), max_outer=2)
    f2, z2, t2, _, _ = alternate(x, f1, cfg, (5, 5), max_outer=1, coding_states=states,
                                 learning_state=lstate, maps=z1)
    assert t2.records[-1].objective.total <= t1.records[-1].objective.total + 1e-9


def test_callback_sees_every_outer_iteration():
    x = prepare_signals(_config())
    seen = []
    alternate(x, random_filters(4, 1, (5, 5), 0), SolverConfig(), (5, 5), max_outer=3,
              callback=lambda outer, f, z, trace: seen.append((outer, len(trace))))
    assert seen == [(1, 2), (2, 4), (3, 6)]


def test_large_setting_is_monotone():
    # 10 images, beta = 0.5 and K = 49 at 64x64, capped at two outer iterations
    data = Dataset.from_array(blob_images(10, 64, seed=3))
    solver = SolverConfig(beta=0.5, max_outer=2, max_admm=100, max_mu_iters=3)
    d, maps, trace = run_csc(RunConfig(solver, 49, (11, 11), data))
    assert len(maps) == 10
    assert trace.is_monotone(1e-9)
    assert np.all(filter_norms(d.filters) <= 1 + 1e-6)


def test_config_validation(rng):
    data = Dataset.from_array(rng.standard_normal((1, 1, 4, 4)))
    with pytest.raises(ValueError):
        RunConfig(SolverConfig(), 0, (2, 2), data)
    with pytest.raises(DimensionError):
        RunConfig(SolverConfig(), 1, (5, 5), data)
    with pytest.raises(ValueError):
        RunConfig(SolverConfig(), 1, (2, 2), data, channel_mode="mixed")
    with pytest.raises(DimensionError):
        Dataset([np.zeros((1, 4, 4)), np.zeros((1, 5, 5))])
    with pytest.raises(ValueError):
        Dataset.from_array(np.zeros((2, 1, 4, 4)), names=["a"])
    with pytest.raises(ValueError, match="empty"):
        RunConfig(SolverConfig(), 1, (2, 2), Dataset([]))
    with pytest.raises(ValueError, match="empty"):
        prepare_signals(RunConfig(SolverConfig(), 1, (2, 2)))
    assert default_support(2) == (11, 11) and default_support(3) == (11, 11, 11)
