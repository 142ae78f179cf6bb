import logging

import numpy as np
import pytest
from conftest import sparse_maps
from hypothesis import given
from hypothesis import strategies as st

from dualcsc import oracle
from dualcsc.core import SolverConfig, SparseMaps
from dualcsc.exceptions import DimensionError, NumericalError
from dualcsc.learning import (LearningDualState, MapOperator, conjugate_gradient, d_recover,
                              filter_norms, gamma_solve, learning_operator_apply, mu_update,
                              solve_learning, solve_learning_arrays)

SUPPORT = (2, 2)


def _maps(seed, n_signals=2, n_filters=2, dims=(5, 5), density=0.3):
    rng = np.random.default_rng(seed)
    return rng, sparse_maps(rng, (n_signals, n_filters) + dims, density)


def _dense_operator(z, mu, support):
    z_mat, sel = oracle.materialize_maps(z, support)
    m = int(np.prod(support))
    w = np.repeat(0.5 / np.asarray(mu), m)
    B = z_mat @ sel.T
    return np.eye(B.shape[0]) + B @ np.diag(w) @ B.T, B


def test_operator_matches_dense():
    rng, z = _maps(1)
    mu = np.array([0.7, 2.0])
    v = rng.standard_normal((2, 5, 5))
    A, _ = _dense_operator(z, mu, SUPPORT)
    out = learning_operator_apply(z, mu, v, SUPPORT)
    assert np.allclose(out.ravel(), A @ v.ravel())


def test_map_operator_adjoint_pair():
    rng, z = _maps(2)
    op = MapOperator(z, SUPPORT)
    v = rng.standard_normal((2, 5, 5))
    c = rng.standard_normal((2,) + SUPPORT)
    assert np.sum(op.correlate(v) * c) == pytest.approx(np.sum(v * op.convolve(c)), rel=1e-12)
    _, B = _dense_operator(z, np.ones(2), SUPPORT)
    assert np.allclose(op.convolve(c).ravel(), B @ c.ravel())


@given(st.integers(0, 10 ** 6), st.lists(st.floats(1e-3, 1e3), min_size=2, max_size=2))
def test_operator_symmetric_positive_definite(seed, mu):
    rng, z = _maps(seed)
    u = rng.standard_normal((2, 5, 5))
    v = rng.standard_normal((2, 5, 5))
    Au = learning_operator_apply(z, mu, u, SUPPORT)
    Av = learning_operator_apply(z, mu, v, SUPPORT)
    scale = max(np.linalg.norm(Au) * np.linalg.norm(v), 1.0)
    assert abs(np.sum(Au * v) - np.sum(u * Av)) <= 1e-10 * scale
    assert np.sum(v * Av) >= np.sum(v * v) * (1 - 1e-12)


def test_small_multipliers_are_clamped(caplog):
    rng, z = _maps(3)
    v = rng.standard_normal((2, 5, 5))
    with caplog.at_level(logging.WARNING, logger="dualcsc.learning"):
        a = learning_operator_apply(z, [0.0, 1.0], v, SUPPORT, mu_floor=1e-3)
    assert "clamped" in caplog.text
    b = learning_operator_apply(z, [1e-3, 1.0], v, SUPPORT, mu_floor=1e-3)
    assert np.array_equal(a, b)


def test_cg_solves_spd_system(rng):
    M = rng.standard_normal((30, 30))
    A = M @ M.T + np.eye(30)
    b = rng.standard_normal(30)
    x, info = conjugate_gradient(lambda v: A @ v, b, tol=1e-12, maxiter=200)
    assert info.converged
    assert np.allclose(A @ x, b, atol=1e-9)
    assert info.residuals[-1] == info.relative_residual


def test_cg_error_energy_decreases(rng):
    M = rng.standard_normal((40, 40))
    A = M @ M.T + 0.1 * np.eye(40)
    b = rng.standard_normal(40)
    exact = np.linalg.solve(A, b)
    errors = []

    def track(x, r):
        e = x - exact
        errors.append(e @ A @ e)

    conjugate_gradient(lambda v: A @ v, b, tol=1e-10, maxiter=60, callback=track)
    assert all(b_ <= a * (1 + 1e-9) + 1e-20 for a, b_ in zip(errors, errors[1:]))


def test_cg_edge_cases(rng):
    x, info = conjugate_gradient(lambda v: v, np.zeros(4))
    assert info.converged and info.iterations == 0 and not np.any(x)
    x, info = conjugate_gradient(lambda v: 2 * v, np.ones(4), x0=0.5 * np.ones(4))
    assert info.iterations == 0 and info.converged
    with pytest.raises(NumericalError):
        conjugate_gradient(lambda v: -v, np.ones(4))
    A = np.diag(np.arange(1.0, 21.0))
    x, info = conjugate_gradient(lambda v: A @ v, np.ones(20), tol=1e-14, maxiter=3)
    assert not info.converged and info.iterations == 3
    assert info.relative_residual == min(info.residuals)


def test_gamma_solve_and_recover_match_dense():
    rng, z = _maps(4)
    x = rng.standard_normal((2, 5, 5))
    mu = np.array([0.5, 1.5])
    cfg = SolverConfig(cg_tol=1e-12, cg_max=500)
    gamma, info = gamma_solve(x, z, mu, cfg, support=SUPPORT)
    A, B = _dense_operator(z, mu, SUPPORT)
    ref = -np.linalg.solve(A, x.ravel())
    assert np.abs(gamma.ravel() - ref).max() < 1e-9
    d = d_recover(gamma[:, np.newaxis], z, mu, SUPPORT)
    w = np.repeat(0.5 / mu, 4)
    assert d.shape == (2, 1) + SUPPORT
    assert np.allclose(d.ravel(), -w * (B.T @ ref))


def test_mu_update_examples():
    assert np.allclose(mu_update([1.0, 2.0], np.array([0.5, 1.0])), [0.5, 2.0])
    assert np.allclose(mu_update([1e-6], np.array([0.0])), [1e-6])
    filters = np.zeros((2, 1, 2, 2))
    filters[0, 0, 0, 0] = 3.0
    filters[1, 0, 1, 1] = 0.5
    assert np.allclose(mu_update([1.0, 1.0], filters), [3.0, 0.5])
    assert np.allclose(filter_norms(filters), [3.0, 0.5])


@given(st.lists(st.tuples(st.floats(1e-6, 1e6), st.floats(0, 1e3)), min_size=1, max_size=6))
def test_mu_update_properties(pairs):
    mu, norms = (np.array(v) for v in zip(*pairs))
    new = mu_update(mu, norms)
    assert np.all(new >= 1e-6)
    assert np.all((new > mu) == (mu * norms > mu))
    unit = mu_update(mu, np.ones_like(mu))
    assert np.allclose(unit, mu)


@pytest.fixture(scope="module")
def learned():
    rng, z = _maps(5, n_signals=2, n_filters=2, dims=(6, 6), density=0.4)
    x = rng.standard_normal((2, 1, 6, 6))
    cfg = SolverConfig(max_mu_iters=2000, cg_tol=1e-12, cg_max=500)
    filters, state, stats = solve_learning_arrays(x, z, SUPPORT, cfg)
    return x, z, filters, stats


def test_learning_matches_projected_gradient(learned):
    x, z, filters, stats = learned
    assert stats.converged
    z_mat, sel = oracle.materialize_maps(z, SUPPORT)
    ref = oracle.projected_gradient_dict(z_mat, sel, x[:, 0].ravel(), n_filters=2)
    B = z_mat @ sel.T
    ours = oracle.learning_objective(B, x[:, 0].ravel(), filters.ravel())
    best = oracle.learning_objective(B, x[:, 0].ravel(), ref)
    assert abs(ours - best) <= 1e-4 * best
    assert np.linalg.norm(filters.ravel() - ref) <= 1e-3 * max(np.linalg.norm(ref), 1.0)


def test_learned_filters_are_feasible(learned):
    x, z, filters, stats = learned
    assert np.all(filter_norms(filters) <= 1 + 1e-12)


def test_all_zero_maps_give_zero_dictionary(caplog, rng):
    x = rng.standard_normal((2, 1, 5, 5))
    with caplog.at_level(logging.WARNING, logger="dualcsc.learning"):
        d, state, stats = solve_learning(x, np.zeros((2, 3, 5, 5)), SolverConfig(), SUPPORT)
    assert stats.degenerate and not np.any(d.filters)
    assert stats.dead == [0, 1, 2]
    assert "all sparse maps are zero" in caplog.text


def test_dead_filter_stays_zero():
    rng, z = _maps(6, n_filters=3)
    z[:, 1] = 0
    x = rng.standard_normal((2, 1, 5, 5))
    filters, _, stats = solve_learning_arrays(x, z, SUPPORT, SolverConfig(max_mu_iters=200))
    assert stats.dead == [1]
    assert not np.any(filters[1])
    assert np.any(filters[0]) and np.any(filters[2])


def test_warm_start_reduces_work():
    rng, z = _maps(7)
    x = rng.standard_normal((2, 1, 5, 5))
    cfg = SolverConfig(max_mu_iters=500, cg_tol=1e-10)
    _, state, cold = solve_learning_arrays(x, z, SUPPORT, cfg)
    _, state2, warm = solve_learning_arrays(x, z, SUPPORT, cfg, warm=state)
    assert warm.cg_iterations < cold.cg_iterations
    assert state2.cg_iterations == state.cg_iterations + warm.cg_iterations


def test_value_object_inputs(rng):
    _, z = _maps(8)
    x = rng.standard_normal((2, 1, 5, 5))
    d, state, stats = solve_learning(list(x), [SparseMaps(m) for m in z], SolverConfig(),
                                     SUPPORT)
    assert d.filters.shape == (2, 1) + SUPPORT
    assert isinstance(state, LearningDualState)


def test_shape_errors(rng):
    _, z = _maps(9)
    with pytest.raises(DimensionError):
        solve_learning_arrays(np.zeros((3, 1, 5, 5)), z, SUPPORT, SolverConfig())
    with pytest.raises(DimensionError):
        MapOperator(z, (2,))
    with pytest.raises(DimensionError):
        solve_learning_arrays(np.zeros((2, 1, 5, 5)), z, SUPPORT, SolverConfig(),
                              warm=LearningDualState.initial(5))


def test_zero_maps_give_identity_operator(rng):
    v = rng.standard_normal((2, 5, 5))
    z = np.zeros((2, 2, 5, 5))
    assert np.array_equal(learning_operator_apply(z, [1.0, 1.0], v, SUPPORT), v)
    gamma, _ = gamma_solve(v, z, np.ones(2), SolverConfig(), support=SUPPORT)
    assert np.allclose(gamma, -v)
    assert not np.any(d_recover(gamma[:, np.newaxis], z, np.ones(2), SUPPORT))


def test_huge_multipliers_vanish():
    rng, z = _maps(10)
    v = rng.standard_normal((2, 5, 5))
    out = learning_operator_apply(z, [1e12, 1e12], v, SUPPORT)
    assert np.linalg.norm(out - v) <= 1e-6 * np.linalg.norm(v)
    gamma, _ = gamma_solve(v, z, np.full(2, 1e12), SolverConfig(), support=SUPPORT)
    assert np.abs(gamma + v).max() < 1e-6


@given(st.integers(0, 10 ** 6), st.floats(-5, 5))
def test_recovery_is_linear_in_gamma(seed, c):
    rng, z = _maps(seed)
    gamma = rng.standard_normal((2, 1, 5, 5))
    mu = np.array([0.3, 2.0])
    assert np.allclose(d_recover(c * gamma, z, mu, SUPPORT), c * d_recover(gamma, z, mu, SUPPORT))


def test_mu_update_spec_values():
    assert mu_update([1.0], np.array([2.0]))[0] == 2.0
    assert mu_update([0.5], np.array([1.0]))[0] == 0.5
    assert mu_update([1.0], np.array([0.0]), mu_floor=1e-6)[0] == 1e-6


def test_cg_energy_norm_decreases_on_learning_operator():
    rng, z = _maps(11)
    x = rng.standard_normal((2, 5, 5))
    mu = np.array([0.05, 0.2])
    A, _ = _dense_operator(z, mu, SUPPORT)
    exact = np.linalg.solve(A, x.ravel())
    energies = []

    def track(g, r):
        e = g.ravel() - exact
        energies.append(e @ A @ e)

    gamma_solve(x, z, mu, SolverConfig(cg_tol=1e-12, cg_max=100), support=SUPPORT,
                callback=track)
    assert len(energies) > 2
    assert all(b <= a * (1 + 1e-9) + 1e-24 for a, b in zip(energies, energies[1:]))


def test_impulse_map_recovers_signal_direction(rng):
    # one image, K = 1, an impulse map and full support: d is x normalized
    x = rng.standard_normal((1, 1, 4, 4))
    z = np.zeros((1, 1, 4, 4))
    z[0, 0, 0, 0] = 1.0
    cfg = SolverConfig(max_mu_iters=500, cg_tol=1e-12)
    filters, _, stats = solve_learning_arrays(x, z, (4, 4), cfg)
    assert abs(np.linalg.norm(filters) - 1) <= 1e-3
    cos = np.sum(filters * x) / (np.linalg.norm(filters) * np.linalg.norm(x))
    assert cos > 1 - 1e-10


def test_one_dimensional_instance_matches_oracle():
    rng = np.random.default_rng(12)
    z = sparse_maps(rng, (2, 2, 16), density=0.3)
    x = rng.standard_normal((2, 1, 16))
    cfg = SolverConfig(max_mu_iters=2000, cg_tol=1e-12, cg_max=500)
    filters, _, _ = solve_learning_arrays(x, z, (3,), cfg)
    z_mat, sel = oracle.materialize_maps(z, (3,))
    B = z_mat @ sel.T
    ref = oracle.projected_gradient_dict(z_mat, sel, x[:, 0].ravel(), n_filters=2)
    ours = oracle.learning_objective(B, x[:, 0].ravel(), filters.ravel())
    best = oracle.learning_objective(B, x[:, 0].ravel(), ref)
    assert abs(ours - best) <= 1e-3 * best
    assert np.all(filter_norms(filters) <= 1 + 1e-6)
