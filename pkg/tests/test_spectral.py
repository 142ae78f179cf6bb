import numpy as np
import pytest
from conftest import direct_circular_convolution, direct_dft
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dualcsc import spectral
from dualcsc.exceptions import DimensionError, NumericalError

grids = st.sampled_from([(8,), (5,), (4, 4), (3, 5), (2, 3, 4)])
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_impulse_has_flat_spectrum():
    x = np.zeros((4, 4))
    x[0, 0] = 1
    assert np.allclose(spectral.forward_dft(x), 1)


def test_constant_signal_spectrum():
    X = spectral.forward_dft(np.full(6, 2.5))
    assert X[0] == pytest.approx(15)
    assert np.allclose(X[1:], 0, atol=1e-14)


def test_matches_direct_dft(rng):
    x = rng.standard_normal(8)
    assert np.abs(spectral.forward_dft(x) - direct_dft(x)).max() < 1e-10
    y = rng.standard_normal((3, 4))
    assert np.abs(spectral.forward_dft(y) - direct_dft(y)).max() < 1e-10


def test_inverse_examples():
    assert np.allclose(spectral.inverse_dft(np.ones(5)), [1, 0, 0, 0, 0])
    S = np.zeros(5, dtype=complex)
    S[0] = 5
    assert np.allclose(spectral.inverse_dft(S), 1)


def test_inverse_rejects_asymmetric_spectrum():
    with pytest.raises(NumericalError):
        spectral.inverse_dft(np.array([1, 1j, 0, 0]))
    assert np.iscomplexobj(spectral.inverse_dft(np.array([1, 1j, 0, 0]), real=False))


def test_batch_axes_are_left_alone(rng):
    x = rng.standard_normal((3, 4, 5))
    X = spectral.forward_dft(x, ndim=2)
    for i in range(3):
        assert np.allclose(X[i], np.fft.fft2(x[i]))


@given(grids.flatmap(lambda g: arrays(float, g, elements=finite)))
def test_round_trip(x):
    back = spectral.inverse_dft(spectral.forward_dft(x))
    assert np.abs(back - x).max() <= 1e-12 * max(np.abs(x).max(), 1.0)


@given(grids.flatmap(lambda g: arrays(float, g, elements=finite)))
def test_parseval(x):
    energy = np.sum(x ** 2)
    spec = np.sum(np.abs(spectral.forward_dft(x)) ** 2) / x.size
    assert abs(energy - spec) <= 1e-10 * max(energy, 1e-300)


@given(grids.flatmap(lambda g: arrays(float, g, elements=finite)))
def test_real_spectra_conjugate_symmetric(x):
    assert spectral.is_conjugate_symmetric(spectral.forward_dft(x))


def test_half_spectrum_round_trip(rng):
    x = rng.standard_normal((2, 5, 6))
    assert np.allclose(spectral.inverse_rdft(spectral.forward_rdft(x, 2), (5, 6)), x)


def test_pad_examples():
    assert spectral.pad_filter(np.array([3.0]), (4,)).tolist() == [3, 0, 0, 0]
    with pytest.raises(DimensionError):
        spectral.pad_filter(np.ones((3, 3)), (2, 4))


@given(st.integers(0, 10 ** 6))
def test_pad_crop_adjoint(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((2, 3, 2))
    b = rng.standard_normal((2, 5, 4))
    assert np.array_equal(spectral.crop_filter(spectral.pad_filter(a, (5, 4)), (3, 2)), a)
    lhs = np.sum(spectral.pad_filter(a, (5, 4)) * b)
    rhs = np.sum(a * spectral.crop_filter(b, (3, 2)))
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_circulant_identity_and_shift(rng):
    z = rng.standard_normal(8)
    z_hat = spectral.forward_dft(z)
    assert np.allclose(spectral.circulant_apply(np.ones(8), z_hat), z_hat)
    shift = np.zeros(8)
    shift[1] = 1
    s_hat = spectral.forward_dft(shift)
    ramp = np.exp(-2j * np.pi * np.arange(8) / 8)
    assert np.allclose(s_hat, ramp)
    out = spectral.inverse_dft(spectral.circulant_apply(s_hat, z_hat))
    assert np.allclose(out, np.roll(z, 1))


@given(st.integers(0, 10 ** 6), st.sampled_from([(8,), (4, 4), (8, 8), (2, 3, 4)]))
def test_circulant_matches_direct_convolution(seed, dims):
    rng = np.random.default_rng(seed)
    d = rng.standard_normal(dims)
    z = rng.standard_normal(dims)
    out = spectral.inverse_dft(spectral.circulant_apply(spectral.forward_dft(d),
                                                        spectral.forward_dft(z)))
    assert np.abs(out - direct_circular_convolution(d, z)).max() < 1e-10
    assert np.allclose(spectral.convolve(d, z), out)


@given(st.integers(0, 10 ** 6))
def test_adjoint_identity(seed):
    rng = np.random.default_rng(seed)
    d_hat = spectral.forward_dft(rng.standard_normal((6, 6)))
    u = rng.standard_normal((6, 6))
    v = rng.standard_normal((6, 6))
    Du = spectral.inverse_dft(spectral.circulant_apply(d_hat, spectral.forward_dft(u)))
    Dtv = spectral.inverse_dft(spectral.circulant_apply(d_hat, spectral.forward_dft(v),
                                                        adjoint=True))
    assert abs(np.sum(Du * v) - np.sum(u * Dtv)) < 1e-10
    d = spectral.inverse_dft(d_hat)
    assert np.allclose(spectral.correlate(d, v), Dtv)


def test_product_of_real_spectra_stays_symmetric(rng):
    a = spectral.forward_dft(rng.standard_normal((4, 6)))
    b = spectral.forward_dft(rng.standard_normal((4, 6)))
    assert spectral.is_conjugate_symmetric(spectral.circulant_apply(a, b))
    assert spectral.is_conjugate_symmetric(spectral.circulant_apply(a, b, adjoint=True))
