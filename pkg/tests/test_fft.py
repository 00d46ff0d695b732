import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chandiff.tensor import Tensor, fft, fft_1d, fft_2d, fft_tensor, grad, to_complex, to_real

from gradcheck import numeric_grad, relative_error


def direct_dft(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    n = len(x)
    sign = 1.0 if inverse else -1.0
    out = np.zeros(n, dtype=complex)
    for k in range(n):
        for m in range(n):
            out[k] += x[m] * np.exp(sign * 2j * np.pi * k * m / n)
    return out / np.sqrt(n)


def test_impulse_gives_constant():
    x = np.zeros((8, 2))
    x[0, 0] = 1.0
    out = fft_1d(x)
    np.testing.assert_allclose(out[:, 0], np.full(8, 1 / np.sqrt(8)), atol=1e-15)
    np.testing.assert_allclose(out[:, 1], 0.0, atol=1e-15)


@pytest.mark.parametrize("n", [1, 2, 8, 64, 512])
def test_round_trip(n):
    rng = np.random.default_rng(n)
    x = rng.standard_normal((n, 2))
    np.testing.assert_allclose(fft_1d(fft_1d(x), inverse=True), x, atol=1e-10)


def test_length8_vs_direct_dft():
    rng = np.random.default_rng(8)
    z = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    for inverse in (False, True):
        assert np.max(np.abs(fft(z, inverse=inverse) - direct_dft(z, inverse))) < 1e-10


def test_non_power_of_two_rejected():
    with pytest.raises(ValueError, match="power of two"):
        fft(np.ones(6))


def test_2d_impulse_and_oracle():
    plane = np.zeros((4, 8, 2))
    plane[0, 0, 0] = 1.0
    np.testing.assert_allclose(fft_2d(plane)[..., 0], np.full((4, 8), 1 / np.sqrt(32)), atol=1e-15)

    rng = np.random.default_rng(48)
    z = rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8))
    ref = np.array([direct_dft(row) for row in z])
    ref = np.array([direct_dft(col) for col in ref.T]).T
    out = to_complex(fft_2d(to_real(z)))
    assert np.max(np.abs(out - ref)) < 1e-10
    np.testing.assert_allclose(to_complex(fft_2d(fft_2d(to_real(z)), inverse=True)), z, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 9), st.integers(0, 2**31 - 1))
def test_unitarity(log_n, seed):
    n = 2**log_n
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    assert abs(np.linalg.norm(fft(z)) - np.linalg.norm(z)) < 1e-10 * max(1.0, np.linalg.norm(z))


def test_batched_axis_matches_per_row():
    rng = np.random.default_rng(3)
    z = rng.standard_normal((3, 16, 5)) + 1j * rng.standard_normal((3, 16, 5))
    out = fft(z, axis=1, inverse=True)
    for i in range(3):
        for j in range(5):
            np.testing.assert_allclose(out[i, :, j], direct_dft(z[i, :, j], inverse=True), atol=1e-12)


def test_fft_tensor_gradient():
    rng = np.random.default_rng(5)
    x = Tensor(rng.standard_normal((4, 8, 2)), requires_grad=True)
    w = rng.standard_normal((4, 8, 2))

    def f():
        return (fft_tensor(fft_tensor(x, 1), 0, inverse=True) * w).sum()

    (g,) = grad(f(), [x])
    assert relative_error(g, numeric_grad(f, x)) < 1e-7
