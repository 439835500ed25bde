import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from loadlens.decomposition import (
    DecomposedSeries,
    DecompositionConfig,
    decompose_multiscale,
    moving_average_trend,
    residual,
)
from loadlens.errors import EvenKernel, KernelTooLarge, LengthMismatch


def brute_trend(series, k):
    """Pad with endpoint copies, then average each centred window with plain loops."""
    half = (k - 1) // 2
    padded = [series[0]] * half + list(series) + [series[-1]] * half
    return np.array([sum(padded[n:n + k]) / k for n in range(len(series))])


def test_constant_fixed_point():
    np.testing.assert_array_equal(moving_average_trend([5.0] * 5, 3), [5.0] * 5)


def test_worked_example():
    np.testing.assert_allclose(moving_average_trend([1, 2, 3, 4, 5], 3), [4 / 3, 2, 3, 4, 14 / 3], rtol=1e-15)
    np.testing.assert_allclose(brute_trend([1, 2, 3, 4, 5], 3), [4 / 3, 2, 3, 4, 14 / 3], rtol=1e-15)


def test_kernel_one_is_identity(rng):
    x = rng.normal(size=37)
    np.testing.assert_array_equal(moving_average_trend(x, 1), x)


def test_even_and_oversized_kernels():
    with pytest.raises(EvenKernel):
        moving_average_trend(np.arange(10.0), 4)
    with pytest.raises(KernelTooLarge):
        moving_average_trend(np.arange(5.0), 7)


def test_matches_oracle_on_random_series(rng):
    for _ in range(100):
        x = rng.normal(size=rng.integers(1, 120)) * 10 ** rng.uniform(-3, 3)
        k = int(rng.choice([k for k in range(1, 32, 2) if k <= x.size]))
        np.testing.assert_allclose(moving_average_trend(x, k), brute_trend(x, k), rtol=1e-12,
                                   atol=1e-12 * np.abs(x).max())


def test_batched_rows_decompose_independently(rng):
    batch = rng.normal(size=(6, 30))
    tr = moving_average_trend(batch, 7)
    for row, out in zip(batch, tr):
        np.testing.assert_allclose(out, brute_trend(row, 7), rtol=1e-12, atol=1e-12)


class TestResidual:
    def test_examples(self):
        x = np.array([1.0, 2, 3, 4, 5])
        np.testing.assert_array_equal(residual(x, x), np.zeros(5))
        np.testing.assert_allclose(residual(x, [4 / 3, 2, 3, 4, 14 / 3]), [-1 / 3, 0, 0, 0, 1 / 3], atol=1e-15)
        np.testing.assert_array_equal(residual(x, np.zeros(5)), x)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            residual([1.0, 2.0], [1.0])


class TestMultiscale:
    def test_single_kernel(self):
        d = decompose_multiscale([1, 2, 3, 4, 5], DecompositionConfig((3,)))
        assert d.kernels == (3,)
        np.testing.assert_allclose(d.trends[0], [4 / 3, 2, 3, 4, 14 / 3])
        np.testing.assert_allclose(d.residuals[0], [-1 / 3, 0, 0, 0, 1 / 3], atol=1e-15)

    def test_kernel_one(self, rng):
        x = rng.normal(size=20)
        d = decompose_multiscale(x, (1,))
        np.testing.assert_array_equal(d.trends[0], x)
        np.testing.assert_array_equal(d.residuals[0], 0.0)

    def test_two_kernels_are_independent(self):
        x = np.array([1.0, 2, 3, 4, 5])
        d = decompose_multiscale(x, (5, 3))
        assert d.kernels == (3, 5)
        # k=5 by hand: pad [1,1,1,2,3,4,5,5,5]
        np.testing.assert_allclose(d.trends[1], [8 / 5, 11 / 5, 3, 19 / 5, 22 / 5])
        np.testing.assert_allclose(d.trends[0], brute_trend(x, 3))
        for t, r in zip(d.trends, d.residuals):
            np.testing.assert_allclose(t + r, x, rtol=1e-15)

    def test_config_validation(self):
        with pytest.raises(EvenKernel):
            DecompositionConfig((3, 4))
        with pytest.raises(ValueError):
            DecompositionConfig(())

    def test_json_round_trip(self, tmp_path, rng):
        d = decompose_multiscale(rng.normal(size=15), (3, 5))
        d.dump(tmp_path / "d.json")
        import json

        back = DecomposedSeries.from_dict(json.loads((tmp_path / "d.json").read_text()))
        assert back.kernels == d.kernels
        np.testing.assert_array_equal(back.trends, d.trends)
        np.testing.assert_array_equal(back.residuals, d.residuals)


series = st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=200).map(np.array)


@settings(max_examples=300, deadline=None)
@given(series, st.integers(0, 15))
def test_reconstruction_and_length(x, half):
    k = min(2 * half + 1, x.size if x.size % 2 else x.size - 1)
    d = decompose_multiscale(x, (k,))
    assert d.trends.shape == d.residuals.shape == (1, x.size)
    np.testing.assert_allclose(d.trends[0] + d.residuals[0], x, rtol=1e-9, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 80), st.integers(0, 10), st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**31))
def test_linearity(n, half, a, b, seed):
    k = min(2 * half + 1, n if n % 2 else n - 1)
    g = np.random.default_rng(seed)
    x, y = g.normal(size=n), g.normal(size=n)
    lhs = moving_average_trend(a * x + b * y, k)
    rhs = a * moving_average_trend(x, k) + b * moving_average_trend(y, k)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(-1e3, 1e3), st.integers(1, 60))
def test_constant_series_has_zero_residual(c, n):
    x = np.full(n, c)
    for k in range(1, n + 1, 2):
        np.testing.assert_allclose(decompose_multiscale(x, (k,)).residuals[0], 0.0, atol=1e-9 * max(1, abs(c)))
