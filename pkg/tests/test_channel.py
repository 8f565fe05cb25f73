import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctddiff.channel import (
    apply_floor,
    apply_link,
    from_symbols,
    pack_features,
    sample_awgn,
    sample_rayleigh,
    snr_to_noise_variance,
    to_symbols,
    unpack_symbols,
)
from ctddiff.errors import InvalidParameterError, ShapeError


def test_rayleigh_second_moment_and_median():
    h = sample_rayleigh(np.random.default_rng(1), 1.0, size=1_000_000)
    p = np.abs(h) ** 2
    assert 0.99 <= p.mean() <= 1.01
    assert 0.497 <= np.mean(p <= np.log(2)) <= 0.503


def test_rayleigh_scale_two_is_finite_and_positive():
    h = sample_rayleigh(np.random.default_rng(2), 2.0)
    assert isinstance(h, complex)
    assert np.isfinite(abs(h)) and abs(h) > 0


@pytest.mark.parametrize("scale", [0.0, -1.0])
def test_rayleigh_rejects_bad_scale(scale):
    with pytest.raises(InvalidParameterError):
        sample_rayleigh(np.random.default_rng(0), scale)


def test_awgn_moments():
    rng = np.random.default_rng(3)
    assert np.all(sample_awgn(rng, 10, 0.0) == 0)
    w = sample_awgn(rng, 1_000_000, 2.0)
    assert 1.99 <= np.mean(np.abs(w) ** 2) <= 2.01
    w1 = sample_awgn(rng, 1_000_000, 1.0)
    assert 0.885 <= np.mean(np.abs(w1)) <= 0.888


def test_awgn_needs_symbols():
    with pytest.raises(InvalidParameterError):
        sample_awgn(np.random.default_rng(0), 0, 1.0)


def test_apply_link_examples():
    x = np.array([1 + 2j, -3j])
    assert np.array_equal(apply_link(x, 1 + 0j, np.zeros(2)), x)
    assert apply_link(np.array([1 + 0j]), 1j, np.array([0j]))[0] == 1j
    assert apply_link(np.array([2 + 0j]), 0.5, np.array([0.1 + 0j]))[0] == pytest.approx(1.1)
    with pytest.raises(ShapeError):
        apply_link(x, 1.0, np.zeros(3))


def test_floor_keeps_phase():
    h = apply_floor(0.01 * np.exp(1j * 0.7), 0.05)
    assert abs(h) == pytest.approx(0.05)
    assert np.angle(h) == pytest.approx(0.7)
    assert apply_floor(0.3 + 0.4j, 0.05) == 0.3 + 0.4j


def test_snr_conversion():
    assert snr_to_noise_variance(0.0) == 1.0
    assert snr_to_noise_variance(10.0) == pytest.approx(0.1)
    assert snr_to_noise_variance(float("inf")) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 16), st.integers(0, 2**32 - 1))
def test_pack_roundtrip(half, seed):
    f = np.random.default_rng(seed).standard_normal(2 * half)
    assert np.array_equal(unpack_symbols(pack_features(f)), f)
    np.testing.assert_allclose(from_symbols(to_symbols(f)), f, rtol=0, atol=1e-15)


def test_symbol_power_is_feature_power():
    f = np.random.default_rng(0).standard_normal(200_000)
    assert np.mean(np.abs(to_symbols(f)) ** 2) == pytest.approx(np.mean(f**2))


def test_pack_odd_length_rejected():
    with pytest.raises(ShapeError):
        pack_features(np.ones(3))


@settings(max_examples=50, deadline=None)
@given(
    st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
    st.complex_numbers(min_magnitude=0.05, max_magnitude=10, allow_nan=False, allow_infinity=False),
)
def test_apply_link_linear(a, h):
    x = np.random.default_rng(0).standard_normal(4) + 1j
    np.testing.assert_allclose(apply_link(a * x, h, np.zeros(4)), a * apply_link(x, h, np.zeros(4)), rtol=1e-12, atol=1e-12)
