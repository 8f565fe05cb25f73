"""
Complex-baseband channel primitives.

Signals are ``complex128`` numpy arrays. Noise variances are *total* complex
variances, i.e. each of the real and imaginary parts carries ``variance / 2``.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidParameterError, ShapeError

__all__ = [
    "sample_rayleigh",
    "apply_floor",
    "sample_awgn",
    "apply_link",
    "pack_features",
    "unpack_symbols",
    "to_symbols",
    "from_symbols",
    "snr_to_noise_variance",
]


def sample_rayleigh(rng: np.random.Generator, scale: float = 1.0, size=None):
    """Draw circularly-symmetric complex Gaussian coefficients with E|h|^2 = scale^2.

    Returns a Python complex when ``size`` is None, else an array.
    """
    if not scale > 0:
        raise InvalidParameterError(f"Rayleigh scale must be positive, got {scale}")
    std = scale / np.sqrt(2.0)
    re = rng.standard_normal(size)
    im = rng.standard_normal(size)
    h = std * (re + 1j * im)
    if size is None:
        return complex(h)
    return h


def apply_floor(h, h_floor: float):
    """Clamp |h| to at least ``h_floor`` keeping the phase. Exact zeros map to ``h_floor``."""
    if h_floor < 0:
        raise InvalidParameterError("h_floor must be non-negative")
    h_arr = np.asarray(h, dtype=np.complex128)
    mag = np.abs(h_arr)
    low = mag < h_floor
    if np.any(low):
        phase = np.where(mag > 0, h_arr / np.where(mag > 0, mag, 1.0), 1.0 + 0j)
        h_arr = np.where(low, h_floor * phase, h_arr)
    if np.ndim(h) == 0:
        return complex(h_arr)
    return h_arr


def sample_awgn(rng: np.random.Generator, n: int, variance: float) -> np.ndarray:
    if n < 1:
        raise InvalidParameterError(f"noise length must be >= 1, got {n}")
    if variance < 0:
        raise InvalidParameterError(f"noise variance must be >= 0, got {variance}")
    std = np.sqrt(variance / 2.0)
    return std * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def apply_link(x: np.ndarray, h: complex, noise: np.ndarray) -> np.ndarray:
    """Point-to-point flat-fading link: ``h * x + noise``."""
    x = np.asarray(x)
    noise = np.asarray(noise)
    if x.shape != noise.shape:
        raise ShapeError(f"signal shape {x.shape} != noise shape {noise.shape}")
    return h * x + noise


def pack_features(features: np.ndarray) -> np.ndarray:
    """Pack real features two per complex symbol: (f0 + i f1, f2 + i f3, ...)."""
    f = np.asarray(features, dtype=np.float64)
    if f.shape[-1] % 2:
        raise ShapeError(f"feature length must be even, got {f.shape[-1]}")
    return f[..., 0::2] + 1j * f[..., 1::2]


def unpack_symbols(symbols: np.ndarray) -> np.ndarray:
    s = np.asarray(symbols, dtype=np.complex128)
    out = np.empty(s.shape[:-1] + (2 * s.shape[-1],), dtype=np.float64)
    out[..., 0::2] = s.real
    out[..., 1::2] = s.imag
    return out


def to_symbols(features: np.ndarray) -> np.ndarray:
    """Unit-power-per-real-feature in, unit-power-per-complex-symbol out."""
    return pack_features(features) / np.sqrt(2.0)


def from_symbols(symbols: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_symbols`.

    A complex noise of total variance ``v`` on the symbols becomes a real
    noise of variance ``v`` per feature.
    """
    return unpack_symbols(symbols) * np.sqrt(2.0)


def snr_to_noise_variance(snr_db: float, signal_power: float = 1.0) -> float:
    if np.isposinf(snr_db):
        return 0.0
    return float(signal_power / 10.0 ** (snr_db / 10.0))
