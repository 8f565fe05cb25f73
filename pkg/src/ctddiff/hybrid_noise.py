"""Hybrid training noise: normalized channel noise blended with Gaussian noise."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .channel import unpack_symbols
from .errors import InvalidParameterError, ShapeError
from .protocol import CooperativeLinkSet, aggregate, receive_copies

__all__ = [
    "LambdaSchedule",
    "HybridNoiseSpec",
    "ChannelNoise",
    "lambda_at",
    "normalize_channel_noise",
    "mix_noise",
    "sample_hybrid_noise",
]

DEFAULT_LAMBDA0 = 0.8


@dataclass(frozen=True)
class LambdaSchedule:
    """Linear decay lambda_t = lambda0 * (1 - t/T)."""

    lambda0: float = DEFAULT_LAMBDA0
    T: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.lambda0 <= 1.0:
            raise InvalidParameterError(f"lambda0 must be in [0, 1], got {self.lambda0}")
        if self.T < 1:
            raise InvalidParameterError("T must be >= 1")

    def at(self, t):
        return lambda_at(t, self)


@dataclass(frozen=True)
class HybridNoiseSpec:
    lambda_schedule: LambdaSchedule
    # rng -> one floored link set per call
    channel_source: Callable[[np.random.Generator], CooperativeLinkSet]


class ChannelNoise(NamedTuple):
    values: np.ndarray
    degenerate: bool


def lambda_at(t, sched: LambdaSchedule):
    """Scalar or vectorized over integer ``t`` in [1, T]."""
    t_arr = np.asarray(t)
    if np.any(t_arr < 1) or np.any(t_arr > sched.T):
        raise InvalidParameterError(f"timestep outside [1, {sched.T}]")
    lam = sched.lambda0 * (1.0 - t_arr / sched.T)
    return float(lam) if lam.ndim == 0 else lam


def normalize_channel_noise(links: CooperativeLinkSet, rng: np.random.Generator, n: int) -> ChannelNoise:
    """One aggregated-noise realization over ``n`` real components, scaled to
    unit variance per component using the link set's exact effective variance."""
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    n_sym = (n + 1) // 2
    zero = np.zeros(n_sym, dtype=np.complex128)
    obs = aggregate(receive_copies(zero, links, rng), links)
    real = unpack_symbols(obs.x_hat)[:n]
    if obs.effective_variance == 0:
        return ChannelNoise(np.zeros(n), True)
    return ChannelNoise(real / np.sqrt(obs.effective_variance / 2.0), False)


def mix_noise(eps_ch, eps_df, lambda_t):
    """lambda * eps_ch + sqrt(1 - lambda^2) * eps_df; ``lambda_t`` may be
    per-row for batched inputs."""
    eps_ch = np.asarray(eps_ch, dtype=np.float64)
    eps_df = np.asarray(eps_df, dtype=np.float64)
    if eps_ch.shape != eps_df.shape:
        raise ShapeError(f"{eps_ch.shape} != {eps_df.shape}")
    lam = np.asarray(lambda_t, dtype=np.float64)
    if np.any(lam < 0) or np.any(lam > 1):
        raise InvalidParameterError("lambda must lie in [0, 1]")
    if lam.ndim == 1:
        lam = lam[:, None]
    return lam * eps_ch + np.sqrt(1.0 - lam * lam) * eps_df


def sample_hybrid_noise(spec: HybridNoiseSpec, t: int, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw a fresh link set, its normalized noise, and blend at step ``t``."""
    lam = lambda_at(t, spec.lambda_schedule)
    eps_ch = normalize_channel_noise(spec.channel_source(rng), rng, n).values
    eps_df = rng.standard_normal(n)
    return mix_noise(eps_ch, eps_df, lam)
