"""
DDPM schedule, forward noising, channel-to-timestep matching and the
ancestral reverse chain.

Timesteps are 1-based (``t = 1..T``); arrays are stored 0-based, so the value
for step ``t`` lives at index ``t - 1``. Feature arrays may carry leading batch
axes; the last axis is the feature axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import InvalidParameterError, InvalidStateError, ShapeError

__all__ = [
    "DiffusionSchedule",
    "DiffusionState",
    "TimestepMatch",
    "build_linear_schedule",
    "forward_diffuse",
    "match_channel_timestep",
    "reverse_step",
    "sample_from_channel_state",
]

# eps_fn(x_t, t, z) -> eps_hat
EpsilonPredictor = Callable[[np.ndarray, int, "np.ndarray | None"], np.ndarray]


@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64).reshape(-1)
        if beta.size < 1 or np.any(beta <= 0) or np.any(beta >= 1):
            raise InvalidParameterError("every beta_t must lie in (0, 1)")
        beta.setflags(write=False)
        alpha = 1.0 - beta
        alpha.setflags(write=False)
        # sequential product so that alpha_bar[t] == alpha_bar[t-1] * alpha[t] bitwise
        alpha_bar = np.empty_like(alpha)
        acc = 1.0
        for i, a in enumerate(alpha):
            acc = acc * a
            alpha_bar[i] = acc
        alpha_bar.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "alpha_bar", alpha_bar)

    @property
    def T(self) -> int:
        return int(self.beta.size)

    def check_t(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.T:
            raise InvalidParameterError(f"timestep {t} outside [1, {self.T}]")
        return t

    def alpha_bar_at(self, t: int) -> float:
        return float(self.alpha_bar[self.check_t(t) - 1])

    def alpha_at(self, t: int) -> float:
        return float(self.alpha[self.check_t(t) - 1])

    def beta_at(self, t: int) -> float:
        return float(self.beta[self.check_t(t) - 1])

    def metadata(self) -> dict:
        return {"T": self.T, "beta_start": float(self.beta[0]), "beta_end": float(self.beta[-1])}


@dataclass
class DiffusionState:
    x: np.ndarray
    t: int


class TimestepMatch(NamedTuple):
    t_ch: int
    scale: float
    target_alpha_bar: float
    saturated: bool


def build_linear_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> DiffusionSchedule:
    if T < 2:
        raise InvalidParameterError(f"T must be >= 2, got {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise InvalidParameterError("need 0 < beta_start <= beta_end < 1")
    return DiffusionSchedule(np.linspace(beta_start, beta_end, T))


def forward_diffuse(x0, t: int, eps, schedule: DiffusionSchedule) -> DiffusionState:
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ShapeError(f"x0 shape {x0.shape} != eps shape {eps.shape}")
    ab = schedule.alpha_bar_at(t)
    return DiffusionState(np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps, int(t))


def match_channel_timestep(effective_variance: float, schedule: DiffusionSchedule) -> TimestepMatch:
    """Pick the step whose abar is closest to 1 / (1 + effective_variance).

    Scaling the observation ``x + n`` (Var n = v) by ``sqrt(abar)`` with
    ``abar = 1/(1+v)`` gives exactly ``sqrt(abar) x + sqrt(1-abar) eps``.
    Saturates at ``T`` when the noise exceeds what the chain can represent.
    """
    v = float(effective_variance)
    if not v >= 0:
        raise InvalidParameterError(f"effective variance must be >= 0, got {v}")
    target = 1.0 / (1.0 + v)
    ab = schedule.alpha_bar
    saturated = target < ab[-1]
    idx = int(np.argmin(np.abs(ab - target)))
    return TimestepMatch(idx + 1, float(np.sqrt(ab[idx])), target, bool(saturated))


def reverse_step(
    state: DiffusionState,
    eps_hat,
    schedule: DiffusionSchedule,
    rng: np.random.Generator | None = None,
    z=None,
    noise_scale: float = 1.0,
) -> DiffusionState:
    """One ancestral step x_t -> x_{t-1} with sigma_t^2 = beta_t.

    ``z`` overrides the Gaussian draw; ``noise_scale`` multiplies sigma_t
    (0 gives the deterministic mean path). The noise term is dropped at t = 1.
    """
    t = int(state.t)
    if t < 1:
        raise InvalidStateError(f"cannot step back from t={t}")
    schedule.check_t(t)
    x_t = np.asarray(state.x, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if eps_hat.shape != x_t.shape:
        raise ShapeError(f"eps_hat shape {eps_hat.shape} != state shape {x_t.shape}")
    a = schedule.alpha[t - 1]
    ab = schedule.alpha_bar[t - 1]
    mean = (x_t - ((1.0 - a) / np.sqrt(1.0 - ab)) * eps_hat) / np.sqrt(a)
    if t > 1 and noise_scale != 0.0:
        if z is None:
            if rng is None:
                raise InvalidParameterError("reverse_step needs rng or z when noise is on")
            z = rng.standard_normal(x_t.shape)
        mean = mean + noise_scale * np.sqrt(schedule.beta[t - 1]) * np.asarray(z)
    return DiffusionState(mean, t - 1)


def sample_from_channel_state(
    x_hat,
    effective_variance: float,
    denoiser: EpsilonPredictor,
    z_cond,
    schedule: DiffusionSchedule,
    rng: np.random.Generator | None = None,
    noise_scale: float = 1.0,
    match: TimestepMatch | None = None,
) -> np.ndarray:
    """Start the reverse chain at the observation's matched step and run it to t=0.

    ``x_hat`` is the aggregated observation in the real feature domain (unit
    signal power). Pass ``match`` to override the per-frame timestep choice.
    """
    if match is None:
        match = match_channel_timestep(effective_variance, schedule)
    state = DiffusionState(match.scale * np.asarray(x_hat, dtype=np.float64), match.t_ch)
    while state.t >= 1:
        eps_hat = denoiser(state.x, state.t, z_cond)
        state = reverse_step(state, eps_hat, schedule, rng, noise_scale=noise_scale)
    return state.x
