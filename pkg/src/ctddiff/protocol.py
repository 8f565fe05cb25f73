"""
Cooperative TDMA transmission: source pre-equalization, relay
normalize-and-forward, base-station aggregation and the resulting effective
noise variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import exp1

from .channel import apply_floor, apply_link, sample_awgn, sample_rayleigh
from .errors import InvalidParameterError, ShapeError

__all__ = [
    "DEFAULT_H_FLOOR",
    "TdmaSchedule",
    "CooperativeLinkSet",
    "AggregatedObservation",
    "draw_link_set",
    "pre_equalize_source",
    "relay_forward",
    "receive_copies",
    "aggregate",
    "effective_noise_variance",
    "expected_effective_variance",
]

DEFAULT_H_FLOOR = 0.05


@dataclass(frozen=True)
class TdmaSchedule:
    """One TDMA slot: the active user and the idle users that overhear it."""

    num_users: int
    active_user: int
    idle_users: tuple = ()

    def __post_init__(self):
        if self.num_users < 1:
            raise InvalidParameterError("num_users must be >= 1")
        if not 0 <= self.active_user < self.num_users:
            raise InvalidParameterError(f"active user {self.active_user} out of range")
        idle = tuple(int(i) for i in self.idle_users)
        if len(set(idle)) != len(idle):
            raise InvalidParameterError("duplicate idle users")
        if self.active_user in idle:
            raise InvalidParameterError("active user cannot be idle in its own slot")
        if any(not 0 <= i < self.num_users for i in idle):
            raise InvalidParameterError("idle user index out of range")
        object.__setattr__(self, "idle_users", idle)

    @classmethod
    def slot(cls, num_users: int, active_user: int, num_relays: int | None = None):
        """All other users overhear, or the first ``num_relays`` of them in cyclic order."""
        others = [(active_user + j) % num_users for j in range(1, num_users)]
        if num_relays is not None:
            if not 0 <= num_relays <= num_users - 1:
                raise InvalidParameterError(
                    f"num_relays must be in [0, {num_users - 1}], got {num_relays}"
                )
            others = others[:num_relays]
        return cls(num_users, active_user, tuple(others))

    @property
    def num_relays(self) -> int:
        return len(self.idle_users)


@dataclass(frozen=True)
class CooperativeLinkSet:
    """Channel realization for one slot.

    Relay-indexed arrays are aligned with ``relays``. Noise entries are total
    complex variances.
    """

    h_direct: complex
    relays: tuple = ()
    h_src_to_relay: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    h_relay_to_bs: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    relay_noise: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bs_noise: float = 0.0
    h_floor: float = DEFAULT_H_FLOOR

    def __post_init__(self):
        relays = tuple(int(r) for r in self.relays)
        object.__setattr__(self, "relays", relays)
        for name, dtype in (
            ("h_src_to_relay", np.complex128),
            ("h_relay_to_bs", np.complex128),
            ("relay_noise", np.float64),
        ):
            arr = np.asarray(getattr(self, name), dtype=dtype).reshape(-1)
            if arr.shape != (len(relays),):
                raise ShapeError(f"{name} must have one entry per relay ({len(relays)})")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "h_direct", complex(self.h_direct))
        object.__setattr__(self, "bs_noise", float(self.bs_noise))
        if self.bs_noise < 0 or np.any(self.relay_noise < 0):
            raise InvalidParameterError("noise variances must be non-negative")
        # tiny slack for the magnitude round-trip inside apply_floor
        floor = self.h_floor * (1 - 1e-12)
        if abs(self.h_direct) < floor or np.any(np.abs(self.h_src_to_relay) < floor) or np.any(
            np.abs(self.h_relay_to_bs) < floor
        ):
            raise InvalidParameterError("channel magnitude below h_floor; apply the floor first")

    @property
    def num_relays(self) -> int:
        return len(self.relays)

    def without_cooperation(self) -> "CooperativeLinkSet":
        return CooperativeLinkSet(self.h_direct, bs_noise=self.bs_noise, h_floor=self.h_floor)


@dataclass
class AggregatedObservation:
    x_hat: np.ndarray
    effective_variance: float
    num_copies: int


def draw_link_set(
    rng: np.random.Generator,
    schedule: TdmaSchedule,
    noise_variance: float,
    channel: str = "rayleigh",
    scale: float = 1.0,
    h_floor: float = DEFAULT_H_FLOOR,
    relay_rngs: Sequence[np.random.Generator] | None = None,
) -> CooperativeLinkSet:
    """Sample one slot's links. Every link carries the same noise variance.

    ``relay_rngs`` (one per idle user) decouples each relay's draws from the
    direct link, so adding relays never perturbs existing ones.
    """
    if channel not in ("rayleigh", "awgn"):
        raise InvalidParameterError(f"unknown channel {channel!r}")
    R = schedule.num_relays
    if relay_rngs is None:
        relay_rngs = [rng] * R
    elif len(relay_rngs) < R:
        raise InvalidParameterError("need one random stream per relay")

    def draw(g):
        if channel == "awgn":
            return 1.0 + 0j
        return apply_floor(sample_rayleigh(g, scale), h_floor)

    h0 = draw(rng)
    h_sr = np.empty(R, complex)
    h_rb = np.empty(R, complex)
    for j in range(R):
        h_sr[j] = draw(relay_rngs[j])
        h_rb[j] = draw(relay_rngs[j])
    return CooperativeLinkSet(
        h_direct=h0,
        relays=schedule.idle_users,
        h_src_to_relay=h_sr,
        h_relay_to_bs=h_rb,
        relay_noise=np.full(R, noise_variance),
        bs_noise=noise_variance,
        h_floor=h_floor,
    )


def pre_equalize_source(x: np.ndarray, h_direct: complex) -> np.ndarray:
    return np.asarray(x) / h_direct


def relay_forward(y_received, h_src_to_relay, h_direct, h_relay_to_bs) -> np.ndarray:
    """Undo the first hop and pre-equalize the second: (1/h_i0)(h_k0/h_ki) y."""
    return (1.0 / h_relay_to_bs) * (h_direct / h_src_to_relay) * np.asarray(y_received)


def receive_copies(
    x: np.ndarray,
    links: CooperativeLinkSet,
    rng: np.random.Generator,
    relay_rngs: Sequence[np.random.Generator] | None = None,
) -> list[np.ndarray]:
    """Simulate the direct copy and every relayed copy seen at the base station.

    The direct copy is ``x + N_0``; relay ``i`` contributes
    ``x + (h_k0/h_ki) N_i + N_0^(i)``.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    s = pre_equalize_source(x, links.h_direct)
    copies = [apply_link(s, links.h_direct, sample_awgn(rng, n, links.bs_noise))]
    if relay_rngs is None:
        relay_rngs = [rng] * links.num_relays
    for j in range(links.num_relays):
        g = relay_rngs[j]
        h_sr, h_rb = links.h_src_to_relay[j], links.h_relay_to_bs[j]
        overheard = apply_link(s, h_sr, sample_awgn(g, n, links.relay_noise[j]))
        forwarded = relay_forward(overheard, h_sr, links.h_direct, h_rb)
        copies.append(apply_link(forwarded, h_rb, sample_awgn(g, n, links.bs_noise)))
    return copies


def aggregate(copies: Sequence[np.ndarray], links: CooperativeLinkSet | None = None) -> AggregatedObservation:
    """Direct signal aggregation: the mean of all aligned copies.

    With ``links`` the effective variance is exact; without, it is estimated
    from the spread between copies assuming equal per-copy noise (NaN for a
    single copy).
    """
    if len(copies) == 0:
        raise InvalidParameterError("aggregate needs at least one copy")
    stack = np.stack([np.asarray(c, dtype=np.complex128) for c in copies])
    m = stack.shape[0]
    x_hat = stack.sum(axis=0) / m
    if links is not None:
        if links.num_relays + 1 != m:
            raise ShapeError(f"{m} copies for a link set with {links.num_relays} relays")
        var = effective_noise_variance(links)
    elif m > 1:
        spread = np.sum(np.abs(stack - x_hat) ** 2, axis=0) / (m - 1)
        var = float(np.mean(spread) / m)
    else:
        var = float("nan")
    return AggregatedObservation(x_hat=x_hat, effective_variance=var, num_copies=m)


def effective_noise_variance(links: CooperativeLinkSet) -> float:
    """Per-symbol variance of the aggregated noise, conditional on the links."""
    R = links.num_relays
    gain = np.abs(links.h_direct) ** 2 / np.abs(links.h_src_to_relay) ** 2
    total = links.bs_noise + np.sum(gain * links.relay_noise + links.bs_noise)
    return float(total / (R + 1) ** 2)


def _floored_exp_moments(scale: float, h_floor: float) -> tuple[float, float]:
    # |h|^2 ~ Exp(mean=scale^2), clamped below at h_floor^2; returns E[u], E[1/u]
    s2, f2 = scale**2, h_floor**2
    if f2 == 0:
        return s2, float("inf")
    a = f2 / s2
    mean = f2 * (1 - np.exp(-a)) + (f2 + s2) * np.exp(-a)
    inv = (1 - np.exp(-a)) / f2 + exp1(a) / s2
    return float(mean), float(inv)


def expected_effective_variance(
    num_relays: int,
    noise_variance: float,
    channel: str = "rayleigh",
    scale: float = 1.0,
    h_floor: float = DEFAULT_H_FLOOR,
) -> float:
    """Average of :func:`effective_noise_variance` over the floored fading law."""
    R = num_relays
    if channel == "awgn":
        ratio = 1.0
    else:
        m, inv = _floored_exp_moments(scale, h_floor)
        ratio = m * inv
    return float(noise_variance * (1 + R * (ratio + 1)) / (R + 1) ** 2)
