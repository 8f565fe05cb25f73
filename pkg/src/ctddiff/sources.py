"""
Synthetic data sources.

:class:`GaussianMixtureSource` is the feature-domain model the analytic
denoiser is exact for. The frame sources wrap a mixture with an image view so
that image metrics (PSNR, MS-SSIM) can be computed on reconstructions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.special import logsumexp

from .errors import InvalidParameterError, ShapeError

__all__ = [
    "GaussianMixtureSource",
    "single_gaussian",
    "two_class_source",
    "random_mixture",
    "Frame",
    "FeatureFrameSource",
    "TextureFrameSource",
]


@dataclass(frozen=True, eq=False)
class GaussianMixtureSource:
    """Mixture of isotropic Gaussians sharing the variance ``sigma0_sq``."""

    means: np.ndarray
    weights: np.ndarray
    sigma0_sq: float

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if weights.shape[0] != means.shape[0]:
            raise ShapeError("one weight per component required")
        if np.any(weights <= 0) or not np.isclose(weights.sum(), 1.0, atol=1e-12):
            raise InvalidParameterError("weights must be positive and sum to 1")
        if self.sigma0_sq < 0:
            raise InvalidParameterError("sigma0_sq must be >= 0")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "sigma0_sq", float(self.sigma0_sq))

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def num_components(self) -> int:
        return self.means.shape[0]

    @property
    def power(self) -> float:
        """Average per-feature second moment."""
        return float(self.weights @ np.mean(self.means**2, axis=1) + self.sigma0_sq)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Return ``(x, labels)``; shapes ``(dim,)`` / int when size is None."""
        n = 1 if size is None else size
        labels = rng.choice(self.num_components, size=n, p=self.weights)
        x = self.means[labels] + np.sqrt(self.sigma0_sq) * rng.standard_normal((n, self.dim))
        if size is None:
            return x[0], int(labels[0])
        return x, labels

    def log_responsibilities(self, x, extra_variance: float = 0.0, log_prior=None) -> np.ndarray:
        """Log posterior over components for observations ``x`` with added
        isotropic noise of variance ``extra_variance``."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ShapeError(f"expected feature length {self.dim}, got {x.shape[-1]}")
        var = self.sigma0_sq + extra_variance
        if log_prior is None:
            log_prior = np.log(self.weights)
        d2 = np.sum((x[..., None, :] - self.means) ** 2, axis=-1)
        if var == 0:
            # degenerate: point masses, pick the nearest mean(s)
            logits = np.where(d2 == d2.min(axis=-1, keepdims=True), 0.0, -np.inf) + log_prior
        else:
            logits = log_prior - 0.5 * d2 / var
        return logits - logsumexp(logits, axis=-1, keepdims=True)


def single_gaussian(dim: int, sigma0_sq: float = 1.0) -> GaussianMixtureSource:
    return GaussianMixtureSource(np.zeros((1, dim)), np.ones(1), sigma0_sq)


def two_class_source(dim: int, separation: float = 6.0) -> GaussianMixtureSource:
    """Equal-weight pair of means ``+-m u`` with ``|mu_1 - mu_2| = separation * sigma0``
    and unit average feature power."""
    sigma0_sq = 1.0 / (1.0 + separation**2 / (4.0 * dim))
    m = 0.5 * separation * np.sqrt(sigma0_sq)
    u = np.ones(dim) / np.sqrt(dim)
    return GaussianMixtureSource(np.stack([m * u, -m * u]), np.array([0.5, 0.5]), sigma0_sq)


def random_mixture(
    dim: int, num_classes: int, sigma0_sq: float, rng: np.random.Generator
) -> GaussianMixtureSource:
    """Random class means scaled so the mixture has unit average feature power."""
    if not 0 <= sigma0_sq < 1:
        raise InvalidParameterError("sigma0_sq must lie in [0, 1) for unit power")
    means = rng.standard_normal((num_classes, dim))
    means *= np.sqrt((1.0 - sigma0_sq) / np.mean(means**2))
    return GaussianMixtureSource(means, np.full(num_classes, 1.0 / num_classes), sigma0_sq)


@dataclass
class Frame:
    image: np.ndarray  # (C, H, W), nominally in [0, 1]
    features: np.ndarray  # (n,)
    label: int


class FeatureFrameSource:
    """Features are transmitted as-is; the image view is a ``(1, 1, n)`` strip
    ``0.5 + features * pixel_scale``."""

    max_value = 1.0

    def __init__(self, mixture: GaussianMixtureSource, pixel_scale: float = 0.125):
        self.mixture = mixture
        self.pixel_scale = pixel_scale

    @property
    def image_shape(self):
        return (1, 1, self.mixture.dim)

    def decode(self, features) -> np.ndarray:
        return (0.5 + self.pixel_scale * np.asarray(features)).reshape(self.image_shape)

    def sample(self, rng: np.random.Generator) -> Frame:
        x, label = self.mixture.sample(rng)
        return Frame(self.decode(x), x, label)


class TextureFrameSource:
    """Smoothed-noise texture frames behind a lossy pooling encoder.

    Each class owns a smooth template on the pooled grid. A frame is the
    template plus i.i.d. within-class variation, upsampled by ``pool`` and
    perturbed with per-pixel detail. The encoder average-pools the frame, so
    the transmitted features follow an isotropic Gaussian mixture exactly, and
    the detail it discards sets a reconstruction floor in the image domain.
    """

    max_value = 1.0

    def __init__(
        self,
        size: int = 32,
        channels: int = 1,
        pool: int = 2,
        num_classes: int = 4,
        within_class_var: float = 0.3,
        detail_std: float = 0.02,
        pixel_scale: float = 0.12,
        smoothing: float = 1.5,
        seed: int = 1234,
    ):
        if size % pool:
            raise InvalidParameterError("size must be a multiple of pool")
        self.size, self.channels, self.pool = size, channels, pool
        self.detail_std = detail_std
        self.pixel_scale = pixel_scale
        g = size // pool
        self.grid_shape = (channels, g, g)
        self.within_class_var = within_class_var
        pooled_detail_var = detail_std**2 / (pool * pool * pixel_scale**2)
        sigma0_sq = within_class_var + pooled_detail_var
        if not sigma0_sq < 1:
            raise InvalidParameterError("within-class plus detail variance must stay below 1")
        rng = np.random.default_rng(seed)
        templates = []
        for _ in range(num_classes):
            t = gaussian_filter(rng.standard_normal(self.grid_shape), sigma=(0, smoothing, smoothing), mode="wrap")
            t = (t - t.mean()) / t.std()
            templates.append(t.reshape(-1) * np.sqrt(1.0 - sigma0_sq))
        self.mixture = GaussianMixtureSource(
            np.stack(templates), np.full(num_classes, 1.0 / num_classes), sigma0_sq
        )

    @property
    def image_shape(self):
        return (self.channels, self.size, self.size)

    def encode(self, image) -> np.ndarray:
        c, g = self.channels, self.size // self.pool
        img = np.asarray(image, dtype=np.float64) - 0.5
        pooled = img.reshape(c, g, self.pool, g, self.pool).mean(axis=(2, 4))
        return pooled.reshape(-1) / self.pixel_scale

    def decode(self, features) -> np.ndarray:
        grid = np.asarray(features, dtype=np.float64).reshape(self.grid_shape)
        up = np.repeat(np.repeat(grid, self.pool, axis=1), self.pool, axis=2)
        return 0.5 + self.pixel_scale * up

    def sample(self, rng: np.random.Generator) -> Frame:
        label = int(rng.choice(self.mixture.num_components, p=self.mixture.weights))
        f = self.mixture.means[label] + np.sqrt(self.within_class_var) * rng.standard_normal(self.mixture.dim)
        image = self.decode(f) + self.detail_std * rng.standard_normal(self.image_shape)
        return Frame(image, self.encode(image), label)
