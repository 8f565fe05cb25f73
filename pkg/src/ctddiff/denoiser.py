"""
Conditional noise predictors.

* :func:`analytic_epsilon` -- the closed-form posterior-mean predictor for a
  Gaussian-mixture source. It is the test oracle for everything trained.
* :func:`mlp_epsilon` -- a small two-hidden-layer SiLU network with
  hand-written backprop, trained by :func:`train_hybrid` on hybrid noise.
* :func:`extract_semantic` -- the toy semantic encoder: class posteriors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diffusion import DiffusionSchedule
from .errors import InvalidParameterError, ShapeError, TrainingDivergedError
from .hybrid_noise import LambdaSchedule, lambda_at, mix_noise, normalize_channel_noise
from .sources import GaussianMixtureSource

__all__ = [
    "extract_semantic",
    "analytic_epsilon",
    "AnalyticDenoiser",
    "MlpDenoiserParams",
    "MlpDenoiser",
    "time_embedding",
    "mlp_epsilon",
    "loss_conditional",
    "loss_and_grad",
    "TrainingConfig",
    "TrainingResult",
    "train_hybrid",
    "noise_prediction_mse",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
]

CHECKPOINT_VERSION = 1
TIME_EMBED_DIM = 16


def extract_semantic(x, source: GaussianMixtureSource, noise_variance: float = 0.0) -> np.ndarray:
    """Class-posterior embedding of ``x``.

    ``noise_variance`` widens each component to account for channel noise on
    ``x``; leave it at 0 for clean features.
    """
    return np.exp(source.log_responsibilities(x, extra_variance=noise_variance))


def analytic_epsilon(x_t, t: int, z, source: GaussianMixtureSource, schedule: DiffusionSchedule) -> np.ndarray:
    """E[eps | x_t, z] for the mixture with component priors replaced by ``z``.

    ``z=None`` falls back to the mixture weights (unconditional predictor).
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape[-1] != source.dim:
        raise ShapeError(f"expected feature length {source.dim}, got {x_t.shape[-1]}")
    ab = schedule.alpha_bar[schedule.check_t(t) - 1]
    var = ab * source.sigma0_sq + (1.0 - ab)
    sab = math.sqrt(ab)
    if source.num_components == 1:
        mean = sab * source.means[0]
    else:
        if z is None:
            log_prior = np.log(source.weights)
        else:
            with np.errstate(divide="ignore"):
                log_prior = np.log(np.asarray(z, dtype=np.float64))
        d2 = np.sum((x_t[..., None, :] - sab * source.means) ** 2, axis=-1)
        logits = log_prior - 0.5 * d2 / var
        logits = logits - logits.max(axis=-1, keepdims=True)
        w = np.exp(logits)
        w /= w.sum(axis=-1, keepdims=True)
        mean = sab * (w @ source.means)
    return math.sqrt(1.0 - ab) * (x_t - mean) / var


class AnalyticDenoiser:
    """Callable ``(x_t, t, z) -> eps_hat`` bound to a source and schedule."""

    def __init__(self, source: GaussianMixtureSource, schedule: DiffusionSchedule):
        self.source = source
        self.schedule = schedule

    def __call__(self, x_t, t, z=None):
        return analytic_epsilon(x_t, t, z, self.source, self.schedule)


# --------------------------------------------------------------------- MLP


def time_embedding(t, dim: int = TIME_EMBED_DIM) -> np.ndarray:
    """Sinusoidal encoding; ``t`` scalar or 1-D array of steps."""
    t = np.asarray(t, dtype=np.float64)
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    ang = t[..., None] * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


_PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass
class MlpDenoiserParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    x_dim: int
    cond_dim: int
    time_dim: int = TIME_EMBED_DIM

    def __post_init__(self):
        in_dim = self.x_dim + self.time_dim + self.cond_dim
        hidden = self.W1.shape[1] if np.ndim(self.W1) == 2 else -1
        expected = {
            "W1": (in_dim, hidden),
            "b1": (hidden,),
            "W2": (hidden, hidden),
            "b2": (hidden,),
            "W3": (hidden, self.x_dim),
            "b3": (self.x_dim,),
        }
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ShapeError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise InvalidParameterError(f"{name} has non-finite entries")
            setattr(self, name, arr)

    @classmethod
    def init(cls, x_dim, cond_dim, hidden=128, rng=None, time_dim=TIME_EMBED_DIM):
        """Variance-scaled uniform weights (limit sqrt(3 / fan_in)), zero biases."""
        rng = np.random.default_rng(0) if rng is None else rng
        in_dim = x_dim + time_dim + cond_dim

        def u(fan_in, fan_out):
            lim = math.sqrt(3.0 / fan_in)
            return rng.uniform(-lim, lim, size=(fan_in, fan_out))

        return cls(
            W1=u(in_dim, hidden), b1=np.zeros(hidden),
            W2=u(hidden, hidden), b2=np.zeros(hidden),
            W3=u(hidden, x_dim), b3=np.zeros(x_dim),
            x_dim=x_dim, cond_dim=cond_dim, time_dim=time_dim,
        )  # fmt: skip

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    def arrays(self) -> dict:
        return {k: getattr(self, k) for k in _PARAM_NAMES}

    def replace(self, **arrays) -> "MlpDenoiserParams":
        kw = self.arrays()
        kw.update(arrays)
        return MlpDenoiserParams(**kw, x_dim=self.x_dim, cond_dim=self.cond_dim, time_dim=self.time_dim)


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _net_input(x_t, t, z, params: MlpDenoiserParams) -> np.ndarray:
    x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
    B = x_t.shape[0]
    if x_t.shape[1] != params.x_dim:
        raise ShapeError(f"x_t has {x_t.shape[1]} features, network expects {params.x_dim}")
    t = np.broadcast_to(np.asarray(t), (B,))
    parts = [x_t, time_embedding(t, params.time_dim)]
    if params.cond_dim:
        if z is None:
            raise ShapeError("conditional network needs z")
        z = np.broadcast_to(np.atleast_2d(np.asarray(z, dtype=np.float64)), (B, params.cond_dim))
        parts.append(z)
    return np.concatenate(parts, axis=1)


def _forward(inp, params: MlpDenoiserParams):
    a1 = inp @ params.W1 + params.b1
    s1 = _sigmoid(a1)
    h1 = a1 * s1
    a2 = h1 @ params.W2 + params.b2
    s2 = _sigmoid(a2)
    h2 = a2 * s2
    out = h2 @ params.W3 + params.b3
    return out, (inp, a1, s1, h1, a2, s2, h2)


def mlp_epsilon(x_t, t, z, params: MlpDenoiserParams) -> np.ndarray:
    squeeze = np.ndim(x_t) == 1
    out, _ = _forward(_net_input(x_t, t, z, params), params)
    return out[0] if squeeze else out


class MlpDenoiser:
    def __init__(self, params: MlpDenoiserParams):
        self.params = params

    def __call__(self, x_t, t, z=None):
        return mlp_epsilon(x_t, t, z, self.params)


def loss_and_grad(params: MlpDenoiserParams, inp, target):
    """Mean over rows of the squared error norm, and its gradient per parameter."""
    out, (inp, a1, s1, h1, a2, s2, h2) = _forward(inp, params)
    B = out.shape[0]
    diff = out - target
    loss = float(np.sum(diff * diff) / B)
    d_out = 2.0 * diff / B
    g = {"W3": h2.T @ d_out, "b3": d_out.sum(axis=0)}
    d_h2 = d_out @ params.W3.T
    d_a2 = d_h2 * (s2 * (1.0 + a2 * (1.0 - s2)))
    g["W2"] = h1.T @ d_a2
    g["b2"] = d_a2.sum(axis=0)
    d_h1 = d_a2 @ params.W2.T
    d_a1 = d_h1 * (s1 * (1.0 + a1 * (1.0 - s1)))
    g["W1"] = inp.T @ d_a1
    g["b1"] = d_a1.sum(axis=0)
    return loss, g


def _diffuse_batch(x0, t, eps, schedule):
    ab = schedule.alpha_bar[np.asarray(t) - 1][:, None]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def loss_conditional(x0, t, eps, z, params: MlpDenoiserParams, schedule: DiffusionSchedule) -> float:
    """Batch mean of ||eps - eps_theta(x_t, t, z)||^2 with x_t from the forward process."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    if x0.shape[0] == 0:
        raise InvalidParameterError("empty batch")
    eps = np.atleast_2d(np.asarray(eps, dtype=np.float64))
    t = np.broadcast_to(np.asarray(t, dtype=np.int64), (x0.shape[0],))
    if np.any(t < 1) or np.any(t > schedule.T):
        raise InvalidParameterError("timestep out of range")
    x_t = _diffuse_batch(x0, t, eps, schedule)
    pred = mlp_epsilon(x_t, t, z, params)
    return float(np.mean(np.sum((eps - pred) ** 2, axis=1)))


# ---------------------------------------------------------------- training


@dataclass
class TrainingConfig:
    steps: int = 20000
    batch_size: int = 128
    learning_rate: float = 1e-4
    optimizer: str = "adam"  # or "sgd"
    seed: int = 0
    hidden: int = 128
    lr_schedule: str = "constant"  # or "cosine"

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1 or self.hidden < 1:
            raise InvalidParameterError("steps, batch_size and hidden must be positive")
        if not self.learning_rate > 0:
            raise InvalidParameterError("learning_rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidParameterError(f"unknown optimizer {self.optimizer!r}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise InvalidParameterError(f"unknown lr_schedule {self.lr_schedule!r}")


@dataclass
class TrainingResult:
    params: MlpDenoiserParams
    loss_trace: np.ndarray
    lambda0: float
    seed: int
    meta: dict = field(default_factory=dict)


class _Adam:
    def __init__(self, params: MlpDenoiserParams, b1=0.9, b2=0.999, eps=1e-8):
        self.m = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        self.b1, self.b2, self.eps, self.k = b1, b2, eps, 0

    def step(self, params, grads, lr):
        self.k += 1
        c1 = 1.0 - self.b1**self.k
        c2 = 1.0 - self.b2**self.k
        for name, g in grads.items():
            m, v = self.m[name], self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p = getattr(params, name)
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train_hybrid(
    source: GaussianMixtureSource,
    links_generator,
    schedule: DiffusionSchedule,
    lambda_schedule: LambdaSchedule,
    cfg: TrainingConfig,
    divergence_factor: float = 10.0,
    divergence_patience: int = 100,
) -> TrainingResult:
    """Hybrid-noise conditional training loop.

    Per step, for every batch row: draw clean features and their clean
    condition, a uniform step ``t``, a link realization and its normalized
    noise, blend with Gaussian noise at ``lambda_t``, diffuse from the clean
    features and regress the blended noise. ``links_generator(rng)`` must
    return a floored :class:`CooperativeLinkSet`.
    """
    if lambda_schedule.T != schedule.T:
        raise InvalidParameterError("lambda schedule and diffusion schedule disagree on T")
    rng = np.random.default_rng(cfg.seed)
    n = source.dim
    cond_dim = source.num_components
    params = MlpDenoiserParams.init(n, cond_dim, cfg.hidden, rng)
    adam = _Adam(params) if cfg.optimizer == "adam" else None
    trace = np.empty(cfg.steps)
    initial = None
    bad = 0
    for step in range(cfg.steps):
        x0, _ = source.sample(rng, cfg.batch_size)
        z = extract_semantic(x0, source)
        t = rng.integers(1, schedule.T + 1, size=cfg.batch_size)
        lam = lambda_at(t, lambda_schedule)
        eps_ch = np.zeros((cfg.batch_size, n))
        for i in np.flatnonzero(lam > 0):
            eps_ch[i] = normalize_channel_noise(links_generator(rng), rng, n).values
        eps_df = rng.standard_normal((cfg.batch_size, n))
        eps_hyb = mix_noise(eps_ch, eps_df, lam)
        x_t = _diffuse_batch(x0, t, eps_hyb, schedule)

        loss, grads = loss_and_grad(params, _net_input(x_t, t, z, params), eps_hyb)
        trace[step] = loss
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at step {step}", trace[: step + 1].copy())
        if initial is None:
            initial = loss
        bad = bad + 1 if loss > divergence_factor * initial else 0
        if bad >= divergence_patience:
            raise TrainingDivergedError(
                f"loss above {divergence_factor}x initial for {bad} steps", trace[: step + 1].copy()
            )

        lr = cfg.learning_rate
        if cfg.lr_schedule == "cosine":
            lr *= 0.5 * (1.0 + math.cos(math.pi * step / cfg.steps))
        if adam is not None:
            adam.step(params, grads, lr)
        else:
            for name, g in grads.items():
                getattr(params, name)[...] -= lr * g
    meta = {"schedule": schedule.metadata(), "config": cfg.__dict__.copy()}
    return TrainingResult(params, trace, lambda_schedule.lambda0, cfg.seed, meta)


def noise_prediction_mse(predictors, source, schedule, rng, num_samples, batch=4096, t=None):
    """Held-out mean ||eps - eps_hat||^2 for each predictor on shared draws.

    ``predictors`` maps names to ``(x_t, t, z) -> eps_hat`` callables; both are
    fed the clean condition. ``t=None`` samples steps uniformly.
    """
    sums = {k: 0.0 for k in predictors}
    done = 0
    while done < num_samples:
        b = min(batch, num_samples - done)
        x0, _ = source.sample(rng, b)
        z = extract_semantic(x0, source)
        ts = rng.integers(1, schedule.T + 1, size=b) if t is None else np.full(b, int(t))
        eps = rng.standard_normal((b, source.dim))
        x_t = _diffuse_batch(x0, ts, eps, schedule)
        for name, fn in predictors.items():
            pred = np.empty_like(x_t)
            for tv in np.unique(ts):
                rows = ts == tv
                pred[rows] = fn(x_t[rows], int(tv), z[rows])
            sums[name] += float(np.sum((eps - pred) ** 2))
        done += b
    return {k: v / num_samples for k, v in sums.items()}


# -------------------------------------------------------------- checkpoint


def save_checkpoint(path, result: TrainingResult, schedule: DiffusionSchedule) -> None:
    """Versioned JSON checkpoint; floats are written with round-trip precision."""
    p = result.params
    doc = {
        "format": "ctddiff-mlp",
        "version": CHECKPOINT_VERSION,
        "x_dim": p.x_dim,
        "cond_dim": p.cond_dim,
        "time_dim": p.time_dim,
        "hidden": p.hidden,
        "dtype": "float64",
        "schedule": schedule.metadata(),
        "lambda0": result.lambda0,
        "seed": result.seed,
        "params": {k: {"shape": list(v.shape), "values": v.ravel().tolist()} for k, v in p.arrays().items()},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> tuple[MlpDenoiserParams, dict]:
    """Return ``(params, metadata)``; raises ShapeError on inconsistent shapes."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "ctddiff-mlp":
        raise InvalidParameterError(f"{path}: not a ctddiff checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise InvalidParameterError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    arrays = {}
    for name in _PARAM_NAMES:
        entry = doc["params"][name]
        vals = np.asarray(entry["values"], dtype=np.float64)
        shape = tuple(entry["shape"])
        if vals.size != int(np.prod(shape)):
            raise ShapeError(f"{path}: {name} holds {vals.size} values for shape {shape}")
        arrays[name] = vals.reshape(shape)
    params = MlpDenoiserParams(**arrays, x_dim=doc["x_dim"], cond_dim=doc["cond_dim"], time_dim=doc["time_dim"])
    meta = {k: doc[k] for k in ("schedule", "lambda0", "seed", "hidden")}
    return params, meta
