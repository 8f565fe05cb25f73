"""
Experiment configuration.

A config file is a flat YAML mapping using the keys of
:class:`ExperimentConfig`; unknown keys are rejected. Command-line overrides
are applied on top. Values are type-checked against the defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..errors import ConfigError

__all__ = ["ExperimentConfig", "load_config", "resolve_config"]


@dataclass(frozen=True)
class ExperimentConfig:
    # reproducibility
    seed: int = 0
    # TDMA / cooperation
    num_users: int = 20
    user_list: tuple = (4, 8, 12, 16, 20)
    cooperation: bool = True
    num_relays: int | None = None  # None: every idle user relays
    # channel
    channel: str = "rayleigh"  # "rayleigh" | "awgn"
    snr_db_list: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    channel_scale: float = 1.0
    h_floor: float = 0.05
    # source
    source: str = "texture"  # "texture" | "gaussian" | "mixture"
    feature_dim: int = 16  # gaussian / mixture only
    num_classes: int = 4
    sigma0_sq: float = 0.3  # mixture within-class variance
    source_seed: int = 1234
    texture_size: int = 32
    texture_channels: int = 1
    texture_pool: int = 2
    texture_within_var: float = 0.3
    texture_detail_std: float = 0.02
    # diffusion
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    sampler_noise_scale: float = 0.0
    tch_mode: str = "frame"  # "frame" | "setting"
    conditioning: str = "estimated"  # "estimated" | "oracle" | "none"
    # denoiser
    denoiser: str = "analytic"  # "analytic" | "trained"
    checkpoint: str | None = None
    lambda0: float = 0.8
    # training (train subcommand)
    train_steps: int = 20000
    batch_size: int = 128
    learning_rate: float = 1e-4
    optimizer: str = "adam"
    lr_schedule: str = "constant"
    hidden: int = 128
    # evaluation
    trials: int = 100
    psnr_cap: float = 100.0

    def __post_init__(self):
        for name in ("user_list", "snr_db_list"):
            v = getattr(self, name)
            if isinstance(v, (list, tuple)):
                object.__setattr__(self, name, tuple(v))
        object.__setattr__(self, "snr_db_list", tuple(float(s) for s in self.snr_db_list))
        object.__setattr__(self, "user_list", tuple(int(k) for k in self.user_list))

    def validate(self, check_files: bool = True) -> "ExperimentConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.num_users >= 1, "num_users must be >= 1")
        need(len(self.user_list) >= 1 and all(k >= 1 for k in self.user_list), "user_list must hold positive counts")
        need(self.num_relays is None or self.num_relays >= 0, "num_relays must be >= 0")
        need(self.channel in ("rayleigh", "awgn"), f"unknown channel {self.channel!r}")
        need(len(self.snr_db_list) >= 1, "snr_db_list must be non-empty")
        need(self.channel_scale > 0, "channel_scale must be positive")
        need(self.h_floor > 0, "h_floor must be positive")
        need(self.source in ("texture", "gaussian", "mixture"), f"unknown source {self.source!r}")
        need(self.feature_dim >= 2 and self.feature_dim % 2 == 0, "feature_dim must be even and >= 2")
        need(self.num_classes >= 1, "num_classes must be >= 1")
        need(0 <= self.sigma0_sq < 1, "sigma0_sq must lie in [0, 1)")
        need(self.texture_size % self.texture_pool == 0, "texture_size must be a multiple of texture_pool")
        need(
            self.texture_channels * (self.texture_size // self.texture_pool) ** 2 % 2 == 0,
            "texture feature count must be even",
        )
        need(self.T >= 2, "T must be >= 2")
        need(0 < self.beta_start <= self.beta_end < 1, "need 0 < beta_start <= beta_end < 1")
        need(self.sampler_noise_scale >= 0, "sampler_noise_scale must be >= 0")
        need(self.tch_mode in ("frame", "setting"), f"unknown tch_mode {self.tch_mode!r}")
        need(self.conditioning in ("estimated", "oracle", "none"), f"unknown conditioning {self.conditioning!r}")
        need(self.denoiser in ("analytic", "trained"), f"unknown denoiser {self.denoiser!r}")
        if self.denoiser == "trained":
            need(self.checkpoint is not None, "denoiser=trained requires checkpoint")
            if check_files:
                need(Path(self.checkpoint).is_file(), f"checkpoint {self.checkpoint} does not exist")
        need(0 <= self.lambda0 <= 1, "lambda0 must lie in [0, 1]")
        need(self.train_steps >= 1 and self.batch_size >= 1 and self.hidden >= 1, "training counts must be positive")
        need(self.learning_rate > 0, "learning_rate must be positive")
        need(self.optimizer in ("adam", "sgd"), f"unknown optimizer {self.optimizer!r}")
        need(self.lr_schedule in ("constant", "cosine"), f"unknown lr_schedule {self.lr_schedule!r}")
        need(self.trials >= 1, "trials must be >= 1")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["user_list"] = list(self.user_list)
        d["snr_db_list"] = list(self.snr_db_list)
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name, value):
    default = _FIELDS[name].default
    if value is None:
        if default is None:
            return None
        raise ConfigError(f"{name} may not be null")
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                low = value.strip().lower()
                if low in ("true", "yes", "1", "on"):
                    return True
                if low in ("false", "no", "0", "off"):
                    return False
                raise ValueError(value)
            if not isinstance(value, bool):
                raise ValueError(value)
            return value
        if isinstance(default, tuple):
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split()]
            elem = float if name == "snr_db_list" else int
            return tuple(elem(v) for v in value)
        if isinstance(default, int) or name in ("num_relays",):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {name}: {value!r}") from None


def resolve_config(values: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    unknown = set(values) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return base.replace(**{k: _coerce(k, v) for k, v in values.items()})


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the file at ``path`` (if any), then ``overrides``."""
    cfg = ExperimentConfig()
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a flat key-value mapping")
        cfg = resolve_config(data, cfg)
    if overrides:
        cfg = resolve_config(overrides, cfg)
    return cfg
