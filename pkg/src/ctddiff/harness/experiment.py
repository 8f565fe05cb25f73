"""
End-to-end trials and the sweeps built from them.

A trial is: draw a frame, send its features through one cooperative TDMA slot,
aggregate, map the effective noise onto a diffusion step, run the reverse
chain and score the result. Every random draw comes from streams derived from
``(seed, trial index, purpose)``, so a trial's outcome does not depend on the
execution order, the worker count, the SNR point or on cooperation being
toggled. Relay ``j`` owns its own stream, so the first relays of a large user
set see the same channels as the relays of a smaller one.
"""

from __future__ import annotations

import datetime as _dt
import functools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .. import __version__
from ..channel import from_symbols, snr_to_noise_variance, to_symbols
from ..denoiser import AnalyticDenoiser, MlpDenoiser, extract_semantic, load_checkpoint
from ..diffusion import build_linear_schedule, match_channel_timestep, sample_from_channel_state
from ..errors import ConfigError
from ..metrics import MsSsimConfig, max_scales, ms_ssim, mse, psnr
from ..protocol import (
    TdmaSchedule,
    aggregate,
    draw_link_set,
    expected_effective_variance,
    receive_copies,
)
from ..sources import FeatureFrameSource, TextureFrameSource, random_mixture, single_gaussian
from .config import ExperimentConfig
from .results import SweepRecord, SweepResult

__all__ = [
    "TrialRecord",
    "PairedSweepResult",
    "build_context",
    "run_trial",
    "run_point",
    "run_snr_sweep",
    "run_user_sweep",
    "run_cooperation_ablation",
]

_SOURCE, _DIRECT, _RELAY, _SAMPLER = 0, 1, 2, 3


class TrialRecord(NamedTuple):
    psnr: float
    ms_ssim: float
    mse: float
    effective_variance: float
    t_ch: int
    saturated: bool


@dataclass
class _Context:
    frames: object
    schedule: object
    denoiser: object
    ms_ssim_cfg: MsSsimConfig | None


def _stream(seed, trial, purpose, j=0):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial, purpose, j)))


def build_frames(cfg: ExperimentConfig):
    if cfg.source == "texture":
        return TextureFrameSource(
            size=cfg.texture_size,
            channels=cfg.texture_channels,
            pool=cfg.texture_pool,
            num_classes=cfg.num_classes,
            within_class_var=cfg.texture_within_var,
            detail_std=cfg.texture_detail_std,
            seed=cfg.source_seed,
        )
    if cfg.source == "gaussian":
        return FeatureFrameSource(single_gaussian(cfg.feature_dim, 1.0))
    mix = random_mixture(cfg.feature_dim, cfg.num_classes, cfg.sigma0_sq, np.random.default_rng(cfg.source_seed))
    return FeatureFrameSource(mix)


@functools.lru_cache(maxsize=8)
def build_context(cfg: ExperimentConfig) -> _Context:
    frames = build_frames(cfg)
    schedule = build_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end)
    if cfg.denoiser == "analytic":
        denoiser = AnalyticDenoiser(frames.mixture, schedule)
    else:
        params, meta = load_checkpoint(cfg.checkpoint)
        if params.x_dim != frames.mixture.dim or params.cond_dim != frames.mixture.num_components:
            raise ConfigError(
                f"checkpoint shapes (x={params.x_dim}, cond={params.cond_dim}) do not match the source "
                f"(x={frames.mixture.dim}, cond={frames.mixture.num_components})"
            )
        if meta["schedule"]["T"] != cfg.T:
            raise ConfigError("checkpoint was trained with a different T")
        denoiser = MlpDenoiser(params)
    _, h, w = frames.image_shape
    ssim_cfg = MsSsimConfig(max_value=frames.max_value) if max_scales(h, w) >= 1 else None
    return _Context(frames, schedule, denoiser, ssim_cfg)


def run_trial(cfg: ExperimentConfig, snr_db: float, num_users: int, cooperation: bool, trial: int) -> TrialRecord:
    ctx = build_context(cfg)
    frames, schedule = ctx.frames, ctx.schedule
    mixture = frames.mixture

    frame = frames.sample(_stream(cfg.seed, trial, _SOURCE))
    x = to_symbols(frame.features)

    noise_var = snr_to_noise_variance(snr_db)
    active = trial % num_users
    n_relays = 0 if not cooperation else cfg.num_relays
    if n_relays is not None:
        n_relays = min(n_relays, num_users - 1)
    slot = TdmaSchedule.slot(num_users, active, n_relays)
    direct = _stream(cfg.seed, trial, _DIRECT)
    relay_rngs = [_stream(cfg.seed, trial, _RELAY, j) for j in range(slot.num_relays)]
    links = draw_link_set(
        direct, slot, noise_var, cfg.channel, cfg.channel_scale, cfg.h_floor, relay_rngs=relay_rngs
    )
    obs = aggregate(receive_copies(x, links, direct, relay_rngs), links)
    x_hat = from_symbols(obs.x_hat)
    var = obs.effective_variance

    if cfg.tch_mode == "setting":
        expected = expected_effective_variance(
            slot.num_relays, noise_var, cfg.channel, cfg.channel_scale, cfg.h_floor
        )
        match = match_channel_timestep(expected, schedule)
    else:
        match = match_channel_timestep(var, schedule)

    if cfg.conditioning == "estimated":
        z = extract_semantic(x_hat, mixture, noise_variance=var)
    elif cfg.conditioning == "oracle":
        z = extract_semantic(frame.features, mixture)
    else:
        z = mixture.weights

    rec = sample_from_channel_state(
        x_hat,
        var,
        ctx.denoiser,
        z,
        schedule,
        _stream(cfg.seed, trial, _SAMPLER),
        noise_scale=cfg.sampler_noise_scale,
        match=match,
    )
    hi = frames.max_value
    ref = np.clip(frame.image, 0.0, hi)
    out = np.clip(frames.decode(rec), 0.0, hi)
    score = ms_ssim(ref, out, ctx.ms_ssim_cfg) if ctx.ms_ssim_cfg is not None else float("nan")
    return TrialRecord(
        psnr=psnr(ref, out, hi, cap=cfg.psnr_cap),
        ms_ssim=score,
        mse=mse(frame.features, rec),
        effective_variance=var,
        t_ch=match.t_ch,
        saturated=match.saturated,
    )


def _run_chunk(args):
    cfg, snr_db, num_users, cooperation, trials = args
    return [run_trial(cfg, snr_db, num_users, cooperation, i) for i in trials]


def run_point(cfg, snr_db, num_users, cooperation, executor=None, chunk=16) -> list[TrialRecord]:
    """All trials of one grid cell, in trial-index order."""
    idx = list(range(cfg.trials))
    chunks = [(cfg, snr_db, num_users, cooperation, idx[i : i + chunk]) for i in range(0, len(idx), chunk)]
    mapper = map if executor is None else executor.map
    out = []
    for part in mapper(_run_chunk, chunks):
        out.extend(part)
    return out


def _summarize(cfg, snr_db, num_users, cooperation, recs) -> SweepRecord:
    arr = np.array([r[:5] for r in recs], dtype=np.float64)
    sat = np.array([r.saturated for r in recs], dtype=np.float64)
    ddof = 1 if len(recs) > 1 else 0
    mean = arr.mean(axis=0)
    std = arr.std(axis=0, ddof=ddof)
    return SweepRecord(
        snr_db=float(snr_db),
        num_users=int(num_users),
        cooperation=bool(cooperation),
        channel=cfg.channel,
        trials=len(recs),
        psnr_mean=float(mean[0]),
        psnr_std=float(std[0]),
        ms_ssim_mean=float(mean[1]),
        ms_ssim_std=float(std[1]),
        mse_mean=float(mean[2]),
        mse_std=float(std[2]),
        effective_variance_mean=float(mean[3]),
        effective_variance_std=float(std[3]),
        t_ch_mean=float(mean[4]),
        saturated_fraction=float(sat.mean()),
    )


class _Pool:
    def __init__(self, workers):
        self.workers = workers
        self.ex = None

    def __enter__(self):
        if self.workers and self.workers > 1:
            self.ex = ProcessPoolExecutor(max_workers=self.workers)
        return self.ex

    def __exit__(self, *exc):
        if self.ex is not None:
            self.ex.shutdown()


def _grid(cfg, kind, user_counts, cooperation, workers, timestamp):
    cfg.validate()
    records, trials = [], {}
    with _Pool(workers) as ex:
        for K in user_counts:
            for snr in cfg.snr_db_list:
                recs = run_point(cfg, snr, K, cooperation, ex)
                trials[(snr, K, cooperation)] = recs
                records.append(_summarize(cfg, snr, K, cooperation, recs))
    return SweepResult(
        kind=kind,
        records=records,
        config=cfg.to_dict(),
        seed=cfg.seed,
        code_version=__version__,
        timestamp=timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        trials=trials,
    )


def run_snr_sweep(cfg: ExperimentConfig, workers: int = 1, timestamp: str | None = None) -> SweepResult:
    """One cell per SNR at ``cfg.num_users`` with ``cfg.cooperation``."""
    return _grid(cfg, "snr", [cfg.num_users], cfg.cooperation, workers, timestamp)


def run_user_sweep(cfg: ExperimentConfig, workers: int = 1, timestamp: str | None = None) -> SweepResult:
    """The (K, SNR) heatmap grid over ``cfg.user_list``."""
    if len(cfg.user_list) < 2:
        raise ConfigError("a user sweep needs at least two user counts")
    return _grid(cfg, "users", list(cfg.user_list), cfg.cooperation, workers, timestamp)


@dataclass
class PairedSweepResult:
    with_cooperation: SweepResult
    without_cooperation: SweepResult
    # per SNR: paired per-trial PSNR deltas (coop minus no-coop)
    deltas: dict

    def delta_summary(self) -> list[dict]:
        rows = []
        for snr, d in self.deltas.items():
            d = np.asarray(d)
            rows.append(
                {
                    "snr_db": float(snr),
                    "num_users": self.with_cooperation.records[0].num_users,
                    "trials": int(d.size),
                    "psnr_delta_mean": float(d.mean()),
                    "psnr_delta_std": float(d.std(ddof=1)) if d.size > 1 else 0.0,
                    "fraction_positive": float(np.mean(d > 0)),
                }
            )
        return rows


def run_cooperation_ablation(cfg: ExperimentConfig, workers: int = 1, timestamp: str | None = None) -> PairedSweepResult:
    """Same streams twice, once with relays and once without."""
    on = _grid(cfg.replace(cooperation=True), "ablation-coop", [cfg.num_users], True, workers, timestamp)
    off = _grid(cfg.replace(cooperation=False), "ablation-nocoop", [cfg.num_users], False, workers, on.timestamp)
    deltas = {}
    for snr in cfg.snr_db_list:
        a = np.array([r.psnr for r in on.trials[(snr, cfg.num_users, True)]])
        b = np.array([r.psnr for r in off.trials[(snr, cfg.num_users, False)]])
        deltas[snr] = a - b
    return PairedSweepResult(on, off, deltas)
