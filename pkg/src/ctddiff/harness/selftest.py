"""Quick Monte-Carlo-versus-closed-form checks, run by ``ctddiff selftest``."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..channel import from_symbols, sample_awgn, sample_rayleigh, to_symbols
from ..denoiser import AnalyticDenoiser
from ..diffusion import build_linear_schedule, match_channel_timestep, sample_from_channel_state
from ..hybrid_noise import mix_noise, normalize_channel_noise
from ..protocol import TdmaSchedule, aggregate, draw_link_set, effective_noise_variance, receive_copies
from ..sources import single_gaussian
from .results import format_float

__all__ = ["SelftestRecord", "run_selftest", "emit_selftest"]


@dataclass
class SelftestRecord:
    name: str
    measured: float
    expected: float
    tolerance: float
    passed: bool


def _check(name, measured, expected, tol):
    return SelftestRecord(name, float(measured), float(expected), float(tol), bool(abs(measured - expected) <= tol))


def _fading(rng, n):
    h = sample_rayleigh(rng, 1.0, size=n)
    p = np.abs(h) ** 2
    return [
        _check("rayleigh_second_moment", p.mean(), 1.0, 3 * p.std() / np.sqrt(n)),
        _check("rayleigh_median_power", np.mean(p <= np.log(2)), 0.5, 3 * 0.5 / np.sqrt(n)),
    ]


def _awgn(rng, n):
    w = np.abs(sample_awgn(rng, n, 2.0)) ** 2
    return [_check("awgn_variance", w.mean(), 2.0, 3 * w.std() / np.sqrt(n))]


def _aggregation(rng, n):
    out = []
    for i in range(5):
        links = draw_link_set(rng, TdmaSchedule.slot(8, i), 1.0)
        obs = aggregate(receive_copies(np.zeros(n, complex), links, rng), links)
        ratio = np.mean(np.abs(obs.x_hat) ** 2) / effective_noise_variance(links)
        out.append(_check(f"aggregation_variance_{i}", ratio, 1.0, 0.02))
    return out


def _timestep(rng, n):
    sched = build_linear_schedule()
    out = []
    for v in (0.01, 0.1, 0.5, 1.0, 4.0):
        m = match_channel_timestep(v, sched)
        brute = min(range(1, sched.T + 1), key=lambda t: abs(sched.alpha_bar_at(t) - 1 / (1 + v)))
        out.append(_check(f"timestep_match_{v}", m.t_ch, brute, 0))
    return out


def _hybrid(rng, n):
    links = draw_link_set(rng, TdmaSchedule.slot(4, 0), 1.0)
    eps_ch = normalize_channel_noise(links, rng, n).values
    out = []
    for lam in (0.0, 0.3, 0.6, 1.0):
        e = mix_noise(eps_ch, rng.standard_normal(n), lam)
        out.append(_check(f"hybrid_variance_{lam}", e.var(), 1.0, 0.02))
    return out


def _contraction(rng, n):
    sched = build_linear_schedule()
    src = single_gaussian(16)
    trials = 500
    x0, _ = src.sample(rng, trials)
    noise = from_symbols(sample_awgn(rng, trials * 8, 1.0).reshape(trials, 8))
    x_hat = from_symbols(to_symbols(x0)) + noise
    rec = sample_from_channel_state(x_hat, 1.0, AnalyticDenoiser(src, sched), None, sched, rng, noise_scale=0.0)
    ratio = np.mean((rec - x0) ** 2) / np.mean((x_hat - x0) ** 2)
    # posterior mean of a unit Gaussian under unit noise halves the error
    return [_check("reverse_contraction_ratio", ratio, 0.5, 0.05)]


_GROUPS = (_fading, _awgn, _aggregation, _timestep, _hybrid, _contraction)


def _run_group(args):
    i, seed, n = args
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
    return _GROUPS[i](rng, n)


def run_selftest(seed: int = 0, n: int = 100_000, workers: int = 1) -> list[SelftestRecord]:
    """Each check group draws from its own stream, so results do not depend on ``workers``."""
    jobs = [(i, seed, n) for i in range(len(_GROUPS))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_group, jobs))
    else:
        parts = [_run_group(j) for j in jobs]
    return [r for part in parts for r in part]


def emit_selftest(records, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "measured", "expected", "tolerance", "passed"])
    for r in records:
        w.writerow([r.name, format_float(r.measured), format_float(r.expected), format_float(r.tolerance),
                    "true" if r.passed else "false"])  # fmt: skip
    Path(path).write_text(buf.getvalue())
