"""Acceptance suite. Each test prints one PASS/FAIL line with the measured value.

Run alone with ``pytest tests/test_acceptance.py -v`` (about three minutes on
one core) or ``python tests/test_acceptance.py`` for just the report lines.
"""

import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from helpers import gradient_check

from ctddiff.channel import from_symbols, to_symbols
from ctddiff.denoiser import (
    AnalyticDenoiser,
    MlpDenoiser,
    TrainingConfig,
    noise_prediction_mse,
    train_hybrid,
)
from ctddiff.diffusion import build_linear_schedule, match_channel_timestep, sample_from_channel_state
from ctddiff.harness import ExperimentConfig, run_cooperation_ablation, run_user_sweep
from ctddiff.hybrid_noise import LambdaSchedule, mix_noise, normalize_channel_noise
from ctddiff.metrics import ms_ssim, psnr
from ctddiff.protocol import TdmaSchedule, aggregate, draw_link_set, effective_noise_variance, receive_copies
from ctddiff.sources import single_gaussian, two_class_source

STD = build_linear_schedule()


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, detail

    return emit


def _awgn_observation(x0, variance, rng):
    """Send each row through a unit-gain direct link; returns (x_hat, sigma^2)."""
    sym = to_symbols(x0).reshape(-1)
    links = draw_link_set(rng, TdmaSchedule.slot(1, 0), variance, channel="awgn")
    obs = aggregate(receive_copies(sym, links, rng), links)
    return from_symbols(obs.x_hat.reshape(x0.shape[0], -1)), obs.effective_variance


def test_aggregation_variance_oracle(report):
    rng = np.random.default_rng(101)
    n = 100_000
    worst = 0.0
    for i in range(100):
        K = int(rng.integers(2, 21))
        links = draw_link_set(rng, TdmaSchedule.slot(K, int(rng.integers(K))), 1.0, h_floor=0.05)
        err = aggregate(receive_copies(np.zeros(n, complex), links, rng), links).x_hat
        v = effective_noise_variance(links)
        worst = max(worst, abs(np.mean(np.abs(err) ** 2) / v - 1))
    report("aggregation variance oracle", worst <= 0.02, f"worst relative error {worst:.4f} over 100 link sets (tol 0.02)")


@pytest.fixture(scope="module")
def user_sweep():
    cfg = ExperimentConfig(snr_db_list=(0.0,), user_list=(4, 8, 12, 16, 20), trials=2000, seed=7)
    return run_user_sweep(cfg)


def test_cooperation_monotonicity(report, user_sweep):
    recs = user_sweep.records
    var = [r.effective_variance_mean for r in recs]
    ps = [r.psnr_mean for r in recs]
    n = recs[0].trials
    half = [1.96 * r.psnr_std / math.sqrt(n) for r in recs]
    vhalf = [1.96 * r.effective_variance_std / math.sqrt(n) for r in recs]
    var_down = all(a > b for a, b in zip(var, var[1:]))
    psnr_up = all(a < b for a, b in zip(ps, ps[1:]))
    ci_psnr = ps[0] + half[0] < ps[-1] - half[-1]
    ci_var = var[0] - vhalf[0] > var[-1] + vhalf[-1]
    detail = (
        "K=4..20 variance " + " > ".join(f"{v:.4f}" for v in var)
        + "; PSNR " + " < ".join(f"{p:.3f}" for p in ps)
        + f"; 95% CI K=4 [{ps[0]-half[0]:.3f}, {ps[0]+half[0]:.3f}] vs K=20 [{ps[-1]-half[-1]:.3f}, {ps[-1]+half[-1]:.3f}]"
    )
    report("cooperation monotonicity (0 dB, 2000 trials/K)", var_down and psnr_up and ci_psnr and ci_var, detail)


@pytest.fixture(scope="module")
def ablation():
    cfg = ExperimentConfig(num_users=20, snr_db_list=(0.0, 30.0), trials=2000, seed=11)
    return {r["snr_db"]: r for r in run_cooperation_ablation(cfg).delta_summary()}


def test_ablation_mean_delta_positive(report, ablation):
    d = ablation[0.0]["psnr_delta_mean"]
    report("ablation mean delta at 0 dB > 0", d > 0, f"mean PSNR delta {d:.4f} dB (std {ablation[0.0]['psnr_delta_std']:.4f})")


def test_ablation_fraction_positive(report, ablation):
    f = ablation[0.0]["fraction_positive"]
    report(
        "ablation paired trials positive at 0 dB",
        f >= 0.95,
        f"{f:.4f} of {ablation[0.0]['trials']} paired trials positive (need >= 0.95)",
    )


def test_ablation_delta_shrinks(report, ablation):
    lo, hi = ablation[0.0]["psnr_delta_mean"], ablation[30.0]["psnr_delta_mean"]
    report("ablation delta at 30 dB < 20% of 0 dB", hi < 0.2 * lo, f"{hi:.4f} dB vs {lo:.4f} dB (ratio {hi/lo:.3f})")


def test_timestep_matching(report):
    ab = STD.alpha_bar
    lines, ok = [], True
    for v in (0.01, 0.1, 0.5, 1.0, 4.0):
        m = match_channel_timestep(v, STD)
        target = 1 / (1 + v)
        scan = min(range(1, STD.T + 1), key=lambda t: abs(ab[t - 1] - target))
        gap = abs(ab[m.t_ch - 1] - target)
        i = m.t_ch - 1
        adjacent = max(ab[i - 1] - ab[i] if i > 0 else 0.0, ab[i] - ab[i + 1] if i + 1 < STD.T else 0.0)
        ok &= m.t_ch == scan and gap <= adjacent
        lines.append(f"{v}->t={m.t_ch} (scan {scan}, gap {gap:.2e} <= {adjacent:.2e})")
    report("timestep matching", ok, "; ".join(lines))


def test_reverse_contraction(report):
    src = single_gaussian(16)
    rng = np.random.default_rng(202)
    x0, _ = src.sample(rng, 10_000)
    x_hat, var = _awgn_observation(x0, 1.0, rng)
    den = AnalyticDenoiser(src, STD)
    base = np.mean((x_hat - x0) ** 2)
    rec = sample_from_channel_state(x_hat, var, den, None, STD, rng, noise_scale=0.0)
    ratio = np.mean((rec - x0) ** 2) / base
    anc = sample_from_channel_state(x_hat, var, den, None, STD, rng, noise_scale=1.0)
    anc_ratio = np.mean((anc - x0) ** 2) / base
    report(
        "reverse-sampling contraction",
        ratio <= 0.75,
        f"observation MSE {base:.4f}, reconstruction/observation {ratio:.4f} (need <= 0.75; "
        f"with full ancestral noise the ratio is {anc_ratio:.4f})",
    )


def test_hybrid_noise_statistics(report):
    rng = np.random.default_rng(303)
    n = 1_000_000
    worst_mean, worst_var, ok = 0.0, 0.0, True
    for _ in range(10):
        links = draw_link_set(rng, TdmaSchedule.slot(8, int(rng.integers(8))), 1.0)
        eps_ch = normalize_channel_noise(links, rng, n).values
        for lam in (0.0, 0.3, 0.6, 1.0):
            e = mix_noise(eps_ch, rng.standard_normal(n), lam)
            m, v = e.mean(), e.var()
            ok &= abs(m) <= 0.01 and 0.99 <= v <= 1.01
            worst_mean = max(worst_mean, abs(m))
            worst_var = max(worst_var, abs(v - 1))
    report("hybrid-noise statistics", ok, f"max |mean| {worst_mean:.5f}, max |var-1| {worst_var:.5f} over 40 cases")


def test_training_oracle_convergence(report):
    grad_err = gradient_check(x_dim=8)
    src = single_gaussian(16)
    cfg = TrainingConfig()  # Adam, lr 1e-4, 20000 steps, batch 128, width 128
    res = train_hybrid(src, None, STD, LambdaSchedule(0.0, STD.T), cfg)
    m = noise_prediction_mse(
        {"mlp": MlpDenoiser(res.params), "oracle": AnalyticDenoiser(src, STD)}, src, STD, np.random.default_rng(404), 200_000
    )
    excess = m["mlp"] / m["oracle"] - 1
    report(
        "training oracle convergence",
        grad_err <= 1e-4 and excess <= 0.05,
        f"gradient check rel err {grad_err:.2e}; held-out MSE {m['mlp']:.4f} vs oracle {m['oracle']:.4f} "
        f"(excess {excess:.2%}, need <= 5%)",
    )


def test_conditioning_gain(report):
    den_cache = {}

    def gain(dim, variance, seed):
        src = two_class_source(dim, 6.0)
        rng = np.random.default_rng(seed)
        x0, lab = src.sample(rng, 10_000)
        x_hat, v = _awgn_observation(x0, variance, rng)
        den = den_cache.setdefault(dim, AnalyticDenoiser(src, STD))
        cond = sample_from_channel_state(x_hat, v, den, np.eye(2)[lab], STD, noise_scale=0.0)
        uncond = sample_from_channel_state(x_hat, v, den, None, STD, noise_scale=0.0)
        return np.mean((cond - x0) ** 2), np.mean((uncond - x0) ** 2)

    c, u = gain(2, 1.0, 505)
    c16, u16 = gain(16, 1.0, 506)
    g = 1 - c / u
    report(
        "conditioning gain",
        g >= 0.30,
        f"dim 2, separation 6 sigma0, noise variance 1: conditioned {c:.4f} vs unconditional {u:.4f} "
        f"(gain {g:.1%}, need >= 30%); same at dim 16: gain {1 - c16 / u16:.1%}",
    )


def test_metric_exactness(report):
    rng = np.random.default_rng(606)
    p = psnr(np.zeros(10), np.ones(10), max_value=255)
    same = all(ms_ssim(a, a) == 1.0 for a in rng.random((5, 1, 32, 32)))
    pairs = []
    for _ in range(1000):
        a = rng.random((1, 8, 8))
        b = np.clip(a + rng.normal(0, rng.uniform(0.001, 0.5), a.shape), 0, 1)
        pairs.append((np.mean((a - b) ** 2), psnr(a, b)))
    pairs.sort()
    mono = all(p1 > p2 for (m1, p1), (m2, p2) in zip(pairs, pairs[1:]) if m1 < m2)
    ok = abs(p - 48.1308) <= 1e-3 and same and mono
    report("metric exactness", ok, f"psnr(255, mse=1) = {p:.6f}; ms_ssim(a,a)==1: {same}; monotone on 1000 pairs: {mono}")


def _cli(tmp, *args):
    out = subprocess.run([sys.executable, "-m", "ctddiff", *args], capture_output=True, text=True, cwd=tmp)
    assert out.returncode == 0, out.stderr
    return out


def test_determinism(report, tmp_path):
    files = {}
    for tag, workers in (("a", 1), ("b", 1), ("c", 4)):
        st = tmp_path / f"selftest_{tag}.csv"
        sw = tmp_path / f"sweep_{tag}.csv"
        _cli(tmp_path, "selftest", "--workers", str(workers), "--out", str(st))
        _cli(tmp_path, "sweep-snr", "--workers", str(workers), "--out", str(sw))
        files[tag] = (st.read_bytes(), sw.read_bytes())
    ok = files["a"] == files["b"] == files["c"]
    report(
        "determinism",
        ok,
        f"selftest and sweep-snr CSVs identical across two runs and workers 1/4: {ok} "
        f"({len(files['a'][1])} sweep bytes)",
    )


if __name__ == "__main__":
    sys.exit(pytest.main([str(Path(__file__)), "-q", "-p", "no:cacheprovider"]))
