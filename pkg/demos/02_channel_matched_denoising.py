"""
Treating the channel noise as a diffusion step
==============================================

After aggregation the observation is x + n with Var n = s2. Scaling it by
sqrt(abar) where abar = 1/(1+s2) makes it look exactly like a forward
diffusion state, so a denoiser can pick up the reverse chain from there.
"""

import numpy as np

from ctddiff.denoiser import AnalyticDenoiser, extract_semantic
from ctddiff.diffusion import build_linear_schedule, match_channel_timestep, sample_from_channel_state
from ctddiff.sources import single_gaussian, two_class_source

schedule = build_linear_schedule()
for s2 in (0.01, 0.1, 1.0, 4.0, 1e4):
    m = match_channel_timestep(s2, schedule)
    print("noise %-7g -> t_ch %4d  abar %.4f (target %.4f)%s" % (s2, m.t_ch, m.scale**2, m.target_alpha_bar, "  saturated" if m.saturated else ""))

rng = np.random.default_rng(1)

# single Gaussian: the deterministic chain lands on the posterior mean,
# so the error halves at unit noise; ancestral noise gives a posterior sample
src = single_gaussian(16)
x0, _ = src.sample(rng, 5000)
x_hat = x0 + rng.standard_normal(x0.shape)
den = AnalyticDenoiser(src, schedule)
for eta in (0.0, 0.5, 1.0):
    rec = sample_from_channel_state(x_hat, 1.0, den, None, schedule, rng, noise_scale=eta)
    print("noise_scale %.1f: MSE %.3f (observation %.3f)" % (eta, np.mean((rec - x0) ** 2), np.mean((x_hat - x0) ** 2)))

# two classes: the condition z tells the chain which mean to pull towards
src = two_class_source(2, 6.0)
x0, labels = src.sample(rng, 5000)
x_hat = x0 + rng.standard_normal(x0.shape)
den = AnalyticDenoiser(src, schedule)
z_oracle = np.eye(2)[labels]
z_est = extract_semantic(x_hat, src, noise_variance=1.0)
for name, z in (("no condition", None), ("estimated z", z_est), ("true class", z_oracle)):
    rec = sample_from_channel_state(x_hat, 1.0, den, z, schedule, noise_scale=0.0)
    print("%-13s MSE %.4f" % (name, np.mean((rec - x0) ** 2)))
