"""
Training the small denoiser on hybrid noise
===========================================

The MLP sees a blend of real aggregated channel noise and Gaussian noise,
weighted by lambda_t = lambda0 (1 - t/T). Here both the pure-Gaussian run
(lambda0 = 0) and a hybrid run are compared with the closed-form optimum,
overall and at a few fixed steps.
"""

import numpy as np

from ctddiff.denoiser import AnalyticDenoiser, MlpDenoiser, TrainingConfig, noise_prediction_mse, train_hybrid
from ctddiff.diffusion import build_linear_schedule
from ctddiff.hybrid_noise import LambdaSchedule
from ctddiff.protocol import TdmaSchedule, draw_link_set
from ctddiff.sources import two_class_source

schedule = build_linear_schedule()
src = two_class_source(8, 6.0)
slot = TdmaSchedule.slot(8, 0)


def links(rng):
    return draw_link_set(rng, slot, 1.0)


# a larger step size with cosine decay keeps this demo under a minute
cfg = TrainingConfig(steps=4000, batch_size=128, learning_rate=1e-3, lr_schedule="cosine", hidden=64)
nets = {}
for lam0 in (0.0, 0.8):
    res = train_hybrid(src, links, schedule, LambdaSchedule(lam0, schedule.T), cfg)
    tr = res.loss_trace
    print("lambda0 %.1f: loss %.3f -> %.3f" % (lam0, tr[:100].mean(), tr[-100:].mean()))
    nets["lambda0=%.1f" % lam0] = MlpDenoiser(res.params)
nets["optimum"] = AnalyticDenoiser(src, schedule)

rng = np.random.default_rng(7)
print("\n  t     " + "  ".join("%12s" % k for k in nets))
for t in (None, 10, 100, 400, 900):
    m = noise_prediction_mse(nets, src, schedule, rng, 20_000, t=t)
    print("%5s  " % ("all" if t is None else t) + "  ".join("%12.4f" % m[k] for k in nets))
