"""
How much do overhearing users help?
===================================

One TDMA slot with K users: the active user sends, the other K-1 overhear
and forward, and the base station averages every copy. This walks through a
single slot by hand, then checks the effective-variance formula against
simulation for a range of K.
"""

import numpy as np

from ctddiff.channel import snr_to_noise_variance, to_symbols
from ctddiff.protocol import (
    TdmaSchedule,
    aggregate,
    draw_link_set,
    effective_noise_variance,
    expected_effective_variance,
    receive_copies,
)

rng = np.random.default_rng(0)
noise = snr_to_noise_variance(0.0)

# a 16-dim feature vector becomes 8 unit-power complex symbols
features = rng.standard_normal(16)
x = to_symbols(features)

# user 2 of 6 is active, users 3, 4, 5, 0, 1 relay
slot = TdmaSchedule.slot(6, 2)
links = draw_link_set(rng, slot, noise)
print("relays:", slot.idle_users)
print("|h| direct %.3f, source->relay" % abs(links.h_direct), np.round(np.abs(links.h_src_to_relay), 3))

copies = receive_copies(x, links, rng)
obs = aggregate(copies, links)
print("copies at the base station:", obs.num_copies)
print("effective variance %.4f (direct link alone: %.4f)" % (obs.effective_variance, noise))

# The gain per relay is |h_direct|^2 / |h_source->relay|^2. A relay in a deep
# fade amplifies its own noise, so averaging is not always a win.
gains = np.abs(links.h_direct) ** 2 / np.abs(links.h_src_to_relay) ** 2
print("per-relay noise gains:", np.round(gains, 3))

# formula vs Monte-Carlo on long zero frames
print("\n K   formula   simulated   E[var] closed form")
for K in (1, 4, 8, 12, 16, 20):
    links = draw_link_set(rng, TdmaSchedule.slot(K, 0), noise)
    err = aggregate(receive_copies(np.zeros(200_000, complex), links, rng), links).x_hat
    print(
        "%2d  %8.4f  %10.4f  %8.4f"
        % (K, effective_noise_variance(links), np.mean(np.abs(err) ** 2), expected_effective_variance(K - 1, noise))
    )

# over many slots, how often does cooperation actually lower the variance?
wins = 0
for _ in range(20_000):
    links = draw_link_set(rng, TdmaSchedule.slot(20, 0), noise)
    wins += effective_noise_variance(links) < noise
print("\nK=20: cooperation lowers the variance in %.1f%% of slots" % (100 * wins / 20_000))
