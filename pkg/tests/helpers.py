import numpy as np

from ctddiff.denoiser import MlpDenoiserParams, _net_input, loss_and_grad, time_embedding  # noqa: F401


def gradient_check(x_dim=8, cond_dim=2, hidden=12, batch=5, seed=0, h=1e-6):
    """Largest per-array relative error between backprop and central differences."""
    rng = np.random.default_rng(seed)
    params = MlpDenoiserParams.init(x_dim, cond_dim, hidden, rng)
    # nonzero biases so every path is exercised
    params = params.replace(**{k: rng.normal(0, 0.3, v.shape) for k, v in params.arrays().items() if k.startswith("b")})
    x = rng.standard_normal((batch, x_dim))
    t = rng.integers(1, 1001, size=batch)
    z = rng.dirichlet(np.ones(cond_dim), size=batch)
    inp = _net_input(x, t, z, params)
    target = rng.standard_normal((batch, x_dim))
    _, grads = loss_and_grad(params, inp, target)
    worst = 0.0
    for name, arr in params.arrays().items():
        num = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            lp, _ = loss_and_grad(params, inp, target)
            arr[idx] = old - h
            lm, _ = loss_and_grad(params, inp, target)
            arr[idx] = old
            num[idx] = (lp - lm) / (2 * h)
        rel = np.linalg.norm(grads[name] - num) / max(np.linalg.norm(grads[name]) + np.linalg.norm(num), 1e-300)
        worst = max(worst, rel)
    return worst
