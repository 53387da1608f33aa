"""Central finite-difference check of the MLP's analytic gradients."""

import numpy as np

from asrlab import mlp


def random_network(seed):
    rng = np.random.default_rng(seed)
    K, H, V = (int(v) for v in rng.integers(2, 7, 3))
    model = mlp.init_model(mlp.MlpConfig(n_input=K, n_output=V, n_hidden=H, seed=seed, init_scale=1.0))
    model.b1[:] = rng.uniform(-1, 1, H)
    model.b2[:] = rng.uniform(-1, 1, V)
    X = rng.standard_normal((5, K))
    y = rng.integers(0, V, 5)
    return model, X, y


def max_relative_error(model, X, y, h=1e-5):
    _, grads = mlp.loss_and_grad(model, X, y)
    worst = 0.0
    for p, g in zip(model.params(), grads):
        for i in np.ndindex(p.shape):
            orig = p[i]
            p[i] = orig + h
            up = mlp.loss_and_grad(model, X, y)[0]
            p[i] = orig - h
            down = mlp.loss_and_grad(model, X, y)[0]
            p[i] = orig
            num = (up - down) / (2 * h)
            denom = max(abs(g[i]), abs(num))
            if denom > 0:
                worst = max(worst, abs(g[i] - num) / denom)
    return worst
