"""Feed-forward ReLU network trained with Adam and early stopping."""
from __future__ import annotations

import numpy as np

from .._utils import rng_for
from .base import BaseRegressor, warn_not_converged


def _forward(params, X):
    acts = [X]
    h = X
    n_layers = len(params) // 2
    for layer in range(n_layers):
        W, b = params[2 * layer], params[2 * layer + 1]
        h = h @ W + b
        if layer < n_layers - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def loss_and_grads(params, X, y, alpha):
    """Half mean squared error plus ``alpha/(2n) * sum ||W||^2`` and its gradient."""
    n = X.shape[0]
    acts = _forward(params, X)
    out = acts[-1][:, 0]
    diff = out - y
    weights = params[0::2]
    loss = 0.5 * np.mean(diff * diff) + 0.5 * alpha * sum((W * W).sum() for W in weights) / n
    grads = [None] * len(params)
    delta = diff[:, None] / n
    for layer in range(len(params) // 2 - 1, -1, -1):
        W = params[2 * layer]
        grads[2 * layer] = acts[layer].T @ delta + alpha * W / n
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ W.T) * (acts[layer] > 0)
    return float(loss), grads


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        lr = self.lr * np.sqrt(1 - self.b2 ** self.t) / (1 - self.b1 ** self.t)
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= lr * m / (np.sqrt(v) + self.eps)


def gradient_check(params, X, y, alpha, n_coords=40, eps=1e-6, rng=None) -> float:
    """Relative error ``||g - g_fd|| / (||g|| + ||g_fd||)`` between analytic
    and central-difference gradients on a random sample of coordinates from
    each parameter array."""
    rng = rng or np.random.default_rng(0)
    params = [p.copy() for p in params]
    _, grads = loss_and_grads(params, X, y, alpha)
    analytic, numeric = [], []
    for p, g in zip(params, grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in rng.choice(flat.size, min(n_coords, flat.size), replace=False):
            old = flat[i]
            flat[i] = old + eps
            lp, _ = loss_and_grads(params, X, y, alpha)
            flat[i] = old - eps
            lm, _ = loss_and_grads(params, X, y, alpha)
            flat[i] = old
            numeric.append((lp - lm) / (2 * eps))
            analytic.append(gflat[i])
    a, f = np.array(analytic), np.array(numeric)
    denom = np.linalg.norm(a) + np.linalg.norm(f)
    return float(np.linalg.norm(a - f) / denom) if denom > 0 else 0.0


class MLPRegressor(BaseRegressor):
    """Two hidden ReLU layers, Adam, early stopping on a held-out split.

    The target is standardized internally. Training stops when the
    validation loss has not improved for ``n_iter_no_change`` epochs and the
    best weights seen are restored.
    """

    _fitted_attrs = ("coefs_", "y_mean_", "y_scale_", "n_iter_", "converged_", "best_val_loss_")

    def __init__(self, hidden_layer_sizes=(128, 64), alpha: float = 1e-4, learning_rate_init: float = 1e-3,
                 batch_size: int = 32, max_iter: int = 500, n_iter_no_change: int = 20,
                 validation_fraction: float = 0.1, check_gradients: bool = True, random_state: int = 0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.alpha = alpha
        self.learning_rate_init = learning_rate_init
        self.batch_size = batch_size
        self.max_iter = max_iter
        self.n_iter_no_change = n_iter_no_change
        self.validation_fraction = validation_fraction
        self.check_gradients = check_gradients
        self.random_state = random_state

    def _init(self, p, rng):
        sizes = [p, *[int(h) for h in self.hidden_layer_sizes], 1]
        params = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            params.append(rng.uniform(-bound, bound, size=fan_out))
        return params

    def _fit(self, X, y):
        n, p = X.shape
        rng = rng_for(self.random_state, "mlp")
        self.y_mean_ = float(y.mean())
        std = float(y.std())
        self.y_scale_ = std if std > 0 else 1.0
        params = self._init(p, rng)
        if std == 0:
            # constant target: zero output layer, prediction is the mean
            params[-2][:] = 0.0
            params[-1][:] = 0.0
            self.coefs_, self.n_iter_, self.converged_, self.best_val_loss_ = params, 0, True, 0.0
            return
        ys = (y - self.y_mean_) / self.y_scale_
        if self.check_gradients:
            k = min(5, n)
            err = gradient_check(params, X[:k], ys[:k], float(self.alpha), rng=rng_for(self.random_state, "gradcheck"))
            assert err <= 1e-4, f"MLP gradient check failed (relative error {err:.2e})"

        n_val = int(np.floor(self.validation_fraction * n))
        perm = rng.permutation(n)
        if n_val >= 1 and n - n_val >= 1:
            val, tr = perm[:n_val], perm[n_val:]
        else:
            val, tr = perm, perm
        Xt, yt, Xv, yv = X[tr], ys[tr], X[val], ys[val]
        opt = Adam(params, float(self.learning_rate_init))
        bs = max(1, min(int(self.batch_size), len(tr)))
        best, best_params, stall = np.inf, [q.copy() for q in params], 0
        epoch = 0
        converged = False
        for epoch in range(1, int(self.max_iter) + 1):
            order = rng.permutation(len(tr))
            for s in range(0, len(tr), bs):
                b = order[s:s + bs]
                _, grads = loss_and_grads(params, Xt[b], yt[b], float(self.alpha))
                opt.step(params, grads)
            out = _forward(params, Xv)[-1][:, 0]
            vloss = float(np.mean((out - yv) ** 2))
            if vloss < best - 1e-10:
                best, best_params, stall = vloss, [q.copy() for q in params], 0
            else:
                stall += 1
                if stall >= int(self.n_iter_no_change):
                    converged = True
                    break
        self.coefs_ = best_params
        self.n_iter_ = epoch
        self.best_val_loss_ = best
        self.converged_ = converged
        if not converged:
            warn_not_converged("MLP", f"{epoch} epochs without early stop")

    def _predict(self, X):
        return _forward(self.coefs_, X)[-1][:, 0] * self.y_scale_ + self.y_mean_
