"""Feed-forward networks with ReLU hidden layers and a sigmoid output."""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..errors import DataError, NumericalError

NN3 = (32, 16, 8)
NN5 = (64, 32, 16, 8, 4)


def relu(x):
    return np.maximum(x, 0.0)


def init_params(n_inputs, layers, rng, final_init="normal"):
    """He-normal hidden weights; the output layer is Glorot-normal or zeros."""
    sizes = [n_inputs, *layers, 1]
    params = []
    for k in range(len(sizes) - 1):
        fan_in, fan_out = sizes[k], sizes[k + 1]
        last = k == len(sizes) - 2
        if last and final_init == "zeros":
            W = np.zeros((fan_in, fan_out))
        elif last:
            W = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / (fan_in + fan_out))
        else:
            W = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
        params.append([W, np.zeros(fan_out)])
    return params


def forward(params, X):
    acts = [X]
    h = X
    for W, b in params[:-1]:
        h = relu(h @ W + b)
        acts.append(h)
    W, b = params[-1]
    return acts, (h @ W + b)[:, 0]


def predict_proba(params, X):
    return expit(forward(params, X)[1])


def loss_and_grad(params, X, y):
    """Mean binary cross-entropy and its gradient by backpropagation."""
    acts, logit = forward(params, X)
    n = len(X)
    loss = float(np.mean(np.logaddexp(0.0, logit) - y * logit))
    delta = ((expit(logit) - y) / n)[:, None]
    grads = [None] * len(params)
    for k in range(len(params) - 1, -1, -1):
        W, _b = params[k]
        a = acts[k]
        grads[k] = [a.T @ delta, delta.sum(axis=0)]
        if k:
            delta = (delta @ W.T) * (a > 0)
    return loss, grads


def train_mlp(Z, y, layers=NN3, epochs=30, learning_rate=0.01, batch_size=128, seed=0,
              final_init="normal", momentum=0.9):
    """Mini-batch gradient descent (heavy-ball momentum, fixed learning rate).

    The shuffle order is drawn from ``seed``, so training is deterministic.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.isnan(Z).any():
        raise DataError("neural network requires fully imputed inputs (missing values found)")
    rng = np.random.default_rng(seed)
    params = init_params(Z.shape[1], layers, rng, final_init)
    n = len(Z)
    velocity = [[np.zeros_like(W), np.zeros_like(b)] for W, b in params]
    history = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            rows = order[start:start + batch_size]
            loss, grads = loss_and_grad(params, Z[rows], y[rows])
            if not np.isfinite(loss):
                raise NumericalError(f"network training diverged at epoch {epoch}")
            for (W, b), (vW, vb), (gW, gb) in zip(params, velocity, grads):
                vW *= momentum
                vW -= learning_rate * gW
                vb *= momentum
                vb -= learning_rate * gb
                W += vW
                b += vb
        logit = forward(params, Z)[1]
        history.append(float(np.mean(np.logaddexp(0.0, logit) - y * logit)))
        if not np.isfinite(history[-1]):
            raise NumericalError(f"network training diverged at epoch {epoch}")
    return params, history
