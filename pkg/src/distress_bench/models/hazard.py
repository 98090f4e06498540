"""Discrete-time logistic hazard model with l1 (LASSO) or l2 (ridge) penalty.

Objective (intercept never penalized)::

    sum_i [ -y_i * eta_i + log(1 + exp(eta_i)) ] + lam * P(beta)
    eta_i = b0 + x_i' beta,  P = sum |beta_k|  or  sum beta_k^2

Features are the standardized columns of a :class:`Dataset`.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..errors import ConvergenceError, DataError


def _nll(eta, y):
    return float(np.sum(np.logaddexp(0.0, eta) - y * eta))


def objective(b0, beta, Z, y, lam, penalty):
    eta = b0 + Z @ beta
    pen = np.abs(beta).sum() if penalty == "l1" else (beta ** 2).sum()
    return _nll(eta, y) + lam * float(pen)


def kkt_violation(b0, beta, Z, y, lam, penalty="l1"):
    """Largest violation of the first-order optimality conditions."""
    p = expit(b0 + Z @ beta)
    g = Z.T @ (p - y)
    viol = [abs(float((p - y).sum()))]
    if penalty == "l1":
        zero = beta == 0
        viol.append(float(np.max(np.maximum(np.abs(g[zero]) - lam, 0.0), initial=0.0)))
        viol.append(float(np.max(np.abs(g[~zero] + lam * np.sign(beta[~zero])), initial=0.0)))
    else:
        viol.append(float(np.max(np.abs(g + 2 * lam * beta), initial=0.0)))
    return max(viol)


def _start(y):
    ybar = float(np.clip(y.mean(), 1e-12, 1 - 1e-12))
    return float(np.log(ybar / (1 - ybar)))


def _kkt_tol(n):
    return 1e-9 * n + 1e-8


def _polish_l1(b0, beta, Z, y, lam, obj, max_iter=50):
    """Newton on the smooth problem with the current sign pattern held fixed.

    Returns the improved (b0, beta, obj), or the input when a coefficient
    would change sign or no progress is possible.
    """
    active = np.flatnonzero(beta)
    signs = np.sign(beta[active])
    Za = np.column_stack([np.ones(len(Z)), Z[:, active]])
    theta = np.r_[b0, beta[active]]
    lin = np.r_[0.0, lam * signs]

    def full(th):
        out = np.zeros_like(beta)
        out[active] = th[1:]
        return th[0], out

    f = obj
    for _ in range(max_iter):
        prob = expit(Za @ theta)
        grad = Za.T @ (prob - y) + lin
        if np.max(np.abs(grad)) <= 1e-13 * max(1.0, len(y)):
            break
        H = (Za * (prob * (1 - prob))[:, None]).T @ Za
        H[np.diag_indices_from(H)] += 1e-12
        step = np.linalg.solve(H, grad)
        t = 1.0
        while t >= 1e-10:
            cand = theta - t * step
            if np.all(np.sign(cand[1:]) == signs):
                fc = objective(*full(cand), Z, y, lam, "l1")
                if fc <= f:
                    break
            t *= 0.5
        if t < 1e-10:
            break
        theta, f = cand, fc
    nb0, nbeta = full(theta)
    return nb0, nbeta, f


def fit_l1(Z, y, lam, max_iter=200, max_inner=2000):
    """Proximal Newton: each outer step solves the weighted least-squares
    majorizer by cyclic coordinate descent with soft-thresholding, followed by
    a backtracking step on the true objective.  Inner solves are inexact early
    on (tolerance tied to the current KKT violation); once a sign pattern
    emerges a Newton polish on the active set finishes the job."""
    n, p = Z.shape
    b0 = _start(y)
    beta = np.zeros(p)
    obj = objective(b0, beta, Z, y, lam, "l1")
    tol = _kkt_tol(n)
    for _ in range(max_iter):
        viol = kkt_violation(b0, beta, Z, y, lam, "l1")
        if viol <= tol:
            return b0, beta, obj
        eta = b0 + Z @ beta
        prob = expit(eta)
        w = np.maximum(prob * (1 - prob), 1e-10)
        r = (y - prob) / w
        xw2 = (w[:, None] * Z * Z).sum(axis=0)
        nb0, nbeta = b0, beta.copy()
        wsum = w.sum()
        inner_tol = max(1e-24 * max(1.0, wsum), min(1e-4, 1e-2 * viol * viol))
        for _sweep in range(max_inner):
            d0 = float(w @ r) / wsum
            nb0 += d0
            r -= d0
            change = d0 * d0 * wsum
            for j in range(p):
                if xw2[j] <= 0:
                    continue
                old = nbeta[j]
                rho = float((w * Z[:, j]) @ r) + xw2[j] * old
                new = np.sign(rho) * max(abs(rho) - lam, 0.0) / xw2[j]
                if new != old:
                    r -= Z[:, j] * (new - old)
                    nbeta[j] = new
                    change = max(change, xw2[j] * (new - old) ** 2)
            if change <= inner_tol:
                break
        d0, dbeta = nb0 - b0, nbeta - beta
        t = 1.0
        while True:
            cand = objective(b0 + t * d0, beta + t * dbeta, Z, y, lam, "l1")
            if cand <= obj + 1e-14 * abs(obj) or t < 1e-10:
                break
            t *= 0.5
        if t < 1e-10:
            break
        b0, beta = b0 + t * d0, beta + t * dbeta
        if t == 1.0:
            beta = nbeta
        obj = cand
        pb0, pbeta, pobj = _polish_l1(b0, beta, Z, y, lam, obj)
        if pobj <= obj:
            b0, beta, obj = pb0, pbeta, pobj
    if kkt_violation(b0, beta, Z, y, lam, "l1") <= tol:
        return b0, beta, obj
    raise ConvergenceError(f"l1 hazard model did not converge (objective {obj:.10g})", obj)


def fit_l2(Z, y, lam, max_iter=200):
    """Damped Newton on the ridge-penalized likelihood."""
    n, p = Z.shape
    Zt = np.column_stack([np.ones(n), Z])
    theta = np.zeros(p + 1)
    theta[0] = _start(y)
    pen = np.r_[0.0, np.full(p, 2.0 * lam)]

    def obj(th):
        return objective(th[0], th[1:], Z, y, lam, "l2")

    f = obj(theta)
    tol = _kkt_tol(n)
    for _ in range(max_iter):
        prob = expit(Zt @ theta)
        grad = Zt.T @ (prob - y) + pen * theta
        if np.max(np.abs(grad)) <= tol:
            return theta[0], theta[1:], f
        w = prob * (1 - prob)
        H = (Zt * w[:, None]).T @ Zt + np.diag(pen)
        H[np.diag_indices_from(H)] += 1e-12
        step = np.linalg.solve(H, grad)
        t = 1.0
        while True:
            cand = obj(theta - t * step)
            if cand <= f + 1e-14 * abs(f) or t < 1e-10:
                break
            t *= 0.5
        if t < 1e-10:
            break
        theta = theta - t * step
        f = cand
    prob = expit(Zt @ theta)
    grad = Zt.T @ (prob - y) + pen * theta
    if np.max(np.abs(grad)) <= tol:
        return theta[0], theta[1:], f
    raise ConvergenceError(f"l2 hazard model did not converge (objective {f:.10g})", f)


def train_penalized_hazard(Z, y, penalty: str, lam: float):
    """Fit the penalized hazard model on standardized ``Z``; returns (b0, beta, objective)."""
    if penalty not in ("l1", "l2"):
        raise ValueError(f"penalty must be 'l1' or 'l2', got {penalty!r}")
    if lam < 0:
        raise ValueError("lam must be non-negative")
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.isnan(Z).any():
        raise DataError("hazard model requires fully imputed inputs (missing values found)")
    if penalty == "l1":
        return fit_l1(Z, y, lam)
    return fit_l2(Z, y, lam)
