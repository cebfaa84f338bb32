"""Dirichlet log-density and weighted maximum-likelihood estimation."""
from __future__ import annotations

import numpy as np
from scipy.special import digamma, gammaln, polygamma

ALPHA_MIN = 1e-4
ALPHA_MAX = 1e5


def dirichlet_log_density(x, alpha):
    """Log-density of ``Dirichlet(alpha)`` at ``x``.

    Broadcasts over leading axes. Every component of ``x`` must be strictly
    positive: clamp boundary vectors before calling.
    """
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(x <= 0):
        raise ValueError("Dirichlet density needs strictly positive components; clamp x first")
    if np.any(alpha <= 0):
        raise ValueError("Dirichlet concentration parameters must be positive")
    log_norm = gammaln(alpha.sum(axis=-1)) - gammaln(alpha).sum(axis=-1)
    return log_norm + ((alpha - 1.0) * np.log(x)).sum(axis=-1)


def clamp_simplex(x, eps=1e-3):
    """Clip components to ``[eps, 1]`` and renormalise along the last axis."""
    x = np.clip(np.asarray(x, dtype=float), eps, 1.0)
    return x / x.sum(axis=-1, keepdims=True)


def inverse_digamma(y, n_newton=6):
    """Solve ``digamma(x) = y`` elementwise (Minka's initialisation + Newton)."""
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        x = np.where(y >= -2.22, np.exp(y) + 0.5, -1.0 / (y - digamma(1.0)))
    for _ in range(n_newton):
        x = x - (digamma(x) - y) / polygamma(1, x)
    return x


def dirichlet_expected_loglik(alpha, weight, sum_log):
    """Weighted Dirichlet log-likelihood from sufficient statistics.

    ``weight`` is the total sample weight and ``sum_log`` the weighted sum of
    ``log x``; both broadcast with the leading axes of ``alpha``.
    """
    alpha = np.asarray(alpha, dtype=float)
    log_norm = gammaln(alpha.sum(axis=-1)) - gammaln(alpha).sum(axis=-1)
    return weight * log_norm + ((alpha - 1.0) * sum_log).sum(axis=-1)


def moment_match(mean, mean_sq):
    """Starting concentrations from first and second moments.

    The precision ``(m - m2) / (m2 - m^2)`` is computed per component and
    the median over well-defined components is used.
    """
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(mean_sq, dtype=float) - mean ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        prec = (mean - mean_sq) / var
    prec = np.where((var > 1e-12) & np.isfinite(prec) & (prec > 0), prec, np.nan)
    s = np.nanmedian(np.where(np.all(np.isnan(prec), axis=-1, keepdims=True), 1.0, prec), axis=-1)
    s = np.clip(s, 1e-2, ALPHA_MAX / 10)
    return np.clip(s[..., None] * mean, ALPHA_MIN, ALPHA_MAX)


def dirichlet_mle(weight, sum_log, sum_x, sum_x2, max_iter=200, tol=1e-8):
    """Weighted Dirichlet MLE by the digamma fixed point.

    Iterates ``digamma(a_k) = digamma(sum(a)) + mean_log_k`` from a
    moment-matched start. All statistics may carry leading batch axes;
    ``weight`` has the batch shape and must be positive.
    """
    weight = np.asarray(weight, dtype=float)[..., None]
    mean_log = sum_log / weight
    alpha = moment_match(sum_x / weight, sum_x2 / weight)
    for _ in range(max_iter):
        new = inverse_digamma(digamma(alpha.sum(axis=-1, keepdims=True)) + mean_log)
        new = np.clip(new, ALPHA_MIN, ALPHA_MAX)
        delta = np.max(np.abs(new - alpha) / alpha)
        alpha = new
        if delta < tol:
            break
    return alpha


def fit_dirichlet(samples, weights=None, max_iter=200, tol=1e-8):
    """Maximum-likelihood concentrations for ``(n, T)`` samples on the simplex."""
    x = np.asarray(samples, dtype=float)
    w = np.ones(len(x)) if weights is None else np.asarray(weights, dtype=float)
    return dirichlet_mle(
        w.sum(),
        w @ np.log(x),
        w @ x,
        w @ x ** 2,
        max_iter=max_iter,
        tol=tol,
    )
