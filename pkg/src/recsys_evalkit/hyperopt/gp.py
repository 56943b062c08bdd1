"""Gaussian-process surrogate and Expected Improvement."""

from __future__ import annotations

import logging

import numpy as np
import scipy.linalg as sla
from scipy.stats import norm

_log = logging.getLogger(__name__)

LENGTH_SCALES = np.geomspace(0.05, 2.0, 16)
JITTER = 1e-6
MAX_JITTER = 1e-2


def matern52(A, B, length_scale: float, variance: float = 1.0) -> np.ndarray:
    d = np.sqrt(np.maximum(((A[:, None, :] - B[None, :, :]) ** 2).sum(-1), 0.0)) / length_scale
    r = np.sqrt(5.0) * d
    return variance * (1.0 + r + r * r / 3.0) * np.exp(-r)


class GaussianProcess:
    """Zero-mean GP with a Matérn-5/2 kernel on standardised targets.

    If `length_scale` is None it is picked from ``LENGTH_SCALES`` by maximum
    marginal likelihood. The diagonal jitter is escalated tenfold on
    Cholesky failure up to ``MAX_JITTER``.
    """

    def __init__(self, length_scale: float | None = None, noise: float = JITTER, standardize: bool = True):
        self.length_scale = length_scale
        self.noise = noise
        self.standardize = standardize

    def fit(self, X, y) -> GaussianProcess:
        X = np.atleast_2d(np.asarray(X, np.float64))
        y = np.asarray(y, np.float64)
        if self.standardize:
            self.y_mean_ = float(y.mean())
            sd = float(y.std())
            self.y_std_ = sd if sd > 0 else 1.0
        else:
            self.y_mean_, self.y_std_ = 0.0, 1.0
        z = (y - self.y_mean_) / self.y_std_
        candidates = [self.length_scale] if self.length_scale is not None else list(LENGTH_SCALES)
        best = None
        for ls in candidates:
            fitted = self._factor(X, z, ls)
            if fitted is None:
                continue
            chol, alpha, noise = fitted
            lml = -0.5 * z @ alpha - np.log(np.diag(chol)).sum()
            if best is None or lml > best[0]:
                best = (lml, ls, chol, alpha, noise)
        if best is None:
            raise np.linalg.LinAlgError("GP kernel matrix not positive definite at any jitter level")
        _, self.length_scale_, self.chol_, self.alpha_, self.noise_ = best
        self.X_ = X
        return self

    def _factor(self, X, z, ls):
        K = matern52(X, X, ls)
        noise = self.noise
        while noise <= MAX_JITTER:
            try:
                chol = sla.cholesky(K + noise * np.eye(len(X)), lower=True)
                alpha = sla.cho_solve((chol, True), z)
                return chol, alpha, noise
            except np.linalg.LinAlgError:
                _log.debug("GP cholesky failed at jitter %g", noise)
                noise = JITTER if noise <= 0 else noise * 10
        return None

    def predict(self, Xs, return_std=True):
        """Posterior mean and standard deviation in the original target units."""
        Xs = np.atleast_2d(np.asarray(Xs, np.float64))
        Ks = matern52(Xs, self.X_, self.length_scale_)
        mu = Ks @ self.alpha_
        v = sla.solve_triangular(self.chol_, Ks.T, lower=True)
        var = np.maximum(1.0 - (v * v).sum(axis=0), 0.0)
        mu = self.y_mean_ + self.y_std_ * mu
        if not return_std:
            return mu
        return mu, self.y_std_ * np.sqrt(var)


def expected_improvement(mu, sigma, best: float, xi: float = 0.0) -> np.ndarray:
    """EI for maximisation; zero wherever the posterior is certain."""
    mu = np.asarray(mu, np.float64)
    sigma = np.asarray(sigma, np.float64)
    imp = mu - best - xi
    out = np.maximum(imp, 0.0)
    pos = sigma > 0
    z = imp[pos] / sigma[pos]
    out[pos] = imp[pos] * norm.cdf(z) + sigma[pos] * norm.pdf(z)
    return np.maximum(out, 0.0)
