"""Full-covariance Gaussian mixture EM for low-dimensional latent scores.

Small and self-contained: k-means++ style seeding, multiple restarts
keeping the best likelihood, and a relative trace ridge on each component
covariance. Collapsed components are re-seeded from random data points a
bounded number of times before the fit is declared failed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FitDivergedError

_LOG_2PI = np.log(2.0 * np.pi)

#: Relative diagonal ridge added to every component covariance.
COVARIANCE_RIDGE = 1e-6

#: Re-seeding budget for empty components within one EM run.
REINIT_RETRIES = 3


def logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    return np.log(np.sum(np.exp(a - amax), axis=axis)) + np.squeeze(amax, axis=axis)


@dataclass(frozen=True)
class GaussianMixture:
    """Fitted mixture: weights (C,), means (C, p), covariances (C, p, p)."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    loglik: float
    converged: bool

    @property
    def n_components(self) -> int:
        return self.weights.size


def _log_gaussian(z: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Log density of rows of ``z`` under N(mean, cov)."""
    chol = np.linalg.cholesky(cov)
    delta = np.linalg.solve(chol, (z - mean).T)  # lower-triangular system
    quad = np.sum(delta * delta, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (mean.size * _LOG_2PI + logdet + quad)


def _ridge(cov: np.ndarray) -> np.ndarray:
    p = cov.shape[0]
    return cov + (COVARIANCE_RIDGE * np.trace(cov) / p + 1e-12) * np.eye(p)


def _kmeanspp_centers(z: np.ndarray, n_components: int, rng) -> np.ndarray:
    n = z.shape[0]
    centers = [z[rng.integers(n)]]
    for _ in range(1, n_components):
        d2 = np.min(
            [np.sum((z - c) ** 2, axis=1) for c in centers], axis=0
        )
        total = d2.sum()
        if total > 0:
            probs = d2 / total
            centers.append(z[rng.choice(n, p=probs)])
        else:
            centers.append(z[rng.integers(n)])
    return np.stack(centers)


def _fit_once(z, n_components, rng, max_iter, tol):
    n, p = z.shape
    global_cov = _ridge(np.atleast_2d(np.cov(z.T, ddof=1)))
    means = _kmeanspp_centers(z, n_components, rng)
    covs = np.repeat(global_cov[None], n_components, axis=0)
    weights = np.full(n_components, 1.0 / n_components)

    prev_ll = -np.inf
    converged = False
    reinits = 0
    for _ in range(max_iter):
        log_joint = np.stack(
            [
                np.log(weights[c]) + _log_gaussian(z, means[c], covs[c])
                for c in range(n_components)
            ],
            axis=1,
        )
        norm = logsumexp(log_joint, axis=1)
        ll = float(norm.sum())
        if not np.isfinite(ll):
            raise FitDivergedError("mixture log-likelihood is not finite")
        resp = np.exp(log_joint - norm[:, None])

        nk = resp.sum(axis=0)
        empty = np.flatnonzero(nk < 1e-10)
        if empty.size:
            if reinits >= REINIT_RETRIES:
                raise FitDivergedError(
                    f"component(s) {empty.tolist()} stayed empty after "
                    f"{REINIT_RETRIES} re-seeds"
                )
            reinits += 1
            for c in empty:
                means[c] = z[rng.integers(n)]
                covs[c] = global_cov
            prev_ll = -np.inf
            continue

        weights = nk / n
        for c in range(n_components):
            means[c] = resp[:, c] @ z / nk[c]
            delta = z - means[c]
            covs[c] = _ridge((resp[:, c] * delta.T) @ delta / nk[c])

        if ll - prev_ll <= tol * (1.0 + abs(ll)) and np.isfinite(prev_ll):
            converged = True
            break
        prev_ll = ll
    return GaussianMixture(weights, means, covs, ll, converged)


def fit_gmm(z: np.ndarray, n_components: int, rng_seed,
            n_restarts: int = 10, max_iter: int = 200,
            tol: float = 1e-7) -> GaussianMixture:
    """Fit a full-covariance Gaussian mixture to rows of ``z`` by EM.

    Runs ``n_restarts`` seeded EM fits and keeps the best final
    log-likelihood. Deterministic given ``rng_seed``.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 1:
        raise ValueError("z must be a non-empty (N, p) matrix")
    n_components = int(n_components)
    if not 1 <= n_components <= z.shape[0]:
        raise ValueError("need 1 <= n_components <= N")
    if not isinstance(rng_seed, np.random.SeedSequence):
        rng_seed = np.random.SeedSequence(rng_seed)
    best = None
    for child in rng_seed.spawn(n_restarts):
        fit = _fit_once(z, n_components, np.random.default_rng(child),
                        max_iter, tol)
        if best is None or fit.loglik > best.loglik:
            best = fit
    return best


def gmm_responsibilities(mixture: GaussianMixture, z: np.ndarray) -> np.ndarray:
    """Posterior component probabilities for rows of ``z``; rows sum to 1."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    log_joint = np.stack(
        [
            np.log(mixture.weights[c])
            + _log_gaussian(z, mixture.means[c], mixture.covariances[c])
            for c in range(mixture.n_components)
        ],
        axis=1,
    )
    return np.exp(log_joint - logsumexp(log_joint, axis=1)[:, None])
