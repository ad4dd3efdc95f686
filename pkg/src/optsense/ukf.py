"""Scaled unscented transform on the state + process-noise vector.

Sigma points are generated from ``blockdiag(Sxx, QQ)`` with the lower
Cholesky factor (columns are the spread directions). Prior and measurement
moments use the weighted outer-product estimator with ``w_cov``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from optsense.enkf import MomentSet, apply_columns
from optsense.errors import DegenerateScaling
from optsense.linalg import cholesky_psd, symmetrize

DEFAULT_ALPHA = 1e-3
DEFAULT_BETA = 2.0
DEFAULT_KAPPA = 0.0


@dataclass(frozen=True)
class SigmaSet:
    points: np.ndarray  # (dim_a, 2 dim_a + 1), column 0 is the mean
    w_mean: np.ndarray
    w_cov: np.ndarray
    alpha: float
    beta: float
    kappa: float
    rho: float

    @property
    def dim_a(self) -> int:
        return self.points.shape[0]


def ukf_weights(n_a: int, alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA,
                kappa: float = DEFAULT_KAPPA):
    """Mean/covariance weights and ``rho = alpha^2 (n_a + kappa) - n_a``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if n_a < 1:
        raise ValueError("n_a must be >= 1")
    rho = alpha**2 * (n_a + kappa) - n_a
    scale = alpha**2 * (n_a + kappa)  # n_a + rho without the cancellation
    if scale == 0:
        raise DegenerateScaling(f"n_a + rho == 0 for n_a={n_a}, alpha={alpha}, kappa={kappa}")
    # Snap the outer weights to a power-of-two grid that also contains 1, so
    # every partial sum is exact and sum(w_mean) == 1 holds in floating point
    # even when alpha is small and the weights are ~1e6.
    w = 1.0 / (2.0 * scale)
    grid = np.spacing(2.0 * (1.0 + 2 * n_a * abs(w)))
    w = np.round(w / grid) * grid
    w_mean = np.full(2 * n_a + 1, w)
    w_cov = w_mean.copy()
    w_mean[0] = 1.0 - 2 * n_a * w
    w_cov[0] = w_mean[0] + (1.0 - alpha**2 + beta)
    return w_mean, w_cov, rho


def generate_sigma(mean_a: np.ndarray, cov_a: np.ndarray, alpha: float = DEFAULT_ALPHA,
                   beta: float = DEFAULT_BETA, kappa: float = DEFAULT_KAPPA,
                   jitter: float = 0.0) -> SigmaSet:
    mean_a = np.asarray(mean_a, dtype=float)
    n_a = mean_a.size
    w_mean, w_cov, rho = ukf_weights(n_a, alpha, beta, kappa)
    cov_a = symmetrize(cov_a)
    if np.any(cov_a):
        L = cholesky_psd((n_a + rho) * cov_a, jitter)
    else:
        L = np.zeros((n_a, n_a))
    points = np.hstack([mean_a[:, None], mean_a[:, None] + L, mean_a[:, None] - L])
    return SigmaSet(points, w_mean, w_cov, alpha, beta, kappa, rho)


def augment(mean: np.ndarray, cov: np.ndarray, QQ: np.ndarray):
    """Augmented mean/covariance ``[X; W]``; the noise part is dropped when ``QQ == 0``."""
    if not np.any(QQ):
        return np.asarray(mean, float), symmetrize(cov)
    mean_a = np.concatenate([mean, np.zeros(QQ.shape[0])])
    return mean_a, sla.block_diag(symmetrize(cov), symmetrize(QQ))


def weighted_moments(P: np.ndarray, w_mean: np.ndarray, w_cov: np.ndarray):
    mean = P @ w_mean
    d = P - mean[:, None]
    return mean, symmetrize((d * w_cov) @ d.T)


def ukf_predict(sigma: SigmaSet, model, k: int):
    """Propagate sigma points through ``model.F``.

    Returns ``(prior_mean, prior_cov, propagated_points)``.
    """
    nq = model.nq
    pts = sigma.points
    if sigma.dim_a == nq:
        W = np.zeros((model.nwq, pts.shape[1]))
    elif sigma.dim_a == nq + model.nwq:
        W = pts[nq:]
    else:
        raise ValueError(f"sigma dimension {sigma.dim_a} does not match model ({nq})")
    prop = np.column_stack([model.F(k, pts[:nq, i], W[:, i]) for i in range(pts.shape[1])])
    mean, cov = weighted_moments(prop, sigma.w_mean, sigma.w_cov)
    return mean, cov, prop


def ukf_measurement_moments(points: np.ndarray, w_mean: np.ndarray, w_cov: np.ndarray,
                            h) -> MomentSet:
    Y = apply_columns(h, points)
    x_mean = points @ w_mean
    y_mean = Y @ w_mean
    dX = points - x_mean[:, None]
    dY = Y - y_mean[:, None]
    return MomentSet(
        mean=x_mean,
        sigma_xx=symmetrize((dX * w_cov) @ dX.T),
        sigma_xy=(dX * w_cov) @ dY.T,
        sigma_yy=symmetrize((dY * w_cov) @ dY.T),
        kind="prior",
        y_mean=y_mean,
    )
