"""Ensemble Kalman filter on a (possibly stacked) model.

Ensembles are ``(dim, N)`` arrays, one member per column. Sample moments use
the unbiased ``1/(N-1)`` normalization, written through the centering Gram
matrix ``A = C C / (N - 1)`` with ``C = I - 1 1^T / N``.

Measurement anomalies are taken about the mean of the mapped members,
``mean(h(X))``, so ``sigma_yy`` is PSD by construction and the moments are
exact for linear ``h``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from optsense.errors import SingularInnovation
from optsense.linalg import psd_sqrt, symmetrize

ACTIVE_THRESHOLD = 1e-9
DEFAULT_INFLATION = 1.02

Measurement = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MomentSet:
    """Mean and second moments of a state/measurement sample."""

    mean: np.ndarray
    sigma_xx: np.ndarray
    sigma_xy: np.ndarray
    sigma_yy: np.ndarray
    kind: str = "prior"
    y_mean: np.ndarray | None = None

    @property
    def nx(self) -> int:
        return self.sigma_xx.shape[0]

    @property
    def ny(self) -> int:
        return self.sigma_yy.shape[0]

    def restrict(self, sensors) -> "MomentSet":
        """Moments seen by a subset of sensors (indices into the measurement)."""
        idx = np.asarray(sensors, dtype=int)
        return MomentSet(
            mean=self.mean,
            sigma_xx=self.sigma_xx,
            sigma_xy=self.sigma_xy[:, idx],
            sigma_yy=self.sigma_yy[np.ix_(idx, idx)],
            kind=self.kind,
            y_mean=None if self.y_mean is None else self.y_mean[idx],
        )


def _check_ensemble(members: np.ndarray) -> np.ndarray:
    X = np.asarray(members, dtype=float)
    if X.ndim != 2:
        raise ValueError("an ensemble is a (dim, N) array")
    if X.shape[1] < 2:
        raise ValueError("an ensemble needs at least two members")
    return X


def apply_columns(h: Measurement, X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.asarray(h(X[:, i]), dtype=float) for i in range(X.shape[1])])


def centering_gram(N: int) -> np.ndarray:
    """``A = C C / (N - 1)`` with ``C = I - 1 1^T / N``."""
    if N < 2:
        raise ValueError("N must be >= 2")
    C = np.eye(N) - np.full((N, N), 1.0 / N)
    return C @ C / (N - 1)


def ensemble_moments(members: np.ndarray, h: Measurement) -> MomentSet:
    X = _check_ensemble(members)
    N = X.shape[1]
    Y = apply_columns(h, X)
    mean = X.mean(axis=1)
    y_mean = Y.mean(axis=1)
    dX = X - mean[:, None]
    dY = Y - y_mean[:, None]
    return MomentSet(
        mean=mean,
        sigma_xx=symmetrize(dX @ dX.T / (N - 1)),
        sigma_xy=dX @ dY.T / (N - 1),
        sigma_yy=symmetrize(dY @ dY.T / (N - 1)),
        kind="prior",
        y_mean=y_mean,
    )


def sample_gaussian(rng: np.random.Generator, cov: np.ndarray, count: int) -> np.ndarray:
    """``count`` zero-mean draws with covariance ``cov`` as columns."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    dim = cov.shape[0]
    if not np.any(cov):
        return np.zeros((dim, count))
    return psd_sqrt(cov) @ rng.standard_normal((dim, count))


def propagate_ensemble(members: np.ndarray, model, k: int, rng: np.random.Generator) -> np.ndarray:
    """Push every member through ``model.F(k, ., W)`` with its own noise draw."""
    X = _check_ensemble(members)
    W = sample_gaussian(rng, model.QQ_of_k(k), X.shape[1])
    return np.column_stack([model.F(k, X[:, i], W[:, i]) for i in range(X.shape[1])])


def active_sensors(lam: np.ndarray, threshold: float = ACTIVE_THRESHOLD) -> np.ndarray:
    return np.flatnonzero(np.asarray(lam, dtype=float) > threshold)


def _gain(moments: MomentSet, lam: np.ndarray, act: np.ndarray) -> np.ndarray:
    """Kalman gain ``Sxy (Syy + R)^-1`` over the active sensors."""
    S = moments.sigma_yy[np.ix_(act, act)] + np.diag(1.0 / lam[act])
    try:
        c = sla.cho_factor(symmetrize(S), lower=True)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise SingularInnovation("Sigma_yy + R is not positive definite") from exc
    return sla.cho_solve(c, moments.sigma_xy[:, act].T).T


def enkf_update(
    members: np.ndarray,
    moments: MomentSet,
    lam: np.ndarray,
    y_obs: np.ndarray,
    rng: np.random.Generator,
    h: Measurement,
    active_threshold: float = ACTIVE_THRESHOLD,
    perturb: bool = True,
) -> np.ndarray:
    """Perturbed-observation update.

    Sensors with ``lam[i] <= active_threshold`` carry infinite noise variance
    and are dropped. ``perturb=False`` suppresses the synthetic observation
    noise (used by tests).
    """
    X = _check_ensemble(members)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("precisions must be nonnegative")
    act = active_sensors(lam, active_threshold)
    if act.size == 0:
        return X.copy()
    K = _gain(moments, lam, act)
    Y = apply_columns(h, X)[act]
    D = np.asarray(y_obs, dtype=float)[act, None] - Y
    if perturb:
        D = D + rng.standard_normal(D.shape) / np.sqrt(lam[act])[:, None]
    return X + K @ D


def inflate(members: np.ndarray, rho_infl: float = DEFAULT_INFLATION) -> np.ndarray:
    """Scale anomalies about the ensemble mean by ``rho_infl``."""
    if rho_infl < 1:
        raise ValueError("inflation factor must be >= 1")
    X = _check_ensemble(members)
    mean = X.mean(axis=1, keepdims=True)
    return mean + rho_infl * (X - mean)


def posterior_cov_update(
    moments: MomentSet, lam: np.ndarray, active_threshold: float = ACTIVE_THRESHOLD
) -> np.ndarray:
    """``Sxx - Sxy (Syy + R)^-1 Sxy^T`` with ``R = diag(1/lam)`` on active sensors.

    ``lam[i] = inf`` is allowed and means a noise-free sensor.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("precisions must be nonnegative")
    act = active_sensors(lam, active_threshold)
    if act.size == 0:
        return moments.sigma_xx.copy()
    K = _gain(moments, lam, act)
    return symmetrize(moments.sigma_xx - K @ moments.sigma_xy[:, act].T)


def mean_update(
    moments: MomentSet, lam: np.ndarray, y_obs: np.ndarray,
    active_threshold: float = ACTIVE_THRESHOLD,
) -> np.ndarray:
    """Posterior mean ``mu + K (y - y_mean)`` for moment-based (UKF) filters."""
    lam = np.asarray(lam, dtype=float)
    act = active_sensors(lam, active_threshold)
    if act.size == 0:
        return moments.mean.copy()
    K = _gain(moments, lam, act)
    return moments.mean + K @ (np.asarray(y_obs, float)[act] - moments.y_mean[act])
