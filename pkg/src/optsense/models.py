"""System models: the base discrete-time system, its q-step stacked form, and
the Lorenz-96 test problem with a logistic measurement.

A base system advances ``x[k+1] = f(k, x[k], w[k])`` and is observed through
``y[k] = h(k, x[k]) + v[k]``. Stacking ``q`` consecutive time points gives a
system with the same shape whose "step" spans a whole window::

    X_k = [x_{kq-q+1}, ..., x_{kq}]
    W_k = [w_{kq}, ..., w_{kq+q-1}]    # the q draws consumed by F_k

Windows never overlap: ``F_k`` reads only the last block of ``X_k`` and
produces all q blocks of ``X_{k+1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
from scipy.special import expit

DynamicsFn = Callable[[int, np.ndarray, np.ndarray], np.ndarray]
MeasurementFn = Callable[[int, np.ndarray], np.ndarray]
CovarianceFn = Callable[[int], np.ndarray]


def _constant(m: np.ndarray) -> CovarianceFn:
    return lambda k: m


@dataclass(frozen=True)
class SystemModel:
    """Discrete-time stochastic system ``x+ = f(k, x, w)``, ``y = h(k, x) + v``.

    ``Q_of_k(k)`` returns the process-noise covariance at base time ``k``.
    The measurement-noise covariance is not part of the model: it is the
    decision variable of the precision problem.
    """

    n: int
    n_w: int
    n_y: int
    f: DynamicsFn
    h: MeasurementFn
    Q_of_k: CovarianceFn
    initial_mean: np.ndarray
    initial_cov: np.ndarray

    def __post_init__(self):
        if min(self.n, self.n_w, self.n_y) < 1:
            raise ValueError("model dimensions must be positive")
        if np.shape(self.initial_mean) != (self.n,):
            raise ValueError("initial_mean must have length n")
        if np.shape(self.initial_cov) != (self.n, self.n):
            raise ValueError("initial_cov must be n x n")


@dataclass(frozen=True)
class AugmentedModel:
    """The q-step, q-shift stacking of a :class:`SystemModel`."""

    base: SystemModel
    q: int
    nq: int = field(init=False)
    nyq: int = field(init=False)
    nwq: int = field(init=False)

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be >= 1")
        object.__setattr__(self, "nq", self.base.n * self.q)
        object.__setattr__(self, "nyq", self.base.n_y * self.q)
        object.__setattr__(self, "nwq", self.base.n_w * self.q)

    def F(self, k: int, X: np.ndarray, W: np.ndarray) -> np.ndarray:
        """Advance window ``k`` to window ``k + 1``."""
        n, n_w, q = self.base.n, self.base.n_w, self.q
        X = np.asarray(X, dtype=float)
        W = np.asarray(W, dtype=float)
        if X.shape != (self.nq,) or W.shape != (self.nwq,):
            raise ValueError("stacked state/noise have the wrong length")
        x = X[-n:]
        out = np.empty(self.nq)
        for j in range(q):
            x = np.asarray(
                self.base.f(k * q + j, x, W[j * n_w:(j + 1) * n_w]), dtype=float
            )
            out[j * n:(j + 1) * n] = x
        return out

    def H(self, k: int, X: np.ndarray) -> np.ndarray:
        """Stacked measurement of window ``k`` (base times kq-q+1 .. kq)."""
        n, n_y, q = self.base.n, self.base.n_y, self.q
        X = np.asarray(X, dtype=float)
        out = np.empty(self.nyq)
        for j in range(q):
            t = k * q - q + 1 + j
            out[j * n_y:(j + 1) * n_y] = self.base.h(t, X[j * n:(j + 1) * n])
        return out

    def QQ_of_k(self, k: int) -> np.ndarray:
        """Block-diagonal covariance of the noise consumed by ``F_k``."""
        return sla.block_diag(
            *[np.atleast_2d(self.base.Q_of_k(k * self.q + j)) for j in range(self.q)]
        )


def build_augmented(base: SystemModel, q: int) -> AugmentedModel:
    return AugmentedModel(base=base, q=int(q))


def selector(q: int, n: int) -> np.ndarray:
    """``M_q = [0, ..., 0, I_n]`` of shape ``(n, n*q)``; picks the last block."""
    if q < 1 or n < 1:
        raise ValueError("q and n must be >= 1")
    m = np.zeros((n, n * q))
    m[:, -n:] = np.eye(n)
    return m


def lorenz96_rhs(x: np.ndarray, F: float) -> np.ndarray:
    """Lorenz-96 tendency ``(x[i+1] - x[i-2]) * x[i-1] - x[i] + F``.

    Works on a state vector or on an ``(Nx, N)`` array of column states.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 4:
        raise ValueError("Lorenz-96 needs at least 4 variables")
    return (
        (np.roll(x, -1, axis=0) - np.roll(x, 2, axis=0)) * np.roll(x, 1, axis=0)
        - x
        + F
    )


def lorenz96_step(x: np.ndarray, dt: float, stages: int, F: float) -> np.ndarray:
    """Apply ``stages`` classical RK4 steps of size ``dt`` (covers ``stages * dt``)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if stages < 1:
        raise ValueError("stages must be >= 1")
    x = np.array(x, dtype=float)
    for _ in range(stages):
        k1 = lorenz96_rhs(x, F)
        k2 = lorenz96_rhs(x + 0.5 * dt * k1, F)
        k3 = lorenz96_rhs(x + 0.5 * dt * k2, F)
        k4 = lorenz96_rhs(x + dt * k3, F)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def sigmoid_measure(x: np.ndarray) -> np.ndarray:
    """Noise-free logistic measurement ``1 / (1 + exp(-x))``, componentwise."""
    return expit(np.asarray(x, dtype=float))


def lorenz96_system(
    Nx: int = 20,
    forcing: float = 8.0,
    dt: float = 0.05,
    stages: int = 20,
    process_cov: np.ndarray | None = None,
    initial_mean: np.ndarray | None = None,
    initial_cov: np.ndarray | None = None,
) -> SystemModel:
    """Lorenz-96 with additive process noise and one logistic sensor per variable.

    ``process_cov`` defaults to zero (no process noise).
    """
    Q = np.zeros((Nx, Nx)) if process_cov is None else np.asarray(process_cov, float)
    mu0 = np.full(Nx, forcing) if initial_mean is None else np.asarray(initial_mean)
    S0 = np.eye(Nx) if initial_cov is None else np.asarray(initial_cov)

    def f(k, x, w):
        return lorenz96_step(x, dt, stages, forcing) + w

    def h(k, x):
        return sigmoid_measure(x)

    return SystemModel(
        n=Nx,
        n_w=Nx,
        n_y=Nx,
        f=f,
        h=h,
        Q_of_k=_constant(Q),
        initial_mean=mu0,
        initial_cov=S0,
    )
