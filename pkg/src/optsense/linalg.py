"""Dense symmetric linear-algebra kernels.

Matrices are plain ``numpy`` arrays. Symmetric inputs are symmetrized as
``(M + M.T) / 2`` before factorization so round-off asymmetry from
outer-product sums never reaches LAPACK.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from optsense.errors import NonConvergence, NotPositiveDefinite

__all__ = [
    "symmetrize",
    "cholesky_psd",
    "min_eigenvalue",
    "is_psd",
    "regularize_spd",
    "psd_sqrt",
]


def symmetrize(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return 0.5 * (m + m.T)


def cholesky_psd(m: np.ndarray, jitter: float = 0.0) -> np.ndarray:
    """Lower Cholesky factor of ``m + jitter * I``.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is not positive after adding the jitter.
    """
    if jitter < 0:
        raise ValueError("jitter must be nonnegative")
    a = symmetrize(m)
    if jitter:
        a = a + jitter * np.eye(a.shape[0])
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(
            f"matrix of size {a.shape[0]} is not positive definite "
            f"(jitter={jitter:g})"
        ) from exc


def min_eigenvalue(m: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix (LAPACK ``syevr``)."""
    a = symmetrize(m)
    if not np.all(np.isfinite(a)):
        raise NonConvergence("matrix has non-finite entries")
    try:
        w = sla.eigh(a, eigvals_only=True, subset_by_index=[0, 0])
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise NonConvergence(str(exc)) from exc
    return float(w[0])


def is_psd(m: np.ndarray, tol: float = 0.0) -> bool:
    return min_eigenvalue(m) >= -tol


def regularize_spd(
    m: np.ndarray, cond_max: float = 1e12, rel_jitter: float = 1e-8
) -> tuple[np.ndarray, float]:
    """Add ``rel_jitter * trace / dim`` to the diagonal when ``cond(m) > cond_max``.

    Returns the (symmetrized) matrix and the jitter that was added, which is
    0.0 when the matrix was already well conditioned.
    """
    a = symmetrize(m)
    w = np.linalg.eigvalsh(a)
    top = max(abs(w[-1]), abs(w[0]))
    if top == 0.0:
        cond = np.inf
    elif w[0] <= 0.0:
        cond = np.inf
    else:
        cond = top / w[0]
    if cond <= cond_max:
        return a, 0.0
    jitter = rel_jitter * np.trace(a) / a.shape[0]
    if jitter <= 0.0:
        # zero or negative trace: fall back to an absolute floor
        jitter = rel_jitter * max(top, 1.0)
    # an indefinite input also needs its negative part lifted
    if w[0] + jitter <= 0.0:
        jitter = -w[0] + jitter
    return a + jitter * np.eye(a.shape[0]), float(jitter)


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Factor ``S`` with ``S @ S.T == m`` for a PSD (possibly singular) matrix."""
    w, v = np.linalg.eigh(symmetrize(m))
    return v * np.sqrt(np.clip(w, 0.0, None))
