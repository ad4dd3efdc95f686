"""Sparsest sensor precisions that guarantee a posterior covariance bound.

With prior moments ``Sxx, Sxy, Syy``, precisions ``lam`` (``R = diag(1/lam)``)
and the selector ``M`` of the final time block, the requirement

    M Sxx+(lam) M^T <= P_d,    Sxx+ = Sxx - Sxy (Syy + R)^-1 Sxy^T

is equivalent (matrix inversion lemma, then a Schur complement on the
``Syy^-1 + S`` block) to the LMI

    [[P_d - M Sxx M^T + U S U^T,  U S        ],
     [S U^T,                      Syy^-1 + S ]]  >= 0,   U = M Sxy, S = diag(lam)

which is affine in ``lam``: ``F0 + sum_i lam_i v_i v_i^T`` with
``F0 = blockdiag(P_d - M Sxx M^T, Syy^-1)`` and ``v_i = [U e_i; e_i]``.
Minimizing ``sum(lam)`` over ``lam >= 0`` promotes sparsity.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from optsense import sdp
from optsense.enkf import MomentSet, posterior_cov_update
from optsense.errors import NoFeasibleStart, SingularInnovationCovariance
from optsense.linalg import min_eigenvalue, regularize_spd, symmetrize

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7
OPT_TOL = 1e-6
MAX_ITER = 200
ZERO_TOL = 1e-8


class SolverStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITER = "MaxIter"
    NUMERICAL_TROUBLE = "NumericalTrouble"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class PrecisionProblem:
    """LMI data ``F0 + sum_i lam_i v_i v_i^T >= 0`` and box ``0 <= lam <= caps``.

    ``V`` holds the factors ``v_i`` as columns. ``n`` is the size of the
    bound block (the leading block of the LMI). ``sensors`` maps columns back
    to indices of the full measurement vector.
    """

    F0: np.ndarray
    V: np.ndarray
    caps: np.ndarray
    bound: np.ndarray
    n: int
    sensors: np.ndarray
    sensor_scales: np.ndarray | None = None
    jitter: float = 0.0

    @property
    def m(self) -> int:
        return self.F0.shape[0]

    @property
    def p(self) -> int:
        return self.V.shape[1]

    @property
    def factors(self) -> list[np.ndarray]:
        return [self.V[:, i] for i in range(self.p)]

    def lmi(self, lam: np.ndarray) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        return symmetrize(self.F0 + (self.V * lam) @ self.V.T)

    def schur_margin(self, lam: np.ndarray) -> float:
        """Smallest eigenvalue of the Schur complement of the lower-right block.

        Equals the bound margin ``min eig(P_d - M Sxx+ M^T)`` for an
        unnormalized problem, and has the same sign as the LMI margin.
        """
        F = self.lmi(lam)
        n = self.n
        try:
            c = sla.cho_factor(F[n:, n:], lower=True)
        except (np.linalg.LinAlgError, sla.LinAlgError):
            return -np.inf
        S = F[:n, :n] - F[:n, n:] @ sla.cho_solve(c, F[n:, :n])
        return min_eigenvalue(S)


@dataclass
class PrecisionSolution:
    lam: np.ndarray
    status: SolverStatus
    objective: float
    feasibility_margin: float
    certificate: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is SolverStatus.OPTIMAL


def assemble_lmi(
    moments: MomentSet,
    P_d: np.ndarray,
    sel: np.ndarray,
    caps=None,
    sensors=None,
    cond_max: float = 1e12,
    rel_jitter: float = 1e-8,
) -> PrecisionProblem:
    """Build the LMI for the prior ``moments`` and bound ``P_d`` on ``sel``'s block.

    ``Syy`` is regularized before inversion when ``cond(Syy) > cond_max``.
    """
    P_d = symmetrize(P_d)
    sel = np.asarray(sel, dtype=float)
    n = sel.shape[0]
    if P_d.shape != (n, n):
        raise ValueError("bound and selector disagree on the block size")
    all_sensors = np.arange(moments.ny) if sensors is None else np.asarray(sensors, int)
    mom = moments.restrict(all_sensors)
    p = all_sensors.size
    caps = np.full(p, np.inf) if caps is None else np.broadcast_to(
        np.asarray(caps, dtype=float), (p,)).copy()
    if np.any(caps < 0):
        raise ValueError("precision caps must be nonnegative")

    Syy, jitter = regularize_spd(mom.sigma_yy, cond_max, rel_jitter)
    if jitter:
        log.warning("prior Sigma_yy is ill-conditioned; added %.3g to its diagonal", jitter)
    try:
        c = sla.cho_factor(Syy, lower=True)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise SingularInnovationCovariance("prior Sigma_yy is not invertible") from exc
    D = symmetrize(sla.cho_solve(c, np.eye(p)))
    U = sel @ mom.sigma_xy
    top = P_d - sel @ mom.sigma_xx @ sel.T
    F0 = sla.block_diag(top, D)
    V = np.vstack([U, np.eye(p)])
    return PrecisionProblem(F0=F0, V=V, caps=caps, bound=P_d, n=n,
                            sensors=all_sensors, jitter=jitter)


def max_information_margin(prob: PrecisionProblem) -> float:
    """Bound margin with every precision at its cap (``inf`` caps in the limit).

    Feasible sets are monotone in ``lam``, so a negative value certifies
    infeasibility. Uncapped sensors ``I`` are eliminated exactly: the limit
    LMI is the restriction to ``z = (a, -U_I^T a, b_J)``, an explicit basis
    that keeps the leading block in the units of the bound.
    """
    inf = ~np.isfinite(prob.caps)
    lam = np.where(inf, 0.0, prob.caps)
    if not np.any(inf):
        return prob.schur_margin(lam)
    n, p = prob.n, prob.p
    fin = np.flatnonzero(~inf)
    B = np.zeros((n + p, n + fin.size))
    B[:n, :n] = np.eye(n)
    B[n + np.flatnonzero(inf), :n] = -prob.V[:n, inf].T
    B[n + fin, n + np.arange(fin.size)] = 1.0
    return min_eigenvalue(B.T @ prob.lmi(lam) @ B)


def _polish(prob: PrecisionProblem, lam: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """Shrink ``lam`` along its ray onto the feasibility boundary.

    ``t -> F(t lam)`` is monotone, so bisection on ``t`` finds the smallest
    feasible multiple; this only lowers the objective.
    """
    f = prob.schur_margin
    if f(lam) >= 0.0:
        lo, hi = 0.0, 1.0
    else:
        ratio = np.where(lam > 0, prob.caps / np.where(lam > 0, lam, 1.0), np.inf)
        t_max = min(float(np.min(ratio)), 1.0 + 1e-3)
        if t_max <= 1.0 or f(t_max * lam) < 0.0:
            return lam
        lo, hi = 1.0, t_max
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if f(mid * lam) >= 0.0:
            hi = mid
        else:
            lo = mid
    return np.minimum(hi * lam, prob.caps)


def solve_precision(
    prob: PrecisionProblem,
    feas_tol: float = FEAS_TOL,
    opt_tol: float = OPT_TOL,
    max_iter: int = MAX_ITER,
    zero_tol: float = ZERO_TOL,
) -> PrecisionSolution:
    """Minimize ``sum(lam)`` subject to the LMI and ``0 <= lam <= caps``."""
    p = prob.p
    zero = np.zeros(p)
    n = prob.n
    margin0 = min_eigenvalue(prob.F0[:n, :n])
    if margin0 >= -zero_tol:
        return PrecisionSolution(zero, SolverStatus.OPTIMAL, 0.0,
                                 min_eigenvalue(prob.F0), {"prior_margin": margin0})
    cap_margin = max_information_margin(prob)
    if cap_margin < -feas_tol:
        return PrecisionSolution(zero, SolverStatus.INFEASIBLE, 0.0, cap_margin,
                                 {"max_information_margin": cap_margin})

    res = sdp.solve_rank_one_lmi(np.ones(p), prob.F0, prob.V, prob.caps,
                                 gap_tol=opt_tol, feas_tol=feas_tol, max_iter=max_iter)
    lam = np.clip(res.y, 0.0, prob.caps)
    if res.status == sdp.OPTIMAL:
        lam = _polish(prob, lam)
    margin = min_eigenvalue(prob.lmi(lam))
    cert = {
        "iterations": res.iterations,
        "relative_gap": res.relative_gap,
        "dual_objective": res.dual_objective,
        "primal_infeasibility": res.primal_infeasibility,
        "dual_infeasibility": res.dual_infeasibility,
        "max_information_margin": cap_margin,
        "schur_margin": prob.schur_margin(lam),
    }
    if res.status == sdp.MAX_ITER:
        status = SolverStatus.MAX_ITER
    elif res.status != sdp.OPTIMAL or margin < -feas_tol:
        status = SolverStatus.NUMERICAL_TROUBLE
    else:
        status = SolverStatus.OPTIMAL
    return PrecisionSolution(lam, status, float(np.sum(lam)), margin, cert)


def verify_bound(moments: MomentSet, lam, P_d, sel, tol: float = FEAS_TOL):
    """Check ``M Sxx+ M^T <= P_d`` directly from the covariance update.

    Returns ``(satisfied, margin)`` with ``margin = min eig(P_d - M Sxx+ M^T)``.
    """
    post = posterior_cov_update(moments, lam)
    sel = np.asarray(sel, dtype=float)
    margin = min_eigenvalue(symmetrize(P_d) - sel @ post @ sel.T)
    return margin >= -tol, margin


def normalize_problem(prob: PrecisionProblem, state_scales, sensor_scales):
    """Rescale to normalized variables ``x_hat = s * x``, ``y_hat = c * y``.

    The LMI undergoes the congruence ``T F T`` with
    ``T = diag(s, 1 / c)`` (the lower block is an inverse covariance), so
    definiteness is preserved and ``lam = lam_hat * c**2``. Returns the scaled
    problem and a function mapping scaled precisions back to physical ones.
    """
    s = np.asarray(state_scales, dtype=float)
    c = np.asarray(sensor_scales, dtype=float)
    if s.shape != (prob.n,) or c.shape != (prob.p,):
        raise ValueError("scale vectors have the wrong length")
    if np.any(s <= 0) or np.any(c <= 0):
        raise ValueError("scales must be positive")
    t = np.concatenate([s, 1.0 / c])
    F0 = t[:, None] * prob.F0 * t[None, :]
    V = (t[:, None] * prob.V) * c[None, :]  # keeps the unit entry at row n + i
    prev = np.ones(prob.p) if prob.sensor_scales is None else prob.sensor_scales
    scaled = replace(
        prob,
        F0=F0,
        V=V,
        caps=prob.caps / c**2,
        bound=s[:, None] * prob.bound * s[None, :],
        sensor_scales=prev * c,
    )

    def unscale(lam_hat):
        return np.asarray(lam_hat, dtype=float) * c**2

    return scaled, unscale


@dataclass
class PruneRound:
    active: np.ndarray
    solution: PrecisionSolution
    removed: np.ndarray


def prune_sensors(
    moments: MomentSet,
    P_d,
    sel,
    caps=None,
    rel_floor: float = 1e-4,
    max_rounds: int = 50,
    **solve_opts,
):
    """Iteratively drop low-precision sensors until the bound becomes infeasible.

    Each round removes every sensor with ``lam_i < rel_floor * max(lam)``, or
    the single smallest one (lowest index on ties) if none qualifies, and
    re-solves on the survivors. When a reduced set is infeasible the last
    feasible set is kept. Returns ``(active_sensors, solution, trace)``.
    """
    ny = moments.ny
    caps = np.full(ny, np.inf) if caps is None else np.broadcast_to(
        np.asarray(caps, dtype=float), (ny,))
    active = np.arange(ny)
    prob = assemble_lmi(moments, P_d, sel, caps[active], active)
    sol = solve_precision(prob, **solve_opts)
    if not sol.optimal:
        raise NoFeasibleStart(f"unrestricted problem is {sol.status}")
    trace = [PruneRound(active, sol, np.array([], dtype=int))]
    for _ in range(max_rounds):
        lam = sol.lam
        drop = np.flatnonzero(lam < rel_floor * lam.max()) if lam.size else np.array([], int)
        if drop.size == 0:
            drop = np.array([int(np.argmin(lam))])
        keep = np.setdiff1d(np.arange(active.size), drop)
        if keep.size == 0:
            if verify_bound(moments, np.zeros(ny), P_d, sel)[0]:
                active, sol = keep, PrecisionSolution(np.zeros(0), SolverStatus.OPTIMAL, 0.0,
                                                      sol.feasibility_margin)
                trace.append(PruneRound(active, sol, drop))
            break
        cand = active[keep]
        cprob = assemble_lmi(moments, P_d, sel, caps[cand], cand)
        csol = solve_precision(cprob, **solve_opts)
        trace.append(PruneRound(cand, csol, active[drop]))
        if not csol.optimal:
            break
        active, sol = cand, csol
    return active, sol, trace


def full_precision_vector(prob: PrecisionProblem, lam: np.ndarray, ny: int) -> np.ndarray:
    out = np.zeros(ny)
    out[prob.sensors] = lam
    return out
