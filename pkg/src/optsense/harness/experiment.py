"""Lorenz-96 precision-selection experiments.

One precision step (prediction, prior moments, LMI assembly, solve and an
independent re-check of the bound) is :func:`run_precision_step`. A sweep
evaluates a grid of bound factors ``c`` against one shared prior, with
``P_d = c * Sigma_init[-Nx:, -Nx:]``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from optsense.enkf import (
    MomentSet,
    ensemble_moments,
    inflate,
    propagate_ensemble,
    sample_gaussian,
)
from optsense.harness.config import ExperimentConfig
from optsense.models import AugmentedModel, build_augmented, lorenz96_system, selector
from optsense.precision import (
    PrecisionSolution,
    SolverStatus,
    assemble_lmi,
    solve_precision,
    verify_bound,
)
from optsense.ukf import augment, generate_sigma, ukf_measurement_moments, ukf_predict

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepRow:
    bound_factor: float
    window_step: int
    sensor_index: int
    precision: float
    status: str
    margin: float
    wall_time_ms: float


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)
    solutions: list[PrecisionSolution] = field(default_factory=list)

    @property
    def any_infeasible(self) -> bool:
        return any(s.status is SolverStatus.INFEASIBLE for s in self.solutions)


@dataclass
class StepResult:
    solution: PrecisionSolution
    verified: bool
    margin: float
    moments: MomentSet


def random_spd(rng: np.random.Generator, dim: int, variance: float = 1.0) -> np.ndarray:
    """``G G^T / dim + 0.5 I`` from a standard-normal ``G``, scaled to trace ``variance * dim``.

    The eigenvalues before scaling lie roughly in ``[0.5, 4.5]``, so the
    matrix stays well conditioned for any ``dim``.
    """
    G = rng.standard_normal((dim, dim))
    S = G @ G.T / dim + 0.5 * np.eye(dim)
    S *= variance * dim / np.trace(S)
    return 0.5 * (S + S.T)


def initial_condition(cfg: ExperimentConfig, rng: np.random.Generator):
    dim = cfg.q * cfg.Nx
    mu0 = rng.uniform(0.0, cfg.F, size=dim)
    return mu0, random_spd(rng, dim, cfg.init_variance)


def build_model(cfg: ExperimentConfig, mu0=None, sigma0=None) -> AugmentedModel:
    base = lorenz96_system(Nx=cfg.Nx, forcing=cfg.F, dt=cfg.dt, stages=cfg.stages,
                           initial_mean=None if mu0 is None else mu0[-cfg.Nx:],
                           initial_cov=None if sigma0 is None else sigma0[-cfg.Nx:, -cfg.Nx:])
    return build_augmented(base, cfg.q)


def predict(cfg: ExperimentConfig, model: AugmentedModel, k: int, state,
            rng: np.random.Generator):
    """Prior of window ``k + 1`` from the posterior ``state`` of window ``k``.

    ``state`` is a ``(dim, N)`` ensemble for the EnKF and a ``(mean, cov)``
    pair for the UKF. Returns ``(prior_state, moments)``; for the EnKF the
    prior state is the inflated ensemble the moments were taken from.
    """
    def h(X):
        return model.H(k + 1, X)

    if cfg.filter == "enkf":
        prior = propagate_ensemble(state, model, k, rng)
        prior = inflate(prior, cfg.inflation)
        return prior, ensemble_moments(prior, h)
    mean, cov = state
    mean_a, cov_a = augment(mean, cov, model.QQ_of_k(k))
    sigma = generate_sigma(mean_a, cov_a, cfg.ukf.alpha, cfg.ukf.beta, cfg.ukf.kappa,
                           jitter=_sigma_jitter(cov_a))
    _, _, points = ukf_predict(sigma, model, k)
    moments = ukf_measurement_moments(points, sigma.w_mean, sigma.w_cov, h)
    return (moments.mean, moments.sigma_xx), moments


def _sigma_jitter(cov: np.ndarray) -> float:
    """Zero for a factorable covariance, else enough diagonal lift to factor it."""
    w = np.linalg.eigvalsh(cov)
    if w[0] > 1e-12 * max(w[-1], 1e-300):
        return 0.0
    return float(-min(w[0], 0.0) + 1e-9 * max(np.trace(cov) / cov.shape[0], 1e-12))


def predict_moments(cfg: ExperimentConfig, model: AugmentedModel, k: int, state,
                    rng: np.random.Generator) -> MomentSet:
    return predict(cfg, model, k, state, rng)[1]


def select_precisions(cfg: ExperimentConfig, moments: MomentSet, P_d: np.ndarray) -> StepResult:
    sel = selector(cfg.q, cfg.Nx)
    caps = np.full(moments.ny, cfg.precision_cap)
    prob = assemble_lmi(moments, P_d, sel, caps)
    opts = cfg.solver
    sol = solve_precision(prob, feas_tol=opts.feas_tol, opt_tol=opts.opt_tol,
                          max_iter=opts.max_iter)
    ok, margin = verify_bound(moments, sol.lam, P_d, sel, opts.feas_tol)
    if sol.optimal and not ok:
        log.warning("solver reported Optimal but the bound check failed (margin %.3g)", margin)
    return StepResult(sol, ok, margin, moments)


def run_precision_step(cfg: ExperimentConfig, model: AugmentedModel, k: int, state,
                       P_d: np.ndarray, rng: np.random.Generator) -> StepResult:
    """Predict window ``k + 1`` from ``state`` and select precisions for ``P_d``."""
    moments = predict_moments(cfg, model, k, state, rng)
    return select_precisions(cfg, moments, P_d)


def initial_state(cfg: ExperimentConfig, mu0, sigma0, rng):
    if cfg.filter == "enkf":
        return mu0[:, None] + sample_gaussian(rng, sigma0, cfg.n_members)
    return mu0, sigma0


def run_sweep(cfg: ExperimentConfig) -> SweepResult:
    rng = np.random.default_rng(cfg.seed)
    mu0, sigma0 = initial_condition(cfg, rng)
    model = build_model(cfg, mu0, sigma0)
    state = initial_state(cfg, mu0, sigma0, rng)
    moments = predict_moments(cfg, model, 0, state, rng)
    block = sigma0[-cfg.Nx:, -cfg.Nx:]

    result = SweepResult()
    for c in cfg.bound_factors:
        t0 = time.perf_counter()
        step = select_precisions(cfg, moments, c * block)
        elapsed = (time.perf_counter() - t0) * 1e3 if cfg.record_timing else 0.0
        sol = step.solution
        log.info("bound factor %.4f: %s, sum(lam)=%.6g, margin=%.3g",
                 c, sol.status, sol.objective, step.margin)
        result.solutions.append(sol)
        for j in range(cfg.q):
            for i in range(cfg.Nx):
                result.rows.append(SweepRow(
                    bound_factor=float(c),
                    window_step=j + 1,
                    sensor_index=i + 1,
                    precision=float(sol.lam[j * cfg.Nx + i]),
                    status=str(sol.status),
                    margin=float(step.margin),
                    wall_time_ms=float(elapsed),
                ))
    return result
