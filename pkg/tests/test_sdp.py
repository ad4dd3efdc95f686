import numpy as np
import pytest

from optsense import sdp


def random_instance(rng, m, p):
    """Strictly feasible instance: F0 = X0 - sum y0_i v_i v_i^T with X0 > 0 and y0 > 0."""
    V = rng.standard_normal((m, p))
    A = rng.standard_normal((m, m))
    X0 = A @ A.T / m + 0.1 * np.eye(m)
    y0 = rng.uniform(0.5, 2.0, p)
    F0 = X0 - (V * y0) @ V.T
    return F0, V


@pytest.mark.parametrize("seed", range(8))
def test_kkt_certificate(seed):
    rng = np.random.default_rng(seed)
    F0, V = random_instance(rng, 5, 4)
    c = np.ones(4)
    res = sdp.solve_rank_one_lmi(c, F0, V)
    assert res.status == sdp.OPTIMAL
    F = F0 + (V * res.y) @ V.T
    assert np.linalg.eigvalsh(F)[0] >= -1e-7
    assert np.all(res.y >= -1e-9)
    assert res.relative_gap <= 1e-6
    # weak duality: the dual bound never exceeds the primal value
    assert res.dual_objective <= res.primal_objective + 1e-6 * max(1.0, abs(res.primal_objective))


def test_upper_bounds_respected():
    rng = np.random.default_rng(3)
    F0, V = random_instance(rng, 4, 3)
    free = sdp.solve_rank_one_lmi(np.ones(3), F0, V)
    upper = np.full(3, np.inf)
    i = int(np.argmax(free.y))
    upper[i] = 0.5 * free.y[i]
    res = sdp.solve_rank_one_lmi(np.ones(3), F0, V, upper)
    if res.status == sdp.OPTIMAL:
        assert res.y[i] <= upper[i] + 1e-9
        assert res.primal_objective >= free.primal_objective - 1e-6


def test_zero_factor_is_fixed_at_zero():
    rng = np.random.default_rng(5)
    F0, V = random_instance(rng, 4, 3)
    V[:, 1] = 0.0
    res = sdp.solve_rank_one_lmi(np.ones(3), F0 - 0.0, V)
    assert res.y[1] == 0.0


def test_trivially_feasible_start():
    F0 = np.eye(3)
    V = np.eye(3)
    res = sdp.solve_rank_one_lmi(np.ones(3), F0, V)
    assert res.status == sdp.OPTIMAL
    assert res.primal_objective < 1e-6
