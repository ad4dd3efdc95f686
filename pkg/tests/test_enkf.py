import numpy as np
import pytest

from conftest import random_spd
from oracles import kalman_posterior, sample_cov_two_pass
from optsense.enkf import (
    MomentSet,
    centering_gram,
    enkf_update,
    ensemble_moments,
    inflate,
    mean_update,
    posterior_cov_update,
    propagate_ensemble,
)
from optsense.models import SystemModel, build_augmented


def identity(x):
    return x


def linear_model(a=1.0, qvar=0.0):
    base = SystemModel(1, 1, 1, lambda k, x, w: a * x + w, lambda k, x: x,
                       lambda k: np.array([[qvar]]), np.zeros(1), np.eye(1))
    return build_augmented(base, 1)


def test_centering_gram_two():
    np.testing.assert_allclose(centering_gram(2), [[0.5, -0.5], [-0.5, 0.5]])


@pytest.mark.parametrize("N", [2, 3, 7, 40])
def test_centering_gram_annihilates_constants(N):
    np.testing.assert_allclose(centering_gram(N).sum(axis=1), 0.0, atol=1e-14)


def test_centering_gram_gives_sample_covariance(rng):
    X = rng.standard_normal((4, 3))
    np.testing.assert_allclose(X @ centering_gram(3) @ X.T, sample_cov_two_pass(X), atol=1e-12)


def test_moments_two_members():
    m = ensemble_moments(np.array([[1.0, -1.0]]), identity)
    assert m.mean[0] == 0.0
    assert (m.sigma_xx[0, 0], m.sigma_xy[0, 0], m.sigma_yy[0, 0]) == (2.0, 2.0, 2.0)


def test_moments_identical_members():
    m = ensemble_moments(np.ones((3, 5)), np.sin)
    for s in (m.sigma_xx, m.sigma_xy, m.sigma_yy):
        np.testing.assert_array_equal(s, 0.0)


def test_moments_linear_map_identities(rng):
    X = rng.standard_normal((4, 9))
    G = rng.standard_normal((3, 4))
    m = ensemble_moments(X, lambda Z: G @ Z)
    np.testing.assert_allclose(m.sigma_xy, m.sigma_xx @ G.T, atol=1e-10)
    np.testing.assert_allclose(m.sigma_yy, G @ m.sigma_xx @ G.T, atol=1e-10)
    np.testing.assert_allclose(m.y_mean, G @ m.mean, atol=1e-12)


def test_moments_need_two_members():
    with pytest.raises(ValueError):
        ensemble_moments(np.zeros((2, 1)), identity)


def test_restrict_selects_sensors(rng):
    X = rng.standard_normal((3, 8))
    m = ensemble_moments(X, lambda z: np.concatenate([z, 2 * z[:1]]))
    r = m.restrict([3, 0])
    np.testing.assert_array_equal(r.sigma_yy, m.sigma_yy[np.ix_([3, 0], [3, 0])])
    np.testing.assert_array_equal(r.sigma_xy, m.sigma_xy[:, [3, 0]])


def test_propagate_noise_free_identity(rng):
    X = rng.standard_normal((1, 6))
    np.testing.assert_array_equal(propagate_ensemble(X, linear_model(1.0), 0, rng), X)


def test_propagate_noise_free_linear(rng):
    X = rng.standard_normal((1, 6))
    np.testing.assert_array_equal(propagate_ensemble(X, linear_model(1.5), 0, rng), 1.5 * X)


def test_propagate_noise_statistics(rng):
    N, qvar = 100_000, 0.36
    X = rng.standard_normal((1, N))
    out = propagate_ensemble(X, linear_model(0.7, qvar), 0, rng)
    r = (out - 0.7 * X)[0]
    se = qvar * np.sqrt(2.0 / (N - 1))
    assert abs(r.var(ddof=1) - qvar) < 3 * se


def test_update_without_active_sensors(rng):
    X = rng.standard_normal((2, 5))
    m = ensemble_moments(X, identity)
    out = enkf_update(X, m, np.array([0.0, 1e-10]), np.zeros(2), rng, identity)
    np.testing.assert_array_equal(out, X)


def test_update_matches_kalman_variance(rng):
    N, s2, r = 100_000, 4.0, 0.5
    X = rng.normal(1.0, np.sqrt(s2), size=(1, N))
    m = ensemble_moments(X, identity)
    post = enkf_update(X, m, np.array([1.0 / r]), np.array([0.3]), rng, identity)
    exact = s2 * r / (s2 + r)
    # the update is linear in the sample, so the reference uses the sample prior variance
    sample_exact = m.sigma_xx[0, 0] * r / (m.sigma_xx[0, 0] + r)
    se = exact * np.sqrt(2.0 / (N - 1))
    v = post.var(ddof=1)
    assert abs(v - exact) < 3 * se + abs(sample_exact - exact)
    assert abs(v - sample_exact) < 3 * se


def test_update_large_precision_collapses(rng):
    X = rng.standard_normal((2, 50)) + np.array([[1.0], [2.0]])
    G = np.array([[1.0, 0.5]])
    h = lambda Z: G @ Z  # noqa: E731
    m = ensemble_moments(X, h)
    y = G @ m.mean
    post = enkf_update(X, m, np.array([1e12]), y, rng, h, perturb=False)
    prior_spread = np.var(h(X), ddof=1)
    post_spread = np.var(h(post), ddof=1)
    assert post_spread < 1e-6 * prior_spread


def test_update_rejects_negative_precision(rng):
    X = rng.standard_normal((1, 4))
    with pytest.raises(ValueError):
        enkf_update(X, ensemble_moments(X, identity), np.array([-1.0]), np.zeros(1), rng, identity)


def test_inflate_identity(rng):
    X = rng.standard_normal((3, 6))
    np.testing.assert_allclose(inflate(X, 1.0), X, atol=1e-15)


def test_inflate_doubles_anomalies():
    out = inflate(np.array([[1.0, -1.0]]), 2.0)
    np.testing.assert_array_equal(out, [[2.0, -2.0]])
    assert out.var(ddof=1) == 8.0


def test_inflate_preserves_mean(rng):
    X = rng.standard_normal((5, 11)) * 3 + 1
    np.testing.assert_allclose(inflate(X, 1.37).mean(axis=1), X.mean(axis=1), atol=1e-14)


def test_inflate_rejects_deflation(rng):
    with pytest.raises(ValueError):
        inflate(rng.standard_normal((1, 3)), 0.9)


def scalar_moments():
    return MomentSet(np.zeros(1), np.array([[4.0]]), np.array([[4.0]]), np.array([[4.0]]),
                     y_mean=np.zeros(1))


def test_posterior_without_measurement(rng):
    S = random_spd(rng, 3)
    m = MomentSet(np.zeros(3), S, rng.standard_normal((3, 2)), random_spd(rng, 2))
    assert np.array_equal(posterior_cov_update(m, np.zeros(2)), S)


def test_posterior_scalar():
    assert posterior_cov_update(scalar_moments(), np.array([1.0]))[0, 0] == pytest.approx(0.8, abs=1e-14)


def test_posterior_noise_free_sensor():
    assert posterior_cov_update(scalar_moments(), np.array([np.inf]))[0, 0] == pytest.approx(0.0, abs=1e-14)


def test_posterior_symmetric_and_dominated(rng):
    for _ in range(20):
        S = random_spd(rng, 4)
        H = rng.standard_normal((3, 4))
        m = MomentSet(np.zeros(4), S, S @ H.T, H @ S @ H.T + 0.1 * np.eye(3))
        lam = rng.uniform(0, 5, 3)
        P = posterior_cov_update(m, lam)
        np.testing.assert_array_equal(P, P.T)
        assert np.linalg.eigvalsh(S - P)[0] >= -1e-9
        np.testing.assert_allclose(P, kalman_posterior(m.sigma_xx, m.sigma_xy, m.sigma_yy, lam),
                                   atol=1e-10)


def test_posterior_monotone_in_precision(rng):
    S = random_spd(rng, 3)
    H = rng.standard_normal((2, 3))
    m = MomentSet(np.zeros(3), S, S @ H.T, H @ S @ H.T)
    lam = rng.uniform(0.1, 2, 2)
    P1 = posterior_cov_update(m, lam)
    P2 = posterior_cov_update(m, lam + rng.uniform(0, 1, 2))
    assert np.linalg.eigvalsh(P1 - P2)[0] >= -1e-10


def test_mean_update_scalar():
    m = scalar_moments()
    mu = mean_update(m, np.array([1.0]), np.array([1.0]))
    assert mu[0] == pytest.approx(4.0 / 5.0)


def test_centering_gram_all_sizes(rng):
    for N in range(2, 51):
        X = rng.standard_normal((3, N))
        np.testing.assert_allclose(X @ centering_gram(N) @ X.T, sample_cov_two_pass(X), atol=1e-12)


def test_inflate_scales_covariance(rng):
    X = rng.standard_normal((4, 30))
    a = ensemble_moments(X, identity).sigma_xx
    b = ensemble_moments(inflate(X, 1.02), identity).sigma_xx
    np.testing.assert_allclose(b, 1.02**2 * a, atol=1e-12)


def test_posterior_monotone_per_sensor(rng):
    for _ in range(20):
        S = random_spd(rng, 4)
        H = rng.standard_normal((3, 4))
        m = MomentSet(np.zeros(4), S, S @ H.T, H @ S @ H.T + 0.01 * np.eye(3))
        lam = rng.uniform(0, 3, 3) * (rng.random(3) < 0.7)
        i = int(rng.integers(3))
        bumped = lam.copy()
        bumped[i] += rng.uniform(0.01, 2)
        D = posterior_cov_update(m, lam) + 1e-9 * np.eye(4) - posterior_cov_update(m, bumped)
        assert np.linalg.eigvalsh(D)[0] >= 0
