import numpy as np
import pytest

from trtlab.errors import DomainError, ParameterError, SingularMetricError
from trtlab.metric import (CustomMetric, Domain, check_boundary_convexity, eval_christoffel,
                           eval_metric, inner_product, make_metric, orthonormal_basis,
                           outer_normal)


def test_domain_rejects_bad_radii():
    with pytest.raises(ParameterError):
        Domain(3, 1.0, 0.5)
    with pytest.raises(ParameterError):
        Domain(1)


def test_euclidean_metric_is_identity(euclid3, rng):
    x = rng.uniform(-0.5, 0.5, (5, 3))
    assert np.array_equal(eval_metric(euclid3, x), np.broadcast_to(np.eye(3), (5, 3, 3)))
    assert np.all(eval_christoffel(euclid3, x) == 0)


def test_conformal_metric_values(conformal3):
    assert np.allclose(eval_metric(conformal3, np.zeros(3)), np.eye(3), atol=1e-15)
    # c(x) = 1.1 at |x| = 1, so g = 1.21 I
    assert np.allclose(eval_metric(conformal3, [1.0, 0, 0]), 1.21 * np.eye(3), atol=1e-14)
    e1 = np.array([1.0, 0, 0])
    assert inner_product(conformal3, [1.0, 0, 0], e1, e1) == pytest.approx(1.21, abs=1e-14)


def test_inner_product_euclidean(euclid3):
    x = np.array([0.2, 0.1, -0.3])
    assert inner_product(euclid3, x, [1, 0, 0], [0, 1, 0]) == 0
    u = np.array([0.3, -1.2, 2.0])
    assert inner_product(euclid3, x, u, u) == pytest.approx(u @ u)


def test_outside_outer_ball_raises(conformal3):
    with pytest.raises(DomainError):
        eval_metric(conformal3, [2.0, 0, 0])


def test_christoffel_matches_finite_difference(conformal3, rng):
    x = rng.uniform(-0.5, 0.5, 3)
    eps = 1e-5
    dg = np.empty((3, 3, 3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = eps
        dg[k] = (conformal3.g(x + e) - conformal3.g(x - e)) / (2 * eps)
    gi = np.linalg.inv(conformal3.g(x))
    # Gamma^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij)
    low = 0.5 * (np.einsum("ijl->ijl", dg) + np.einsum("jil->ijl", dg) - np.einsum("lij->ijl", dg))
    ref = np.einsum("kl,ijl->kij", gi, low)
    got = eval_christoffel(conformal3, x)
    assert np.max(np.abs(got - ref)) <= 1e-6 * np.max(np.abs(ref))


def test_singular_custom_metric_reports_eigenvalues(ball3):
    field = CustomMetric(ball3, lambda x: np.broadcast_to(np.diag([1.0, 1.0, 0.0]),
                                                          x.shape[:-1] + (3, 3)))
    with pytest.raises(SingularMetricError) as info:
        eval_christoffel(field, np.zeros(3))
    assert info.value.eigenvalues is not None


def test_orthonormal_basis_is_g_orthonormal(conformal3, rng):
    x = rng.uniform(-0.5, 0.5, 3)
    E, _ = orthonormal_basis(conformal3, x)
    assert np.allclose(E.T @ conformal3.g(x) @ E, np.eye(3), atol=1e-14)


def test_outer_normal_unit(conformal3):
    x = np.array([0.0, 0.6, 0.8])
    nu, _ = outer_normal(conformal3, x, 1.0)
    assert nu @ conformal3.g(x) @ nu == pytest.approx(1.0)
    assert np.allclose(np.cross(nu, x), 0, atol=1e-15)


def test_convexity_euclidean_unit_curvature(euclid3, ball3):
    rep = check_boundary_convexity(euclid3, ball3, 100)
    assert rep.passed
    assert rep.minimum == pytest.approx(1.0, abs=1e-4)


def test_convexity_conformal_and_single_sample(conformal3, ball3):
    assert check_boundary_convexity(conformal3, ball3, 100).passed
    rep = check_boundary_convexity(conformal3, ball3, 1)
    assert rep.sample_count == 1


def test_make_metric_unknown(ball3):
    with pytest.raises(ParameterError):
        make_metric(ball3, "hyperbolic")
