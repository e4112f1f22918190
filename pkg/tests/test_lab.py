import numpy as np
import pytest
from scipy import sparse

from trtlab.errors import ConfigError
from trtlab.fields import ClosedFormField, VoxelField, VoxelGrid
from trtlab.geodesic import TransportedVector, shoot_geodesics, transport_many
from trtlab.lab.assembly import assemble_forward, forward_closed_form
from trtlab.lab.experiments import (dim2_kernel_probe, injectivity_probe, near_null_count,
                                    support_experiment, synthetic_inversion)
from trtlab.lab.family import ChartBox, DeformationPath, RayFamily, cone_family
from trtlab.lab.solvers import smallest_singular_value, solve_tikhonov
from trtlab.metric import ConformalMetric, Domain, EuclideanMetric
from trtlab.transform import trt_scalar


@pytest.fixture(scope="module")
def small_setup():
    dom = Domain(3, 1.0, 1.5)
    field = EuclideanMetric(dom)
    grid = VoxelGrid.covering(dom, 4)
    fam = RayFamily.sample(field, ChartBox.full(3, 0.7), 4, 3)
    return field, grid, fam, assemble_forward(field, grid, fam, 0.02)


def test_voxel_interpolation_reproduces_linear_fields():
    dom = Domain(3, 1.0, 1.5)
    grid = VoxelGrid.covering(dom, 6)
    a = np.array([0.3, -0.2, 0.5])
    comps = np.outer(grid.centers() @ a + 1.0, np.arange(1, 7))
    f = VoxelField(dom, grid, comps, support=np.ones(grid.size, bool))
    x = np.random.default_rng(0).uniform(-0.5, 0.5, (20, 3))
    want = np.outer(x @ a + 1.0, np.arange(1, 7))
    assert np.allclose(f.raw_components(x), want, atol=1e-13)


def test_forward_rows_match_continuous_operator(small_setup):
    field, grid, fam, A = small_setup
    f = VoxelField(field.domain, grid, np.random.default_rng(3).standard_normal((grid.size, 6)))
    data = A.apply(f)
    sel = np.arange(0, fam.n_rays, max(1, fam.n_rays // 20))[:20]
    paths = shoot_geodesics(field, field.domain, fam.ray_x[sel], fam.ray_dir[sel], 0.02)
    etas = transport_many(field, paths, fam.ray_eta[sel])
    ref = np.array([trt_scalar(f, p, TransportedVector(p, e, e[0])) for p, e in zip(paths, etas)])
    assert np.max(np.abs(ref - data[sel])) / np.max(np.abs(ref)) < 1e-6
    assert np.all(A.apply(VoxelField.zeros(field.domain, grid)) == 0)


def test_forward_closed_form_matches_matrix_for_voxel_field(small_setup):
    field, grid, fam, A = small_setup
    f = VoxelField(field.domain, grid, np.random.default_rng(4).standard_normal((grid.size, 6)))
    assert np.allclose(forward_closed_form(f, field, fam, 0.02), A.apply(f), atol=1e-12)


def test_tikhonov_zero_data_and_errors():
    A = sparse.random(30, 10, density=0.5, random_state=1, format="csr")
    sol = solve_tikhonov(A, np.zeros(30), 1e-3)
    assert np.all(sol.x == 0)
    with pytest.raises(ValueError):
        solve_tikhonov(A, np.zeros(30), -1.0)
    with pytest.raises(ValueError):
        solve_tikhonov(A, np.zeros(29), 0.0)


def test_tikhonov_history_monotone_and_warning():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((40, 20))
    sol = solve_tikhonov(sparse.csr_matrix(A), rng.standard_normal(40), 1e-4, iters=200)
    assert np.all(np.diff(sol.residuals) <= 1e-12 * sol.residuals[0])
    with pytest.warns(RuntimeWarning):
        solve_tikhonov(sparse.csr_matrix(A), rng.standard_normal(40), 0.0, iters=2)


def test_singular_values_identity_and_duplication():
    eye = sparse.identity(7, format="csr")
    rep = smallest_singular_value(eye)
    assert rep.sigma_min == pytest.approx(1.0) and rep.sigma_max == pytest.approx(1.0)
    A = sparse.csr_matrix(np.random.default_rng(6).standard_normal((12, 5)))
    base = smallest_singular_value(A)
    dup = smallest_singular_value(sparse.vstack([A, A]))
    assert dup.sigma_min == pytest.approx(np.sqrt(2) * base.sigma_min, rel=1e-12)
    assert dup.ratio == pytest.approx(base.ratio, rel=1e-12)


def test_singular_value_methods_agree():
    A = sparse.random(60, 25, density=0.3, random_state=7, format="csr") + \
        sparse.eye(60, 25, format="csr")
    dense = smallest_singular_value(A)
    gram = smallest_singular_value(A, dense_limit=0)
    shift = smallest_singular_value(A, dense_limit=0, gram_limit=0)
    for rep in (gram, shift):
        assert rep.sigma_min == pytest.approx(dense.sigma_min, rel=1e-8)
        assert rep.sigma_max == pytest.approx(dense.sigma_max, rel=1e-8)


def test_single_voxel_full_rank():
    dom = Domain(3, 1.0, 1.5)
    field = EuclideanMetric(dom)
    fam = RayFamily.sample(field, ChartBox.full(3, 0.5), 2, 1)
    rep = injectivity_probe(field, VoxelGrid.covering(dom, 1), fam, 0.02)
    assert rep.passed and rep.shape[1] == 6 and rep.near_null == 0


def test_undersampled_family_fails_loudly():
    dom = Domain(3, 1.0, 1.5)
    field = EuclideanMetric(dom)
    fam = RayFamily.sample(field, ChartBox.full(3, 0.5), 1, 1)
    with pytest.warns(RuntimeWarning):
        rep = injectivity_probe(field, VoxelGrid.covering(dom, 4), fam, 0.02)
    assert not rep.passed
    assert rep.deficient_voxels > 0


def test_injectivity_both_metrics_coarse():
    dom = Domain(3, 1.0, 1.5)
    for field in (EuclideanMetric(dom), ConformalMetric(dom, 0.1)):
        grid = VoxelGrid.covering(dom, 4)
        fam = RayFamily.sample(field, ChartBox.full(3, 0.7), 4, 3)
        rep = injectivity_probe(field, grid, fam, 0.02)
        assert rep.passed
        f0 = VoxelField(dom, grid, np.random.default_rng(8).standard_normal((grid.size, 6)))
        err, _ = synthetic_inversion(rep.operator, f0)
        assert err < 1e-3


def test_dim2_probe_coarse():
    dom = Domain(2, 1.0, 1.5)
    field = EuclideanMetric(dom)
    grid = VoxelGrid.covering(dom, 6)
    fam = RayFamily.sample(field, ChartBox.full(2, 0.7), 8, 6)
    rep = dim2_kernel_probe(field, grid, fam, 0.02)
    assert rep.identity_error < 1e-8
    assert rep.potential_ratio < 1e-6
    assert rep.near_null >= 1


def test_near_null_count_threshold():
    from trtlab.lab.solvers import SingularReport
    rep = SingularReport(1e-12, 1.0, "dense-svd", np.array([1.0, 0.5, 1e-9, 1e-12]))
    assert near_null_count(rep) == 2


def test_cone_degenerate_cases(euclid3):
    apex = np.array([0.0, 0.0, -1.5])
    one = cone_family(euclid3, apex, [0, 0, 1.0], 0.2, 1)
    assert len(one) == 1
    cone = cone_family(euclid3, apex, [0, 0, 1.0], 1e-12, 19)
    assert len(cone) == 19
    assert np.allclose(cone.directions, [0, 0, 1.0], atol=1e-11)
    wide = cone_family(euclid3, apex, [0, 0, 1.0], 0.2, 20)
    assert len(wide) == 19
    assert np.max(wide.angles(euclid3)) == pytest.approx(0.2)


def test_deformation_path_endpoints():
    path = DeformationPath(np.array([0.0, 1.0]), np.array([1.0, 3.0]), 4)
    assert np.allclose(path.params[0], [0.0, 1.0])
    assert np.allclose(path.params[-1], [1.0, 3.0])
    assert len(path.t) == 5


def test_support_family_data_vanish():
    dom = Domain(3, 1.0, 1.5)
    field = EuclideanMetric(dom)
    center = np.array([0.55, 0.3, 0.2])
    fam = RayFamily.sample(field, ChartBox.full(3, 0.7), 4, 3, avoid=(center, 0.25))
    f = ClosedFormField.bump(dom, center, 0.2)
    assert fam.dropped > 0
    assert np.max(np.abs(forward_closed_form(f, field, fam, 0.02))) < 1e-10


def test_support_experiment_empty_mask_is_config_error():
    dom = Domain(3, 1.0, 1.5)
    field = EuclideanMetric(dom)
    # avoidance ball swallowing M leaves no geodesic
    with pytest.raises(ConfigError):
        support_experiment(field, VoxelGrid.covering(dom, 4), np.zeros(3), ChartBox.full(3, 0.7),
                           (2, 2), 0.02, support_radius=0.5, avoid_radius=1.2)
