import numpy as np
import pytest
import scipy.sparse

from lokpde.geometry import CoefficientField, PointCloud, ambient_cloud_manifold, sample_points
from lokpde.kernels import KernelConfig, SparseKernelMatrix, assemble_kernel_matrix
from lokpde.operator import (
    DensityEstimate,
    build_operator,
    default_epsilon_grid,
    estimate_density,
    left_normalize,
    right_normalize,
    tune_bandwidth,
    tune_gaussian_bandwidth,
)
from lokpde.problems import analytic_pair, problem_coefficients


def make_cloud(points):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return PointCloud(pts, None, "iid_density", ambient_cloud_manifold(pts.shape[1]))


def circle_cloud(n):
    theta = 2 * np.pi * np.arange(n) / n
    pts = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return PointCloud(pts, None, "uniform_grid", ambient_cloud_manifold(2, 1))


class TestDensityEstimate:
    def test_self_term_only(self):
        # far-separated pair: the cross term underflows, leaving the self term
        cloud = make_cloud([[0.0], [1e6]])
        q = estimate_density(cloud, 1.0, 2)
        np.testing.assert_array_equal(q.q_hat, [1.0, 1.0])

    def test_two_points_at_characteristic_distance(self):
        cloud = make_cloud([[0.0], [np.sqrt(2 * 0.3)]])
        q = estimate_density(cloud, 0.3, 2)
        np.testing.assert_allclose(q.q_hat, 1 + np.exp(-1.0))

    def test_uniform_grid_interior_flat(self):
        n = 400
        cloud = make_cloud(np.linspace(0, 1, n)[:, None])
        q = estimate_density(cloud, 1e-4, 50)
        # direct summation oracle at a few interior points
        pts = cloud.ambient[:, 0]
        for i in (100, 200, 311):
            expected = np.exp(-((pts[i] - pts) ** 2) / 2e-4)
            expected = np.sort(expected)[-50:].sum()
            np.testing.assert_allclose(q.q_hat[i], expected, rtol=1e-12)
        interior = q.q_hat[40:-40]
        assert interior.max() / interior.min() <= 1.01

    def test_positive_validation(self):
        with pytest.raises(ValueError, match="strictly positive"):
            DensityEstimate(np.array([1.0, 0.0]), 0.1)


class TestRightNormalize:
    def base_kernel(self, n=5, seed=0):
        rng = np.random.default_rng(seed)
        cloud = make_cloud(rng.normal(size=(n, 2)))
        coeffs = CoefficientField.isotropic(n, 2)
        return assemble_kernel_matrix(cloud, coeffs, KernelConfig(0.5, 0.5, n, sparsify=False))

    def test_unit_density_is_identity(self):
        km = self.base_kernel()
        out = right_normalize(km, DensityEstimate(np.ones(5), 0.5))
        np.testing.assert_array_equal(out.matrix.toarray(), km.matrix.toarray())

    def test_constant_density_scales(self):
        km = self.base_kernel()
        out = right_normalize(km, DensityEstimate(np.full(5, 2.0), 0.5))
        np.testing.assert_array_equal(out.matrix.toarray(), km.matrix.toarray() / 2.0)

    def test_matches_dense_product(self):
        rng = np.random.default_rng(8)
        km = self.base_kernel(seed=8)
        q = rng.uniform(0.5, 2.0, size=5)
        out = right_normalize(km, DensityEstimate(q, 0.5))
        expected = km.matrix.toarray() @ np.diag(1.0 / q)
        np.testing.assert_allclose(out.matrix.toarray(), expected, rtol=1e-15)

    def test_size_mismatch(self):
        km = self.base_kernel()
        with pytest.raises(ValueError, match="does not match"):
            right_normalize(km, DensityEstimate(np.ones(4), 0.5))


class TestLeftNormalize:
    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        cloud = make_cloud(rng.normal(size=(40, 3)))
        km = assemble_kernel_matrix(
            cloud, CoefficientField.isotropic(40, 3), KernelConfig(0.4, 0.4, 10)
        )
        gen = left_normalize(km)
        sums = np.asarray(gen.s_matrix.sum(axis=1)).ravel()
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)
        np.testing.assert_allclose(
            gen.row_sums, np.asarray(km.matrix.sum(axis=1)).ravel(), rtol=1e-15
        )

    def test_two_point_formula(self):
        mat = scipy.sparse.csr_matrix(np.array([[1.0, np.exp(-1)], [np.exp(-1), 1.0]]))
        gen = left_normalize(SparseKernelMatrix(mat, 0.1))
        expected = np.array([1.0, np.exp(-1)]) / (1 + np.exp(-1))
        np.testing.assert_allclose(gen.s_matrix.toarray()[0], expected, rtol=1e-15)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(3)
        dense = rng.uniform(0.1, 1.0, size=(6, 6))
        gen = left_normalize(SparseKernelMatrix(scipy.sparse.csr_matrix(dense), 0.2))
        expected = np.diag(1.0 / dense.sum(axis=1)) @ dense
        np.testing.assert_allclose(gen.s_matrix.toarray(), expected, rtol=1e-14)

    def test_zero_row_rejected(self):
        mat = scipy.sparse.csr_matrix(np.array([[0.0, 0.0], [0.5, 1.0]]))
        with pytest.raises(ValueError, match="isolated"):
            left_normalize(SparseKernelMatrix(mat, 0.1))


class TestGeneratorMatrix:
    def small_generator(self, n=5, eps=0.2, seed=4):
        rng = np.random.default_rng(seed)
        cloud = make_cloud(rng.normal(size=(n, 2)))
        km = assemble_kernel_matrix(
            cloud, CoefficientField.isotropic(n, 2), KernelConfig(eps, eps, n, sparsify=False)
        )
        return left_normalize(km)

    def test_annihilates_constants(self):
        gen = self.small_generator()
        out = gen.apply(np.ones(5))
        assert np.abs(out).max() <= 1e-10 / gen.epsilon

    def test_apply_matches_dense(self):
        gen = self.small_generator()
        rng = np.random.default_rng(5)
        v = rng.normal(size=5)
        dense = (gen.s_matrix.toarray() - np.eye(5)) / gen.epsilon
        np.testing.assert_allclose(gen.apply(v), dense @ v, atol=1e-14)
        np.testing.assert_allclose(gen.matrix().toarray(), dense, atol=1e-16)

    def test_shifted_matrix(self):
        gen = self.small_generator()
        a = np.full(5, -1.5)
        expected = gen.matrix().toarray() + np.diag(a)
        np.testing.assert_allclose(gen.shifted_matrix(a).toarray(), expected, atol=0)

    def test_diagonal_strictly_positive(self, bvp1d_paper):
        diag = bvp1d_paper.generator.s_matrix.diagonal()
        assert (diag > 0).all()


class TestBuildOperator:
    def test_pipeline_composition_exact(self):
        rng = np.random.default_rng(6)
        cloud = make_cloud(rng.normal(size=(30, 2)))
        coeffs = CoefficientField.isotropic(30, 2)
        cfg = KernelConfig(0.3, 0.2, 8)
        gen = build_operator(cloud, coeffs, cfg, debias=True)
        km = assemble_kernel_matrix(cloud, coeffs, cfg)
        q = estimate_density(cloud, 0.2, 8)
        manual = left_normalize(right_normalize(km, q), debiased=True)
        np.testing.assert_array_equal(gen.s_matrix.toarray(), manual.s_matrix.toarray())
        assert gen.debiased and not build_operator(cloud, coeffs, cfg, debias=False).debiased

    def test_row_stochastic_for_zoo_runs(self, bvp1d_paper, ellipse_paper):
        for run in (bvp1d_paper, ellipse_paper):
            sums = np.asarray(run.generator.s_matrix.sum(axis=1)).ravel()
            np.testing.assert_allclose(sums, 1.0, atol=1e-12)

    def test_constant_nullspace_for_zoo_runs(self, bvp1d_paper, ellipse_paper):
        for run in (bvp1d_paper, ellipse_paper):
            assert np.abs(run.generator.apply(np.ones(run.generator.n_points))).max() <= 1e-8

    def test_debias_noop_on_manifold_uniform_cloud(self):
        # on the circle the grid is uniform on the manifold, so debiasing
        # changes nothing beyond round-off
        cloud = circle_cloud(500)
        coeffs = CoefficientField.laplace_beltrami(500, 2)
        cfg = KernelConfig(1e-3, 1e-3, 60)
        on = build_operator(cloud, coeffs, cfg, debias=True)
        off = build_operator(cloud, coeffs, cfg, debias=False)
        np.testing.assert_allclose(
            on.s_matrix.toarray(), off.s_matrix.toarray(), atol=1e-13
        )

    @pytest.mark.parametrize("n_points,seed", [(2000, 2), (4000, 1)])
    def test_debias_halves_consistency_error_on_iid_ellipse(self, n_points, seed):
        problem = analytic_pair("ellipse")
        cloud = sample_points(problem.manifold, n_points, "iid_density", seed=seed)
        coeffs = problem_coefficients(problem, cloud)
        x = cloud.intrinsic
        u, f = problem.u(x), problem.f(x)
        errs = {}
        for debias in (True, False):
            gen = build_operator(cloud, coeffs, KernelConfig(1e-3, 1e-3, 200), debias=debias)
            errs[debias] = np.abs(gen.apply(u) - f).max()
        assert errs[False] >= 2.0 * errs[True]

    def test_consistency_error_decreases_with_epsilon(self):
        # interior operator error is O(eps): halving eps over 4 steps from
        # the kNN-truncation regime decreases it monotonically
        problem = analytic_pair("bvp1d")
        cloud = sample_points(problem.manifold, 4000, "uniform_grid")
        coeffs = problem_coefficients(problem, cloud)
        x = cloud.intrinsic
        u, f, a = problem.u(x), problem.f(x), problem.shift(x)
        errs = []
        for eps in 1.6e-5 * 0.5 ** np.arange(5):
            gen = build_operator(cloud, coeffs, KernelConfig(eps, eps, 100), debias=False)
            op = np.abs(gen.apply(u) + a * u - f)
            errs.append(op[200:3800].max())
        assert (np.diff(errs) <= 0).all(), f"not monotone: {errs}"

    def test_strict_diagonal_dominance(self, bvp1d_paper, ellipse_paper):
        # (1 - eps a) I - S is strictly diagonally dominant for any a < 0
        rng = np.random.default_rng(12)
        for run in (bvp1d_paper, ellipse_paper):
            s = run.generator.s_matrix.toarray()
            eps = run.generator.epsilon
            for a in (np.full(len(s), -2.0), -rng.uniform(0.1, 5.0, size=len(s))):
                m = (1 - eps * a)[:, None] * np.eye(len(s)) - s
                diag = np.abs(np.diag(m))
                off = np.abs(m - np.diag(np.diag(m))).sum(axis=1)
                assert (diag > off).all()


class TestTuning:
    def test_grid_validation(self):
        cloud = circle_cloud(50)
        coeffs = CoefficientField.isotropic(50, 2)
        with pytest.raises(ValueError, match="at least 3"):
            tune_bandwidth(cloud, coeffs, np.array([0.1, 1.0]))
        with pytest.raises(ValueError, match="increasing"):
            tune_bandwidth(cloud, coeffs, np.array([1.0, 0.5, 2.0]))

    def test_default_grid(self):
        grid = default_epsilon_grid()
        assert grid.size == 41
        np.testing.assert_allclose(grid[0], 2.0**-30)
        np.testing.assert_allclose(grid[-1], 2.0**10)

    def test_circle_dimension_estimate(self):
        rep = tune_bandwidth(circle_cloud(2000), CoefficientField.isotropic(2000, 2))
        assert 0.8 <= rep.d_hat <= 1.2
        # saturation at both grid ends: slopes vanish
        assert abs(rep.slope[0]) < 0.05 and abs(rep.slope[-1]) < 0.05
        # selection invariants
        assert rep.epsilon_star in rep.epsilon_grid
        assert rep.d_hat == 2.0 * np.nanmax(rep.slope)
        assert rep.epsilon_star == rep.epsilon_grid[np.nanargmax(rep.slope)]

    def test_torus_dimension_estimate(self):
        problem = analytic_pair("torus")
        cloud = sample_points(problem.manifold, 1600, "uniform_grid")
        rep = tune_bandwidth(cloud, problem_coefficients(problem, cloud))
        assert abs(rep.d_hat - 2.0) <= 0.4

    def test_two_point_cloud_completes(self):
        rep = tune_bandwidth(make_cloud([[0.0], [1.0]]), CoefficientField.isotropic(2, 1))
        assert np.isfinite(rep.epsilon_star)
        assert np.nanmax(rep.slope) < 0.5

    def test_gaussian_variant_equals_isotropic(self):
        cloud = circle_cloud(300)
        a = tune_gaussian_bandwidth(cloud)
        b = tune_bandwidth(cloud, CoefficientField.isotropic(300, 2))
        np.testing.assert_array_equal(a.log_q, b.log_q)
