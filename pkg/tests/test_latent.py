import math

import numpy as np
import pytest

from idpg.latent import (
    MAX_DIM,
    GridTabulated,
    MixtureComponent,
    MixtureOfProducts,
    Position,
    Product,
    QuadratureSpec,
    TabulatedJoint,
    TruncGaussianSpec,
    UniformBall,
    evaluate_intensity,
    kernel_affinity,
    load_model,
    marginal_moments,
    model_from_dict,
    model_to_dict,
    moments,
    save_model,
    total_intensity,
)
from idpg.gridfield import GridField


class TestValidation:
    def test_negative_coordinate_rejected(self):
        with pytest.raises(ValueError):
            Position([-0.1], [0.5])

    def test_outside_ball_rejected(self):
        with pytest.raises(ValueError):
            Position([0.9, 0.9], [0.1, 0.1])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            Position([0.5], [0.5, 0.2])

    def test_dim_limit(self):
        with pytest.raises(ValueError):
            UniformBall(1.0, MAX_DIM + 1)

    def test_trunc_gaussian_invariants(self):
        with pytest.raises(ValueError):
            TruncGaussianSpec((0.5,), (0.0,), 1.0)
        with pytest.raises(ValueError):
            TruncGaussianSpec((0.5,), (10.0,), -1.0)
        with pytest.raises(ValueError):
            TruncGaussianSpec((0.9, 0.9), (10.0, 10.0), 1.0)  # mean outside ball

    def test_mixture_needs_shared_dim(self):
        a = MixtureComponent("a", UniformBall(1.0, 1), UniformBall(1.0, 1))
        b = MixtureComponent("b", UniformBall(1.0, 2), UniformBall(1.0, 2))
        with pytest.raises(ValueError):
            MixtureOfProducts((a, b))


class TestEvaluate:
    def test_uniform_product_constant(self, uniform_model):
        p = Position([0.5], [0.5])
        assert evaluate_intensity(uniform_model, p) == pytest.approx(6.0)

    def test_zero_outside_domain(self, uniform_model):
        # a position with coordinate above 1 is invalid; the marginal itself
        # answers zero just outside the ball
        from idpg.latent import evaluate_marginal
        assert evaluate_marginal(UniformBall(2.0, 2), np.array([0.9, 0.9])) == 0.0

    def test_dimension_mismatch_errors(self, uniform_model):
        with pytest.raises(ValueError):
            evaluate_intensity(uniform_model, Position([0.5, 0.1], [0.5, 0.1]))

    def test_mixture_matches_single_component_when_far(self):
        # two narrow bumps ten sigma apart: at the first mean only the first counts
        kap = (10000.0,)  # sigma = 0.01
        c1 = MixtureComponent("a", TruncGaussianSpec((0.2,), kap, 1.0),
                              TruncGaussianSpec((0.2,), kap, 1.0))
        c2 = MixtureComponent("b", TruncGaussianSpec((0.8,), kap, 1.0),
                              TruncGaussianSpec((0.8,), kap, 1.0))
        mix = MixtureOfProducts((c1, c2))
        single = Product(c1.green, c1.red)
        p = Position([0.2], [0.2])
        assert evaluate_intensity(mix, p) == pytest.approx(
            evaluate_intensity(single, p), abs=1e-9)


class TestKernel:
    def test_orthogonal(self):
        assert kernel_affinity([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_scalar(self):
        assert kernel_affinity([0.8], [0.9]) == pytest.approx(0.72)

    def test_range_property(self):
        rng = np.random.default_rng(7)
        z = np.abs(rng.standard_normal((1_000_000, 4)))
        g = z / np.linalg.norm(z, axis=1, keepdims=True) * rng.random(1_000_000)[:, None] ** 0.25
        z2 = np.abs(rng.standard_normal((1_000_000, 4)))
        r = z2 / np.linalg.norm(z2, axis=1, keepdims=True) * rng.random(1_000_000)[:, None] ** 0.25
        dots = np.einsum("ij,ij->i", g, r)
        assert dots.min() >= 0.0 and dots.max() <= 1.0

    def test_mismatch(self):
        with pytest.raises(ValueError):
            kernel_affinity([0.5], [0.5, 0.5])


class TestMoments:
    def test_uniform_analytic(self, uniform_model):
        s = moments(uniform_model)
        assert s.c_G == pytest.approx(2.0)
        assert s.c_R == pytest.approx(3.0)
        assert s.lam == pytest.approx(6.0)
        assert s.mu_G_norm[0] == pytest.approx(0.5)
        assert s.mu_R_norm[0] == pytest.approx(0.5)
        assert s.sigma_G[0, 0] == pytest.approx(1.0 / 3.0)
        assert s.gram_A[0, 0] == pytest.approx(4.0 / 3.0)
        assert s.gram_B[0, 0] == pytest.approx(3.0)

    def test_symmetric_gaussian_centered(self):
        m = Product(TruncGaussianSpec((0.5,), (100.0,), 1.0),
                    TruncGaussianSpec((0.5,), (100.0,), 1.0))
        s = moments(m)
        assert s.mu_G_norm[0] == pytest.approx(0.5, abs=1e-9)

    def test_normalized_mean_identity(self, gaussian_model):
        s = moments(gaussian_model)
        assert np.allclose(s.mu_G_norm, s.mu_G / s.c_G)
        assert np.allclose(s.mu_R_norm, s.mu_R / s.c_R)

    def test_psd_matrices(self, gaussian_model, mc_scheme):
        for scheme in (QuadratureSpec(), mc_scheme):
            s = moments(gaussian_model, scheme)
            for mat in (s.sigma_G, s.sigma_R, s.gram_A, s.gram_B):
                assert np.allclose(mat, mat.T)
                assert np.linalg.eigvalsh(mat).min() >= -1e-12

    def test_determinism_bit_identical(self):
        mix = MixtureOfProducts((
            MixtureComponent("a", TruncGaussianSpec((0.3, 0.2, 0.1, 0.1), (50.0,) * 4, 2.0),
                             TruncGaussianSpec((0.2, 0.3, 0.1, 0.1), (50.0,) * 4, 2.0)),
        ))
        sch = QuadratureSpec(method="mc", mc_samples=100_000, seed=99)
        a = moments(mix, sch)
        b = moments(mix, sch)
        assert np.array_equal(a.sigma_G, b.sigma_G)
        assert np.array_equal(a.gram_A, b.gram_A)
        assert a.lam == b.lam

    def test_mc_requires_seed(self, uniform_model):
        with pytest.raises(ValueError):
            moments(uniform_model, QuadratureSpec(method="mc", seed=None))

    def test_mc_agrees_with_deterministic_d1(self, gaussian_model):
        exact = moments(gaussian_model)
        # standard error from replicate Monte Carlo runs
        vals = []
        for seed in range(8):
            s = moments(gaussian_model,
                        QuadratureSpec(method="mc", mc_samples=100_000, seed=seed))
            vals.append(s.mu_G_norm[0])
        vals = np.array(vals)
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        assert abs(vals.mean() - exact.mu_G_norm[0]) < 3 * se + 1e-12

    def test_mc_agrees_with_grid_d2(self):
        model = Product(TruncGaussianSpec((0.4, 0.3), (30.0, 30.0), 2.0),
                        TruncGaussianSpec((0.3, 0.4), (30.0, 30.0), 2.0))
        grid = moments(model, QuadratureSpec(method="grid", grid_points=512))
        vals = []
        for seed in range(8):
            s = moments(model, QuadratureSpec(method="mc", mc_samples=200_000, seed=seed))
            vals.append(s.mu_G_norm[0])
        vals = np.array(vals)
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        assert abs(vals.mean() - grid.mu_G_norm[0]) < 3 * se + 1e-9

    def test_mixture_lambda_is_gamma_sum(self):
        mix = MixtureOfProducts((
            MixtureComponent("a", UniformBall(2.0, 1), UniformBall(3.0, 1)),
            MixtureComponent("b", UniformBall(1.0, 1), UniformBall(4.0, 1)),
        ))
        assert total_intensity(mix) == pytest.approx(10.0)
        s = moments(mix)
        assert s.lam == pytest.approx(10.0)
        # mixture normalized mean is the abundance-weighted component mean
        assert s.mu_G_norm[0] == pytest.approx(0.5)

    def test_tabulated_joint_moments(self):
        n = 64
        vals = np.ones((n, n))
        joint = TabulatedJoint(GridField(2, n, vals, np.ones((n, n), bool)))
        s = moments(joint)
        assert s.lam == pytest.approx(1.0)
        assert s.mu_G_norm[0] == pytest.approx(0.5)


class TestKernelProperties:
    def test_lipschitz_zero_violations(self):
        rng = np.random.default_rng(3)
        n = 1_000_000

        def draw(k):
            z = np.abs(rng.standard_normal((k, 4)))
            return z / np.linalg.norm(z, axis=1, keepdims=True) * rng.random(k)[:, None] ** 0.25

        g1, g2, rt = draw(n), draw(n), draw(n)
        lhs = np.abs(np.einsum("ij,ij->i", g1, rt) - np.einsum("ij,ij->i", g2, rt))
        rhs = np.linalg.norm(rt, axis=1) * np.linalg.norm(g1 - g2, axis=1)
        assert int(np.sum(lhs > rhs + 1e-12)) == 0

    def test_isotropic_rms_scaling(self):
        d, n = 4, 1_000_000
        rng = np.random.default_rng(4)
        g = np.array([0.4, 0.3, 0.2, 0.1])
        r = np.array([0.3, 0.3, 0.3, 0.3])
        delta = 0.05
        u = rng.standard_normal((n, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        shifted = r + delta * u
        ok = (shifted >= 0).all(axis=1) & (np.einsum("ij,ij->i", shifted, shifted) <= 1.0)
        assert ok.mean() > 0.999  # displacement keeps r interior almost surely
        dk = (shifted[ok] - r) @ g
        rms = math.sqrt(float(np.mean(dk * dk)))
        expect = np.linalg.norm(g) * delta / math.sqrt(d)
        assert abs(rms - expect) / expect < 0.02


class TestSerialization:
    def test_round_trip_product(self, gaussian_model, tmp_path):
        path = str(tmp_path / "model.json")
        save_model(gaussian_model, path)
        back = load_model(path)
        assert back == gaussian_model

    def test_round_trip_mixture(self, tmp_path):
        mix = MixtureOfProducts((
            MixtureComponent("x", UniformBall(2.0, 2),
                             TruncGaussianSpec((0.5, 0.2), (30.0, 40.0), 1.5)),
        ))
        path = str(tmp_path / "mix.json")
        save_model(mix, path)
        assert load_model(path) == mix

    def test_round_trip_tabulated(self, tmp_path):
        n = 16
        rng = np.random.default_rng(0)
        joint = TabulatedJoint(GridField(2, n, rng.random((n, n)), np.ones((n, n), bool)))
        path = str(tmp_path / "joint.json")
        save_model(joint, path)
        back = load_model(path)
        assert np.allclose(back.field.values, joint.field.values)

    def test_dict_forms(self, uniform_model):
        sink = []
        doc = model_to_dict(uniform_model, sink)
        assert doc["kind"] == "product"
        assert model_from_dict(doc) == uniform_model
