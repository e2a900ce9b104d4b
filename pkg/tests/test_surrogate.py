import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from spinscape.surrogate import (
    HessianModel,
    SurrogateSample,
    SurrogateSpec,
    build_surrogate,
    conditional_hessian_params,
    covariance_mc,
    eval_h,
    grad_h,
    hess_h,
    kron_power,
    riemannian_grad,
    riemannian_hess,
    sample_conditional_hessian,
    spec_from_text,
    spec_to_text,
    tangent_basis,
)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def zero_rho(H):
    return (0.0,) * H


class TestBuildSurrogate:
    def test_deterministic(self):
        spec = SurrogateSpec(H=3, N=3, rho_l=zero_rho(3))
        s1 = build_surrogate(spec, seed=7)
        s2 = build_surrogate(spec, seed=7)
        assert s1.coefficients.size == 27
        assert np.array_equal(s1.coefficients, s2.coefficients)

    def test_size(self):
        spec = SurrogateSpec(H=4, N=8, rho_l=zero_rho(4))
        assert build_surrogate(spec, seed=0).coefficients.size == 4096

    def test_cap(self):
        spec = SurrogateSpec(H=3, N=500, rho_l=zero_rho(3))
        with pytest.raises(ValueError, match="cap"):
            build_surrogate(spec, seed=0)


class TestEvalH:
    def test_pole_pure_spin_glass(self):
        spec = SurrogateSpec(H=3, N=4, rho_l=zero_rho(3))
        s = build_surrogate(spec, seed=11)
        e1 = np.zeros(4)
        e1[0] = 1.0
        assert_allclose(eval_h(s, e1), s.coefficients[0, 0, 0], rtol=0, atol=1e-14)

    def test_deterministic_term_at_pole(self):
        spec = SurrogateSpec(H=4, N=5, rho_l=(0.3, -0.2, 0.1, 0.05))
        s = SurrogateSample(spec=spec, coefficients=np.zeros((5,) * 4))
        e1 = np.zeros(5)
        e1[0] = 1.0
        expected = sum(
            spec.rho_l[l - 1] * 5 ** (-l / 2) for l in range(1, 5)
        )
        assert_allclose(eval_h(s, e1), expected, rtol=1e-14, atol=0)

    def test_hand_expanded_bilinear(self):
        # H=2, N=2: h = X00 w0^2 + (X01 + X10) w0 w1 + X11 w1^2
        #           + rho1 2^{-1/2} (w0 + w1) + rho2 / 2
        spec = SurrogateSpec(H=2, N=2, rho_l=(0.4, -0.7))
        x = np.array([[1.3, -0.2], [0.5, 2.0]])
        s = SurrogateSample(spec=spec, coefficients=x)
        w = unit([0.6, 0.8])
        by_hand = (
            x[0, 0] * w[0] ** 2 + (x[0, 1] + x[1, 0]) * w[0] * w[1]
            + x[1, 1] * w[1] ** 2
            + 0.4 * 2 ** -0.5 * (w[0] + w[1]) - 0.7 / 2
        )
        assert_allclose(eval_h(s, w), by_hand, rtol=1e-14, atol=0)

    def test_non_unit_rejected(self):
        spec = SurrogateSpec(H=2, N=3, rho_l=zero_rho(2))
        s = build_surrogate(spec, seed=0)
        with pytest.raises(ValueError, match="unit"):
            eval_h(s, np.array([1.0, 1.0, 0.0]))


class TestDerivatives:
    def test_gradient_finite_differences(self):
        rng = np.random.default_rng(42)
        spec = SurrogateSpec(H=3, N=5, rho_l=(0.3, 0.1, -0.2))
        s = build_surrogate(spec, seed=5)
        step = 1e-5
        for _ in range(100):
            w = unit(rng.standard_normal(5))
            g = grad_h(s, w)
            fd = np.zeros(5)
            for i in range(5):
                wp, wm = w.copy(), w.copy()
                wp[i] += step
                wm[i] -= step
                fd[i] = (eval_h(s, wp, check_unit=False)
                         - eval_h(s, wm, check_unit=False)) / (2 * step)
            assert_allclose(fd, g, rtol=1e-5, atol=1e-6)

    def test_hessian_symmetric_and_fd(self):
        rng = np.random.default_rng(1)
        spec = SurrogateSpec(H=4, N=4, rho_l=(0.2, 0.0, 0.1, 0.0))
        s = build_surrogate(spec, seed=9)
        w = unit(rng.standard_normal(4))
        he = hess_h(s, w)
        assert_allclose(he, he.T, rtol=0, atol=1e-12)
        step = 1e-5
        fd = np.zeros((4, 4))
        for i in range(4):
            wp, wm = w.copy(), w.copy()
            wp[i] += step
            wm[i] -= step
            fd[i] = (grad_h(s, wp, check_unit=False)
                     - grad_h(s, wm, check_unit=False)) / (2 * step)
        assert_allclose(fd, he, rtol=1e-5, atol=1e-5)

    def test_riemannian_grad_is_tangent(self):
        rng = np.random.default_rng(3)
        spec = SurrogateSpec(H=3, N=6, rho_l=(0.5, 0.0, 0.0))
        s = build_surrogate(spec, seed=2)
        w = unit(rng.standard_normal(6))
        rg = riemannian_grad(s, w)
        assert abs(rg @ w) < 1e-12

    def test_riemannian_hess_matches_great_circle(self):
        # second derivative of h along a geodesic equals the tangent-basis
        # quadratic form of the Lagrange Hessian
        rng = np.random.default_rng(8)
        spec = SurrogateSpec(H=3, N=5, rho_l=(0.3, -0.1, 0.2))
        s = build_surrogate(spec, seed=13)
        w = unit(rng.standard_normal(5))
        t = rng.standard_normal(5)
        t = unit(t - w * (w @ t))
        B = tangent_basis(w)
        coords = B.T @ t
        quad = coords @ riemannian_hess(s, w) @ coords
        step = 1e-4
        vals = [
            eval_h(s, math.cos(a) * w + math.sin(a) * t)
            for a in (-step, 0.0, step)
        ]
        fd2 = (vals[0] - 2 * vals[1] + vals[2]) / step ** 2
        assert_allclose(fd2, quad, rtol=2e-4, atol=2e-4)

    def test_tangent_basis_orthonormal(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            w = unit(rng.standard_normal(7))
            B = tangent_basis(w)
            assert_allclose(B.T @ B, np.eye(6), rtol=0, atol=1e-12)
            assert_allclose(B.T @ w, np.zeros(6), rtol=0, atol=1e-12)


class TestCovarianceMC:
    def test_variance_is_one(self):
        spec = SurrogateSpec(H=3, N=5, rho_l=(0.3, 0.1, 0.0))
        w = unit(np.ones(5))
        est, se = covariance_mc(spec, w, w, samples=4000, seed=10)
        assert abs(est - 1.0) <= 3 * se

    def test_orthogonal_points(self):
        spec = SurrogateSpec(H=3, N=4, rho_l=zero_rho(3))
        w = np.array([1.0, 0.0, 0.0, 0.0])
        w2 = np.array([0.0, 1.0, 0.0, 0.0])
        est, se = covariance_mc(spec, w, w2, samples=4000, seed=3)
        assert abs(est) <= 3 * se

    def test_half_overlap_cubed(self):
        spec = SurrogateSpec(H=3, N=4, rho_l=zero_rho(3))
        w = np.array([1.0, 0.0, 0.0, 0.0])
        w2 = np.array([0.5, math.sqrt(0.75), 0.0, 0.0])
        est, se = covariance_mc(spec, w, w2, samples=6000, seed=4)
        assert abs(est - 0.125) <= 3 * se

    def test_power_law_random_configs(self):
        rng = np.random.default_rng(77)
        for k in range(5):
            H = int(rng.integers(2, 6))
            N = int(rng.integers(3, 9))
            spec = SurrogateSpec(H=H, N=N, rho_l=zero_rho(H))
            w = unit(rng.standard_normal(N))
            w2 = unit(rng.standard_normal(N))
            est, se = covariance_mc(spec, w, w2, samples=4000, seed=100 + k)
            target = float(w @ w2) ** H
            assert abs(est - target) <= 3 * se + 1e-12

    def test_sample_floor(self):
        spec = SurrogateSpec(H=2, N=3, rho_l=zero_rho(2))
        w = np.array([1.0, 0.0, 0.0])
        with pytest.raises(ValueError):
            covariance_mc(spec, w, w, samples=10)


class TestConditionalHessianParams:
    def test_zero_rho_kills_everything(self):
        spec = SurrogateSpec(H=4, N=30, rho_l=zero_rho(4))
        model = conditional_hessian_params(spec)
        assert model.xi0 == model.xi1 == model.xi2 == model.xi3 == 0.0
        assert_allclose(model.nu, np.zeros(29), rtol=0, atol=0)
        assert model.s1 == 0.0
        assert model.s2_scaled == 0.0
        assert_allclose(model.s_matrix(), np.zeros((29, 29)), rtol=0, atol=0)

    def test_quadratic_matches_dense_eigensolver(self):
        spec = SurrogateSpec(H=3, N=100, rho_l=(1.0, 0.0, 0.0))
        model = conditional_hessian_params(spec)
        s = model.s_matrix()
        evals = np.linalg.eigvalsh(s)
        idx = np.argsort(np.abs(evals))[::-1]
        top2 = np.sort(evals[idx[:2]])
        pref = model.s_prefactor()
        a, b, c = model.s_quad
        n_bulk = spec.N - 2
        tr = a + c * n_bulk
        det = n_bulk * (a * c - b * b)
        disc = math.sqrt(tr * tr - 4 * det)
        quad_roots = np.sort(np.array([tr - disc, tr + disc]) / 2 * pref)
        assert_allclose(quad_roots, top2, rtol=1e-10, atol=1e-16)

    def test_H2_empty_sums(self):
        spec = SurrogateSpec(H=2, N=20, rho_l=(0.5, -0.3))
        model = conditional_hessian_params(spec)
        assert model.xi1 == model.xi2 == model.xi3 == 0.0
        assert model.xi0 != 0.0

    def test_rank_two(self):
        spec = SurrogateSpec(H=4, N=50, rho_l=(0.8, 0.4, 0.0, 0.0))
        model = conditional_hessian_params(spec)
        a, b, c = model.s_quad
        assert b * b != a * c and c != 0.0
        evals = np.sort(np.abs(np.linalg.eigvalsh(model.s_matrix())))[::-1]
        assert evals[2] <= 1e-10

    def test_eigenvalue_scaling_stability(self):
        spec200 = SurrogateSpec(H=3, N=200, rho_l=(0.6, 0.3, 0.1))
        spec800 = SurrogateSpec(H=3, N=800, rho_l=(0.6, 0.3, 0.1))
        m200 = conditional_hessian_params(spec200)
        m800 = conditional_hessian_params(spec800)
        assert abs(m200.s1 - m800.s1) / abs(m800.s1) < 0.02
        assert abs(m200.s2_scaled - m800.s2_scaled) / abs(m800.s2_scaled) < 0.02

    def test_nu_norm_limit(self):
        H = 4
        rho = (0.7, 0.2, 0.1, 0.05)
        spec = SurrogateSpec(H=H, N=10_000, rho_l=rho)
        model = conditional_hessian_params(spec)
        limit = rho[0] ** 2 * (H - 1) ** 2
        assert abs(float(model.nu @ model.nu) - limit) / limit < 0.01

    def test_appendix_switch_changes_values(self):
        spec = SurrogateSpec(H=3, N=100, rho_l=(1.0, 0.0, 0.0))
        base = conditional_hessian_params(spec)
        alt = conditional_hessian_params(spec, appendix_a_xi=True)
        assert alt.xi0 != base.xi0
        assert_allclose(alt.xi0, base.xi0 / 10.0, rtol=1e-12)  # extra N^{-1/2}


class TestSampleConditionalHessian:
    def setup_model(self, H=3, N=8, rho=(0.9, 0.2, 0.0)):
        spec = SurrogateSpec(H=H, N=N, rho_l=rho)
        return conditional_hessian_params(spec)

    def test_mean_matches_conditional_law(self):
        model = self.setup_model()
        H = model.spec.H
        x = 0.7
        draws = 10_000
        acc = np.zeros((7, 7))
        for i in range(draws):
            acc += sample_conditional_hessian(model, x, seed=i)
        mean = acc / draws
        a, b, c = model.s_quad
        expect = np.full((7, 7), c)
        expect[0, :] = b
        expect[:, 0] = b
        expect[0, 0] = a
        expect -= H * (x - model.xi0) * np.eye(7)
        # entry stdev is sqrt(H(H-1)(1+delta)); stderr over draws
        se_off = math.sqrt(H * (H - 1)) / math.sqrt(draws)
        se_diag = math.sqrt(2 * H * (H - 1)) / math.sqrt(draws)
        assert abs(mean[1, 2] - expect[1, 2]) <= 3 * se_off
        assert abs(mean[0, 3] - expect[0, 3]) <= 3 * se_off
        assert abs(mean[0, 0] - expect[0, 0]) <= 3 * se_diag
        assert abs(mean[4, 4] - expect[4, 4]) <= 3 * se_diag

    def test_offdiag_variance(self):
        model = self.setup_model()
        H = model.spec.H
        draws = 10_000
        vals = np.empty(draws)
        for i in range(draws):
            vals[i] = sample_conditional_hessian(model, 0.3, seed=i)[2, 5]
        var = float(np.var(vals, ddof=1))
        target = H * (H - 1)
        se = target * math.sqrt(2.0 / (draws - 1))
        assert abs(var - target) <= 3 * se

    def test_pure_goe_at_center(self):
        model = self.setup_model(rho=(0.0, 0.0, 0.0))
        draws = 4000
        acc = 0.0
        for i in range(draws):
            acc += sample_conditional_hessian(model, 0.0, seed=i)[1, 3]
        mean = acc / draws
        se = math.sqrt(model.spec.H * (model.spec.H - 1)) / math.sqrt(draws)
        assert abs(mean) <= 3 * se


class TestSpecSerialization:
    def test_round_trip(self):
        spec = SurrogateSpec(H=3, N=40, rho_l=(0.25, -0.5, 0.125))
        again = spec_from_text(spec_to_text(spec))
        assert again == spec

    def test_missing_field(self):
        with pytest.raises(ValueError):
            spec_from_text("H=3\nN=10\n")


class TestKronPower:
    def test_matches_outer(self):
        w = np.array([0.5, -1.5, 2.0])
        k2 = kron_power(w, 2)
        assert_allclose(k2, np.outer(w, w).reshape(-1), rtol=0, atol=0)
