import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import eval_legendre

from colnoise.closures import constant_diffusion_field
from colnoise.errors import ParameterError, StepFailureError, UnsupportedCoefficientError
from colnoise.pufem import (
    Cover,
    DiscreteSystem,
    PuBasis,
    cn_step,
    evaluate_pdf,
    legendre,
    pu_mother,
    pu_mother_deriv,
    shape_eval,
)


def make_system(gmin=-1.0, gmax=1.0, K=10, local_dim=4, s=2):
    return DiscreteSystem(PuBasis(s, local_dim), Cover(gmin, gmax, K))


class TestPuMother:
    def test_center_value(self):
        assert pu_mother(2, 0.0) == pytest.approx(1.0, rel=0, abs=0)

    def test_edge_values(self):
        assert pu_mother(2, 1.0) == 0.0
        assert pu_mother(2, -1.0) == 0.0

    def test_branch_midpoint(self):
        # y_L(-0.5) = 0 and the branch polynomial has constant term 1/2
        assert pu_mother(2, -0.5) == pytest.approx(0.5)

    def test_outside_support(self):
        assert pu_mother(2, 1.5) == 0.0
        assert pu_mother(3, -2.0) == 0.0

    def test_unsupported_order(self):
        with pytest.raises(ParameterError):
            pu_mother(4, 0.0)

    @given(st.floats(-1, 1), st.sampled_from([1, 2, 3]))
    @settings(max_examples=150)
    def test_two_sided_sum(self, xi, s):
        # adjacent blending functions overlap with offset 1 in xi
        left = pu_mother(s, xi)
        right = pu_mother(s, xi - 1.0) if xi >= 0 else pu_mother(s, xi + 1.0)
        assert left + right == pytest.approx(1.0, abs=1e-12)

    @staticmethod
    def one_sided_derivatives(s, joint, side, max_order):
        # numerical one-sided derivatives from a local polynomial fit of
        # sampled values (the branches are polynomials, so this is exact
        # up to conditioning)
        xs = joint + side * np.linspace(1e-9, 0.08, 9)
        coeffs = np.polynomial.polynomial.polyfit(xs - joint, pu_mother(s, xs), 6)
        return [np.polynomial.polynomial.polyval(
            0.0, np.polynomial.polynomial.polyder(coeffs, m)) for m in range(max_order + 1)]

    @pytest.mark.parametrize("s", [1, 2, 3])
    def test_smoothness_across_joints(self, s):
        # Numerical one-sided derivatives agree at the piece joints for all
        # orders the blending family actually provides.  The tabulated
        # coefficient family is globally C^(s-1): the s = 1 member is the
        # C^0 hat, and d^s/dxi^s jumps at the subdomain edges (e.g.
        # g_2'' = -3z/2 does not vanish at z = -1).
        for joint in (-1.0, 0.0, 1.0):
            left = self.one_sided_derivatives(s, joint, -1.0, s - 1)
            right = self.one_sided_derivatives(s, joint, +1.0, s - 1)
            for order in range(s):
                assert abs(left[order] - right[order]) < 1e-6 * max(1.0, abs(left[order]))

    def test_derivative_matches_finite_difference(self):
        xs = np.linspace(-0.95, 0.95, 37)
        eps = 1e-6
        fd = (pu_mother(2, xs + eps) - pu_mother(2, xs - eps)) / (2 * eps)
        assert np.allclose(pu_mother_deriv(2, xs), fd, atol=1e-8)


class TestLegendre:
    def test_low_orders(self):
        xs = np.linspace(-1, 1, 5)
        assert np.allclose(legendre(0, xs), 1.0)
        assert np.allclose(legendre(1, xs), xs)
        assert legendre(2, 0.5) == pytest.approx(-0.125)
        assert legendre(4, 1.0) == pytest.approx(1.0)

    @given(st.integers(0, 12), st.floats(-1, 1))
    @settings(max_examples=100)
    def test_against_scipy(self, n, xi):
        assert legendre(n, xi) == pytest.approx(float(eval_legendre(n, xi)), rel=1e-10, abs=1e-12)


class TestCoverAndShapes:
    def test_cover_geometry(self):
        cover = Cover(-4.0, 4.0, 50)
        h = cover.h
        assert h == pytest.approx(8.0 / 51.0)
        for k in range(cover.subdomains):
            lo, hi = cover.bounds(k)
            assert hi - lo == pytest.approx(2 * h)
        # adjacent overlap is exactly h; union covers the domain
        assert cover.bounds(0)[0] == -4.0
        assert cover.bounds(cover.subdomains - 1)[1] == pytest.approx(4.0)
        assert cover.bounds(1)[0] == pytest.approx(cover.bounds(0)[0] + h)

    def test_partition_of_unity_interior(self):
        cover = Cover(-4.0, 4.0, 50)
        xs = np.linspace(*cover.interior, 1000)
        total = sum(pu_mother(2, cover.to_reference(k, xs)) for k in range(cover.subdomains))
        assert np.max(np.abs(total - 1.0)) <= 1e-12

    def test_shape_values(self):
        basis, cover = PuBasis(2, 4), Cover(-1.0, 1.0, 10)
        center = cover.center(3)
        assert shape_eval(basis, cover, 3, 0, center) == pytest.approx(1.0)
        assert shape_eval(basis, cover, 3, 1, center) == 0.0
        lo, hi = cover.bounds(3)
        assert shape_eval(basis, cover, 3, 2, hi + 0.01) == 0.0
        assert shape_eval(basis, cover, 3, 2, lo - 0.01) == 0.0


class TestMassMatrix:
    def test_symmetry_and_diagonal(self):
        sy = make_system()
        assert np.max(np.abs(sy.mass - sy.mass.T)) == 0.0
        assert np.all(np.diag(sy.mass) > 0.0)

    def test_positive_semidefinite(self):
        sy = make_system()
        eigs = np.linalg.eigvalsh(sy.mass)
        assert eigs.min() > -1e-14

    def test_sparsity_band(self):
        sy = make_system()
        md = sy.basis.local_dim
        for j in range(sy.n_dof):
            for m in range(sy.n_dof):
                if abs(j // md - m // md) > 1:
                    assert sy.mass[j, m] == 0.0

    def test_quadrature_exactness(self):
        sy = make_system()
        base = sy._gauss_order(0)
        a = sy._assemble_bilinear(lambda x: np.ones_like(x), 0, grad_row=False,
                                  grad_col=False, n_gauss=base)
        b = sy._assemble_bilinear(lambda x: np.ones_like(x), 0, grad_row=False,
                                  grad_col=False, n_gauss=base + 4)
        scale = np.max(np.abs(a))
        assert np.max(np.abs(a - b)) <= 1e-13 * scale


class TestStiffness:
    def test_pure_diffusion_is_negative_gradient_form(self):
        sy = make_system()
        b = 0.37
        a = sy.assemble_stiffness([0.0], constant_diffusion_field("test", 0.0, b))
        assert np.allclose(a, -b * sy.grad, rtol=0, atol=1e-15)
        assert np.max(np.abs(a - a.T)) < 1e-14
        eigs = np.linalg.eigvalsh(-a)
        assert eigs.min() > -1e-12

    def test_zero_coefficients_zero_matrix(self):
        sy = make_system()
        a = sy.assemble_stiffness([0.0], ([0.0], [0.0]))
        assert np.all(a == 0.0)

    def test_interior_conservation_columns(self):
        # testing against the constant-one function: rows weighted by the
        # mu=0 coefficients annihilate interior columns
        sy = make_system(gmin=-4.0, gmax=4.0, K=20)
        field = constant_diffusion_field("test", 0.0, 0.5)
        a = sy.assemble_stiffness([0.0, 1.0, 0.0, -1.0], field)
        c = np.zeros(sy.n_dof)
        c[0::sy.basis.local_dim] = 1.0
        r = c @ a
        md = sy.basis.local_dim
        interior = slice(2 * md, sy.n_dof - 2 * md)
        assert np.max(np.abs(r[interior])) <= 1e-10 * np.max(np.abs(a))

    def test_quadrature_exactness_stiffness(self):
        sy = make_system()
        field = ([0.1, 0.0, 0.3, 0.0, 0.2], [0.0, 0.6, 0.0, 0.8])
        base = sy._gauss_order(4)
        a = sy.assemble_stiffness([0.0, 1.0, 0.0, -1.0], field, n_gauss=base)
        b = sy.assemble_stiffness([0.0, 1.0, 0.0, -1.0], field, n_gauss=2 * base)
        assert np.max(np.abs(a - b)) <= 1e-13 * np.max(np.abs(a))

    def test_callable_coefficients_rejected(self):
        sy = make_system()
        with pytest.raises(UnsupportedCoefficientError):
            sy.assemble_stiffness(lambda x: x, ([1.0], [0.0]))
        with pytest.raises(UnsupportedCoefficientError):
            sy.assemble_stiffness([0.0], lambda x: np.exp(x))
        with pytest.raises(UnsupportedCoefficientError):
            sy.assemble_stiffness([0.0, np.inf], ([1.0], [0.0]))


class TestProjection:
    def test_recovers_representable_function(self):
        sy = make_system()
        rng = np.random.default_rng(1)
        w_ref = rng.standard_normal(sy.n_dof)
        w = sy.project_initial(lambda x: sy.evaluate(w_ref, x))
        assert np.max(np.abs(w - w_ref)) <= 1e-10 * max(1.0, np.max(np.abs(w_ref)))

    def test_gaussian_mass(self):
        sy = make_system(gmin=-4.0, gmax=4.0, K=50, local_dim=4)
        sigma = 0.6
        f0 = lambda x: np.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
        w = sy.project_initial(f0)
        mass = float(sy.mass_vector @ w)
        assert abs(mass - 1.0) <= 1e-6

    def test_zero_density(self):
        sy = make_system()
        w = sy.project_initial(lambda x: np.zeros_like(x))
        assert np.all(w == 0.0)

    def test_roundtrip_error_decreases_with_dof(self):
        sigma = 0.6
        f0 = lambda x: np.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
        errors = []
        for K in (25, 50, 100):
            sy = make_system(gmin=-4.0, gmax=4.0, K=K, local_dim=4)
            w = sy.project_initial(f0)
            lo, hi = sy.cover.interior
            xs = np.linspace(lo, hi, 1501)
            errors.append(np.max(np.abs(sy.evaluate(w, xs) - f0(xs))))
        assert errors[0] > errors[1] > errors[2]
        assert errors[2] < 1e-6


class TestEvaluate:
    def test_zero_weights(self):
        sy = make_system()
        assert np.all(sy.evaluate(np.zeros(sy.n_dof), np.linspace(-1, 1, 33)) == 0.0)

    def test_single_shape_matches_shape_eval(self):
        sy = make_system()
        w = np.zeros(sy.n_dof)
        k, mu = 4, 2
        w[sy.basis.global_index(k, mu)] = 1.0
        xs = np.linspace(-1, 1, 101)
        ref = np.array([shape_eval(sy.basis, sy.cover, k, mu, x) for x in xs])
        assert np.allclose(sy.evaluate(w, xs), ref, atol=1e-14)

    def test_free_function_wrapper(self):
        basis, cover = PuBasis(2, 3), Cover(-2.0, 2.0, 8)
        w = np.ones(basis.total_dof(cover))
        xs = np.linspace(-2, 2, 41)
        direct = DiscreteSystem(basis, cover).evaluate(w, xs)
        assert np.allclose(evaluate_pdf(basis, cover, w, xs), direct)


class TestCnStep:
    def test_identity_step(self):
        sy = make_system()
        w = np.arange(sy.n_dof, dtype=float)
        zero = np.zeros_like(sy.mass)
        out = cn_step(sy.mass, zero, zero, w, 0.1)
        # exact up to the LU solve residual of C x = C w
        assert np.allclose(out, w, rtol=1e-12, atol=1e-10)

    def test_scalar_formula(self):
        c = np.array([[1.0]])
        a = np.array([[-2.0]])
        w = np.array([3.0])
        dt = 0.1
        out = cn_step(c, a, a, w, dt)
        expected = 3.0 * (1.0 + a[0, 0] * dt / 2) / (1.0 - a[0, 0] * dt / 2)
        assert out[0] == pytest.approx(expected, rel=1e-14)

    def test_pure_diffusion_conserves_mass(self):
        sy = make_system(gmin=-4.0, gmax=4.0, K=30)
        f0 = lambda x: np.exp(-0.5 * (x / 0.5) ** 2) / (0.5 * math.sqrt(2 * math.pi))
        w = sy.project_initial(f0)
        a = sy.assemble_stiffness([0.0], constant_diffusion_field("test", 0.0, 0.2))
        mass0 = float(sy.mass_vector @ w)
        for _ in range(5):
            w = cn_step(sy.mass, a, a, w, 0.01)
            assert abs(float(sy.mass_vector @ w) - mass0) <= 1e-10

    def test_singular_system(self):
        c = np.zeros((2, 2))
        with pytest.raises(StepFailureError):
            cn_step(c, c, c, np.ones(2), 0.1)

    def test_invalid_dt(self):
        sy = make_system()
        with pytest.raises(ParameterError):
            cn_step(sy.mass, sy.mass, sy.mass, np.zeros(sy.n_dof), 0.0)
