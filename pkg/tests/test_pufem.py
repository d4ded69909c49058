"""Partition-of-unity FEM: cover geometry, PU identities, Legendre bases,
assembly, projection and Crank-Nicolson stepping."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import genfpk.coefficients as cf
from genfpk.errors import DomainError, ParameterError
from genfpk.model import InitialSpec, ModelSpec, NoiseSpec, OUKernel
from genfpk.pufem import (
    Cover,
    PdfField,
    PuFunction,
    PufemSpace,
    affine_to_abs,
    affine_to_ref,
    assemble_mass,
    assemble_system,
    build_cover,
    crank_nicolson_step,
    fit_initial,
    legendre_eval,
    legendre_eval_all,
    mother_pu_deriv,
    mother_pu_eval,
    pdf_eval,
    pdf_moment,
)


class TestCover:
    def test_reference_layout(self):
        c = build_cover(0.0, 10.0, 4)
        assert c.h == pytest.approx(2.0)
        assert c.subdomains == [(0.0, 4.0), (2.0, 6.0), (4.0, 8.0), (6.0, 10.0)]

    def test_last_subdomain_ends_at_omega_max(self):
        for K in (2, 5, 17, 50):
            c = build_cover(-2.3, 4.1, K)
            assert c.subdomain(K - 1)[1] == pytest.approx(4.1)

    def test_two_subdomain_overlap(self):
        c = build_cover(-1.0, 1.0, 2)
        assert c.h == pytest.approx(2 / 3)
        lo1, hi1 = c.subdomain(0)
        lo2, hi2 = c.subdomain(1)
        assert (lo2, hi1) == (pytest.approx(-1 / 3), pytest.approx(1 / 3))

    def test_subdomain_length_and_overlap(self):
        c = build_cover(0.0, 7.0, 6)
        for k in range(6):
            lo, hi = c.subdomain(k)
            assert hi - lo == pytest.approx(2 * c.h)
        for k in range(5):
            assert c.subdomain(k)[1] - c.subdomain(k + 1)[0] == pytest.approx(c.h)

    def test_k_too_small(self):
        with pytest.raises(ParameterError):
            build_cover(0.0, 1.0, 1)


class TestAffineMaps:
    def test_midpoint_maps_to_zero(self):
        c = build_cover(0.0, 10.0, 4)
        lo, hi = c.subdomain(1)
        assert affine_to_ref(c, 1, (lo + hi) / 2) == pytest.approx(0.0)

    def test_endpoints(self):
        c = build_cover(-3.0, 5.0, 3)
        lo, hi = c.subdomain(2)
        assert affine_to_ref(c, 2, lo) == pytest.approx(-1.0)
        assert affine_to_ref(c, 2, hi) == pytest.approx(1.0)
        assert affine_to_abs(c, 2, -1.0) == pytest.approx(lo)

    @given(st.integers(0, 3), st.floats(-1, 1))
    @settings(max_examples=200)
    def test_round_trip(self, k, xi):
        c = build_cover(-2.0, 3.0, 4)
        assert affine_to_ref(c, k, affine_to_abs(c, k, xi)) == pytest.approx(xi, abs=1e-13)

    def test_out_of_subdomain(self):
        c = build_cover(0.0, 10.0, 4)
        with pytest.raises(DomainError):
            affine_to_ref(c, 0, 5.0)
        with pytest.raises(DomainError):
            affine_to_abs(c, 0, 1.5)


class TestPuFunction:
    @pytest.mark.parametrize("s", [1, 2, 3])
    def test_branch_conditions(self, s):
        pu = PuFunction(s=s)
        assert pu.g(1.0) == pytest.approx(1.0)
        assert pu.g(0.0) == pytest.approx(0.5)
        for z in np.linspace(-1, 1, 21):
            assert pu.g(z) + pu.g(-z) == pytest.approx(1.0)

    @pytest.mark.parametrize("s", [2, 3])
    def test_flat_derivatives_at_one(self, s):
        """Class s has derivatives 1..s-1 vanishing at z = 1."""
        pu = PuFunction(s=s)
        assert pu.g_prime(1.0) == pytest.approx(0.0, abs=1e-12)
        if s == 3:
            d = 1e-5
            fd2 = (pu.g_prime(1.0 + d) - pu.g_prime(1.0 - d)) / (2 * d)
            assert fd2 == pytest.approx(0.0, abs=1e-6)

    def test_mother_values(self):
        pu = PuFunction(s=2)
        assert mother_pu_eval(pu, 0.0) == pytest.approx(1.0)
        assert mother_pu_eval(pu, 1.0) == pytest.approx(0.0)
        assert mother_pu_eval(pu, -1.0) == pytest.approx(0.0)
        for s in (1, 2, 3):
            p = PuFunction(s=s)
            assert mother_pu_eval(p, 0.5) == pytest.approx(0.5)
            assert mother_pu_eval(p, -0.5) == pytest.approx(0.5)

    def test_mother_zero_outside(self):
        pu = PuFunction(s=2)
        assert mother_pu_eval(pu, 1.5) == 0.0
        assert mother_pu_deriv(pu, -2.0) == 0.0

    @pytest.mark.parametrize("s", [1, 2, 3])
    def test_smoothness_across_knots(self, s):
        """Derivatives up to order s-1 are continuous at xi in {-1, 0, 1}."""
        pu = PuFunction(s=s)
        d = 1e-5

        def nth_deriv(xi, n):
            if n == 0:
                return mother_pu_eval(pu, xi)
            return (nth_deriv(xi + d, n - 1) - nth_deriv(xi - d, n - 1)) / (2 * d)

        for knot in (-1.0, 0.0, 1.0):
            for n in range(s):
                jump = abs(nth_deriv(knot + 5 * d, n) - nth_deriv(knot - 5 * d, n))
                # a genuine discontinuity would be O(1); the probe sits a
                # short distance off the knot so allow the Taylor drift
                assert jump < 2e-2, (knot, n, jump)

    def test_mother_deriv_matches_fd(self):
        pu = PuFunction(s=2)
        for xi in np.linspace(-0.95, 0.95, 37):
            if abs(xi) < 1e-3:
                continue
            d = 1e-6
            fd = (mother_pu_eval(pu, xi + d) - mother_pu_eval(pu, xi - d)) / (2 * d)
            assert mother_pu_deriv(pu, xi) == pytest.approx(fd, abs=1e-6)

    def test_invalid_smoothness(self):
        with pytest.raises(ParameterError):
            PuFunction(s=4)


class TestLegendre:
    def test_listed_values(self):
        assert legendre_eval(2, 0.5) == pytest.approx(-0.125)
        assert legendre_eval(0, 0.37) == 1.0
        for n in range(9):
            assert legendre_eval(n, 1.0) == pytest.approx(1.0)

    def test_orthogonality(self):
        xg, wg = np.polynomial.legendre.leggauss(16)
        P, _ = legendre_eval_all(7, xg)
        gram = (P * wg) @ P.T
        expected = np.diag([2.0 / (2 * n + 1) for n in range(8)])
        np.testing.assert_allclose(gram, expected, atol=1e-13)

    @given(st.integers(1, 8), st.floats(-0.99, 0.99))
    @settings(max_examples=150)
    def test_derivative_recurrence_vs_fd(self, n, xi):
        d = 1e-6
        _, dP = legendre_eval_all(n, np.array([xi]))
        fd = (legendre_eval(n, xi + d) - legendre_eval(n, xi - d)) / (2 * d)
        assert dP[n, 0] == pytest.approx(fd, rel=1e-4, abs=1e-5)


@pytest.fixture(scope="module")
def space():
    return PufemSpace(build_cover(-2.0, 2.0, 10), basis_count=4, smoothness=2)


class TestPufemSpace:
    def test_partition_of_unity(self, space):
        x = np.linspace(-2.0, 2.0, 10_001)
        total = sum(space.pu_eval(k, x) for k in range(space.cover.K))
        assert np.max(np.abs(total - 1.0)) <= 1e-12

    @pytest.mark.parametrize("s", [1, 2, 3])
    @pytest.mark.parametrize("K", [2, 3, 7])
    def test_partition_of_unity_variants(self, s, K):
        sp = PufemSpace(build_cover(-1.0, 3.0, K), basis_count=3, smoothness=s)
        x = np.linspace(-1.0, 3.0, 2001)
        total = sum(sp.pu_eval(k, x) for k in range(K))
        assert np.max(np.abs(total - 1.0)) <= 1e-12

    def test_pu_support(self, space):
        lo, hi = space.cover.subdomain(4)
        x_out = np.array([lo - 0.01, hi + 0.01])
        assert np.all(space.pu_eval(4, x_out) == 0.0)

    def test_index_map_bijection(self, space):
        seen = set()
        for k in range(space.cover.K):
            for mu in range(space.basis_counts[k]):
                m = space.global_index(k, mu)
                assert space.subdomain_of(m) == (k, mu)
                seen.add(m)
        assert seen == set(range(space.total_dof))

    def test_total_dof(self):
        sp = PufemSpace(build_cover(-2, 2, 50), basis_count=4, smoothness=2)
        assert sp.total_dof == 200


class TestAssembly:
    def test_mass_symmetric_positive_definite(self, space):
        C = assemble_mass(space)
        np.testing.assert_allclose(C, C.T, atol=1e-14)
        eigs = np.linalg.eigvalsh(C)
        assert np.min(eigs) > 0

    def test_mass_nonadjacent_blocks_vanish(self, space):
        C = assemble_mass(space)
        i = space.global_index(0, 0)
        j = space.global_index(3, 0)
        assert C[i, j] == 0.0

    def test_mass_diagonal_against_fine_quadrature(self, space):
        C = assemble_mass(space)
        k, mu = 5, 0
        m = space.global_index(k, mu)
        lo, hi = space.cover.subdomain(k)
        x = np.linspace(lo, hi, 40_001)
        u = space.pu_eval(k, x) * 1.0  # P_0 = 1
        ref = np.trapezoid(u * u, x)
        assert C[m, m] == pytest.approx(ref, rel=1e-6)

    def test_pure_diffusion_matrix(self, space):
        """q = 0, B = const: A = -B * stiffness, symmetric negative
        semidefinite."""
        model = ModelSpec(etas=((1, 0.0),), kappa=0.0, t_end=1.0)
        noise = NoiseSpec(kernel=OUKernel(D=1.0, tau=1.0))
        drift = cf.DriftCoefficient(model=model, noise=noise)
        B = 0.7
        diff = cf.DiffusionCoefficient(
            kind="Linear", evaluator=lambda x, t: np.full(np.shape(x), B),
            dx_evaluator=lambda x, t: np.zeros(np.shape(x)), x_dependent=False,
            poly_coeffs=lambda t: np.array([B]))
        A = assemble_system(space, drift, diff, 0.0)
        np.testing.assert_allclose(A, A.T, atol=1e-12)
        eigs = np.linalg.eigvalsh(A)
        assert np.max(eigs) <= 1e-10

    def test_advection_row_integrals(self, space):
        """Zero diffusion, constant q: sum_m A[j, m] w_m with f-hat = 1
        reproduces q * int u_j' dx."""
        model = ModelSpec(etas=((1, 0.0),), kappa=1.0, t_end=1.0)
        noise = NoiseSpec(kernel=OUKernel(D=1.0, tau=1.0), mean=1.3)
        drift = cf.DriftCoefficient(model=model, noise=noise)
        diff = cf.DiffusionCoefficient(
            kind="Linear", evaluator=lambda x, t: np.zeros(np.shape(x)),
            dx_evaluator=lambda x, t: np.zeros(np.shape(x)), x_dependent=False,
            poly_coeffs=lambda t: np.zeros(1))
        A = assemble_system(space, drift, diff, 0.0)
        w_one = fit_initial(space, lambda x: np.ones_like(x))
        got = A @ w_one
        # reference: q * int u_j' dx = q * (u_j(hi) - u_j(lo))
        q = 1.3
        for m in range(0, space.total_dof, 7):
            k, mu = space.subdomain_of(m)
            lo, hi = space.cover.subdomain(k)
            uj = space.eval(_unit(space, m), np.array([lo, hi]))
            ref = q * (uj[1] - uj[0])
            assert got[m] == pytest.approx(ref, abs=1e-9)

    def test_generic_and_poly_paths_agree(self, space):
        """The moment-matrix fast path equals direct quadrature assembly."""
        model = ModelSpec(etas=((1, 1.0), (3, -1.0)), kappa=1.0, t_end=1.0)
        noise = NoiseSpec(kernel=OUKernel(D=1.0, tau=0.1, convention="scaled"))
        init = InitialSpec(mean=0.0, variance=0.36)
        drift = cf.DriftCoefficient(model=model, noise=noise)
        diff = cf.sct_diffusion(model, noise, init)
        A_fast = assemble_system(space, drift, diff, 0.8)
        diff_generic = cf.DiffusionCoefficient(
            kind="SCT", evaluator=diff.evaluator, dx_evaluator=diff.dx_evaluator,
            x_dependent=True, poly_coeffs=None)
        A_slow = assemble_system(space, drift, diff_generic, 0.8)
        np.testing.assert_allclose(A_fast, A_slow, atol=1e-12)


def _unit(space, m):
    w = np.zeros(space.total_dof)
    w[m] = 1.0
    return w


class TestProjectionAndEval:
    def test_span_reproduction(self, space):
        rng = np.random.default_rng(3)
        w = rng.standard_normal(space.total_dof)
        f = lambda x: space.eval(w, x)
        w2 = fit_initial(space, f)
        np.testing.assert_allclose(w2, w, atol=1e-9)

    def test_gaussian_normalization(self):
        sp = PufemSpace(build_cover(-1.85, 0.45, 50), basis_count=4, smoothness=2)
        init = InitialSpec(mean=-0.7, variance=0.15**2)
        w = fit_initial(sp, init.pdf)
        field = PdfField(space=sp, weights=w, t=0.0)
        assert pdf_moment(field, lambda x: np.ones_like(x)) == pytest.approx(1.0, abs=1e-6)

    def test_zero_function(self, space):
        w = fit_initial(space, lambda x: np.zeros_like(x))
        np.testing.assert_allclose(w, 0.0, atol=1e-12)

    def test_moments_of_standard_gaussian(self):
        sp = PufemSpace(build_cover(-8.0, 8.0, 40), basis_count=5, smoothness=2)
        init = InitialSpec(mean=0.0, variance=1.0)
        field = PdfField(space=sp, weights=fit_initial(sp, init.pdf), t=0.0)
        assert pdf_moment(field, lambda x: x**2) == pytest.approx(1.0, abs=1e-4)
        bist = ModelSpec(etas=((1, 1.0), (3, -1.0)), kappa=1.0, t_end=1.0)
        assert pdf_moment(field, bist.h_prime) == pytest.approx(-2.0, abs=1e-3)

    def test_pdf_eval_matches_weights(self, space):
        w = np.zeros(space.total_dof)
        w[space.global_index(4, 1)] = 2.0
        field = PdfField(space=space, weights=w, t=0.0)
        lo, hi = space.cover.subdomain(4)
        mid = (lo + hi) / 2
        # at the subdomain center: phi=1 clamps don't apply, P_1(0)=0
        assert pdf_eval(field, np.array([mid]))[0] == pytest.approx(0.0, abs=1e-14)


class TestCrankNicolson:
    def test_identity_propagation(self, space):
        C = assemble_mass(space)
        A = np.zeros_like(C)
        w = np.arange(space.total_dof, dtype=float)
        w2 = crank_nicolson_step(space, C, A, A, w, 0.1)
        np.testing.assert_allclose(w2, w, atol=1e-10)

    def test_second_order_richardson(self):
        """Halving dt reduces the endpoint error by about 4x on a pure
        diffusion problem with known decay."""
        sp = PufemSpace(build_cover(-6.0, 6.0, 20), basis_count=4, smoothness=2)
        C = assemble_mass(sp)
        model = ModelSpec(etas=((1, -1.0),), kappa=1.0, t_end=1.0)
        noise = NoiseSpec(kernel=OUKernel(D=1.0, tau=1.0))
        drift = cf.DriftCoefficient(model=model, noise=noise)

        def B_of_t(t):
            return 0.5 + 0.3 * math.sin(t)

        def make_A(t):
            diff = cf.DiffusionCoefficient(
                kind="Linear", evaluator=lambda x, tt: np.full(np.shape(x), B_of_t(t)),
                dx_evaluator=lambda x, tt: np.zeros(np.shape(x)), x_dependent=False,
                poly_coeffs=lambda tt: np.array([B_of_t(t)]))
            return assemble_system(sp, drift, diff, t)

        init = InitialSpec(mean=0.0, variance=0.5)
        w0 = fit_initial(sp, init.pdf)

        def march(dt):
            w = w0.copy()
            t = 0.0
            while t < 1.0 - 1e-12:
                w = crank_nicolson_step(sp, C, make_A(t), make_A(t + dt), w, dt)
                t += dt
            return w

        x = np.linspace(-4, 4, 401)
        f_ref = sp.eval(march(0.00125), x)
        e1 = np.max(np.abs(sp.eval(march(0.01), x) - f_ref))
        e2 = np.max(np.abs(sp.eval(march(0.005), x) - f_ref))
        assert e1 / e2 == pytest.approx(4.0, rel=0.35)


class TestRefinement:
    def test_hp_refinement_decreases_error(self):
        """Increasing K or the basis count lowers the projection error of a
        smooth density across 3 levels."""
        target = InitialSpec(mean=0.2, variance=0.3)
        x = np.linspace(-3, 3, 1001)
        exact = target.pdf(x)

        def err(K, Mb):
            sp = PufemSpace(build_cover(-3.0, 3.0, K), basis_count=Mb, smoothness=2)
            w = fit_initial(sp, target.pdf)
            return np.max(np.abs(sp.eval(w, x) - exact))

        errs_h = [err(K, 3) for K in (4, 8, 16)]
        assert errs_h[0] > errs_h[1] > errs_h[2]
        errs_p = [err(6, Mb) for Mb in (2, 4, 6)]
        assert errs_p[0] > errs_p[1] > errs_p[2]
