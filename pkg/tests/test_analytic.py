"""Analytic references: Gaussian evolution of the linear problem and
zero-flux stationary densities."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from genfpk.analytic import (
    GaussianEvolution,
    gaussian_pdf,
    linear_moments,
    linear_moments_ode,
    stationary_pdf,
)
from genfpk.errors import DomainError, UsageError
from genfpk.model import InitialSpec, ModelSpec, NoiseSpec, OUKernel, WhiteNoiseKernel

from conftest import make_bistable


class TestGaussianPdf:
    def test_standard_normal_peak(self):
        assert gaussian_pdf(0.0, 1.0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi))

    def test_shifted_scaled(self):
        # N(1, 4) at x=3 is exp(-1/2)/(2 sqrt(2 pi))
        assert gaussian_pdf(1.0, 4.0, 3.0) == pytest.approx(
            math.exp(-0.5) / (2 * math.sqrt(2 * math.pi)))

    def test_normalization(self):
        x = np.linspace(-10, 14, 8001)
        assert np.trapezoid(gaussian_pdf(2.0, 3.0, x), x) == pytest.approx(1.0, abs=1e-10)


def _linear(eta1=-0.8, kappa=0.2, D=1.0, tau=1.0, mean=0.2):
    model = ModelSpec(etas=((1, eta1),), kappa=kappa, t0=0.0, t_end=30.0)
    noise = NoiseSpec(kernel=OUKernel(D=D, tau=tau, convention="plain"), mean=mean)
    init = InitialSpec(mean=-0.7, variance=0.15**2)
    return model, noise, init


class TestLinearMoments:
    def test_initial_values(self):
        model, noise, init = _linear()
        m, v = linear_moments(model, noise, init, 0.0)
        assert m == pytest.approx(init.mean)
        assert v == pytest.approx(init.variance)

    def test_stationary_mean(self):
        """m(inf) = -kappa m_Xi / eta1."""
        model, noise, init = _linear()
        m, _ = linear_moments(model, noise, init, 30.0)
        assert m == pytest.approx(0.2 * 0.2 / 0.8, rel=1e-8)

    def test_stationary_variance(self):
        """v(inf) = D_eff(inf) / (-eta1) with D_eff(inf) = kappa^2 D /
        (1 - eta1 tau)."""
        model, noise, init = _linear()
        _, v = linear_moments(model, noise, init, 30.0)
        d_inf = 0.2**2 * 1.0 / (1.0 + 0.8 * 1.0)
        assert v == pytest.approx(d_inf / 0.8, rel=1e-8)

    def test_closed_form_vs_rk4(self):
        model, noise, init = _linear(eta1=-0.6, D=1.7, tau=0.8)
        t_grid = np.linspace(0.0, 8.0, 41)
        means, varis = linear_moments_ode(model, noise, init, t_grid)
        for i, t in enumerate(t_grid):
            m, v = linear_moments(model, noise, init, float(t))
            assert m == pytest.approx(means[i], abs=1e-8)
            assert v == pytest.approx(varis[i], abs=1e-8)

    def test_closed_form_vs_generic_quadrature(self):
        """The OU fast path agrees with the generic nested-quadrature path
        (forced by attaching a vanishing cross-covariance)."""
        model, noise, init = _linear(eta1=-0.5, D=2.0, tau=0.4)
        noise_cc = NoiseSpec(kernel=noise.kernel, mean=noise.mean,
                             cross_cov=lambda t: 0.0)
        for t in (0.7, 3.0, 12.0):
            _, v_fast = linear_moments(model, noise, init, t)
            _, v_slow = linear_moments(model, noise_cc, init, t)
            assert v_fast == pytest.approx(v_slow, rel=1e-7)

    def test_white_noise_variance(self):
        model = ModelSpec(etas=((1, -1.0),), kappa=1.0, t0=0.0, t_end=10.0)
        noise = NoiseSpec(kernel=WhiteNoiseKernel(intensity=0.5))
        init = InitialSpec(mean=0.0, variance=0.1)
        _, v = linear_moments(model, noise, init, 10.0)
        # stationary: kappa^2 D / (-eta1)
        assert v == pytest.approx(0.5, rel=1e-4)

    def test_nonlinear_rejected(self):
        sc = make_bistable(1.0, 0.1)
        with pytest.raises(UsageError):
            linear_moments(sc.model, sc.noise, sc.init, 1.0)

    @given(st.floats(0.1, 10.0))
    @settings(max_examples=40, deadline=None)
    def test_variance_stays_positive(self, t):
        model, noise, init = _linear()
        _, v = linear_moments(model, noise, init, t)
        assert v > 0


class TestGaussianEvolution:
    def test_pdf_is_normalized_gaussian(self):
        model, noise, init = _linear()
        ev = GaussianEvolution(model=model, noise=noise, init=init)
        t = 2.3
        m, v = ev.moments(t)
        x = np.linspace(m - 8 * math.sqrt(v), m + 8 * math.sqrt(v), 4001)
        f = ev.pdf(t, x)
        assert np.trapezoid(f, x) == pytest.approx(1.0, abs=1e-8)
        assert float(x[np.argmax(f)]) == pytest.approx(m, abs=0.01)

    def test_moments_shortcut(self):
        model, noise, init = _linear()
        ev = GaussianEvolution(model=model, noise=noise, init=init)
        assert ev.mean(1.5) == pytest.approx(linear_moments(model, noise, init, 1.5)[0])
        assert ev.variance(1.5) == pytest.approx(linear_moments(model, noise, init, 1.5)[1])


class TestStationaryPdf:
    def test_constant_diffusion_linear_drift_is_gaussian(self):
        """h = eta1 x, B = const: the stationary density is N(0, B/(-eta1))."""
        model = ModelSpec(etas=((1, -0.8),), kappa=1.0, t0=0.0, t_end=1.0)
        B = 0.05
        grid = np.linspace(-1.5, 1.5, 801)
        f = stationary_pdf(model, lambda x: np.full(np.shape(x), B), (-1.5, 1.5), grid)
        ref = gaussian_pdf(0.0, B / 0.8, grid)
        ref /= np.trapezoid(ref, grid)
        # the cumulative exponent integral is trapezoidal: O(h^2) accurate
        np.testing.assert_allclose(f, ref, atol=1e-5)

    def test_reference_point_invariance(self):
        sc = make_bistable(1.0, 0.1)
        grid = np.linspace(-2, 2, 601)
        B = lambda x: 0.5 + 0.025 * (1 - 3 * np.asarray(x) ** 2)
        f1 = stationary_pdf(sc.model, B, (-2, 2), grid, x_ref=-2.0)
        f2 = stationary_pdf(sc.model, B, (-2, 2), grid, x_ref=0.9)
        np.testing.assert_allclose(f1, f2, atol=1e-12)

    def test_bistable_symmetry_and_peaks(self):
        sc = make_bistable(1.0, 0.1)
        grid = np.linspace(-2, 2, 1601)
        f = stationary_pdf(sc.model, lambda x: np.full(np.shape(x), 0.5), (-2, 2), grid)
        np.testing.assert_allclose(f, f[::-1], atol=1e-10)
        # B const: f ~ exp((x^2/2 - x^4/4)/B), peaks exactly at +-1
        i = np.argmax(f[: 800])
        assert grid[i] == pytest.approx(-1.0, abs=0.005)

    def test_normalized(self):
        sc = make_bistable(1.0, 0.1)
        grid = np.linspace(-2.2, 2.2, 901)
        f = stationary_pdf(sc.model, lambda x: np.full(np.shape(x), 0.3), (-2.2, 2.2), grid)
        assert np.trapezoid(f, grid) == pytest.approx(1.0, abs=1e-8)

    def test_nonpositive_diffusion_rejected(self):
        sc = make_bistable(1.0, 0.1)
        grid = np.linspace(-3, 3, 301)
        B = lambda x: 0.5 + 0.075 * (1 - 3 * np.asarray(x) ** 2)  # roots inside
        with pytest.raises(DomainError):
            stationary_pdf(sc.model, B, (-3, 3), grid)

    def test_narrow_peak_warns(self):
        sc = make_bistable(1.0, 0.1)
        grid = np.linspace(-2, 2, 21)  # far too coarse for the peaks
        with pytest.warns(RuntimeWarning):
            stationary_pdf(sc.model, lambda x: np.full(np.shape(x), 0.005), (-2, 2), grid)
