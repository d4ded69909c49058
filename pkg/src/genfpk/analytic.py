"""Closed-form oracles: the Gaussian solution of the linear problem, its
moment ODEs, and zero-flux stationary densities for x-dependent diffusion
coefficients."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from ._quad import panel_rule, trapz
from .coefficients import d_eff_linear
from .errors import DomainError, ParameterError, UsageError
from .model import CustomKernel, InitialSpec, ModelSpec, NoiseSpec, OUKernel

__all__ = [
    "GaussianEvolution",
    "linear_moments",
    "linear_moments_ode",
    "gaussian_pdf",
    "stationary_pdf",
]


def gaussian_pdf(mean: float, variance: float, x):
    if variance <= 0:
        raise ParameterError(f"variance must be positive, got {variance}")
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * (x - mean) ** 2 / variance) / math.sqrt(2 * math.pi * variance)
    return float(out) if out.ndim == 0 else out


def _mean_integral(model: ModelSpec, noise: NoiseSpec, t: float) -> float:
    """kappa int_{t0}^t m_Xi(s) e^{eta1 (t-s)} ds."""
    t0, e1, k = model.t0, model.eta1, model.kappa
    if not callable(noise.mean):
        m = noise.mean
        if m == 0.0:
            return 0.0
        if e1 == 0.0:
            return k * m * (t - t0)
        return k * m * (math.exp(e1 * (t - t0)) - 1.0) / e1
    scale = 1.0 / max(abs(e1), 1e-12)
    s, w = panel_rule(t0, t, scale / 4.0, 8)
    if s.size == 0:
        return 0.0
    return k * float(np.dot(w, np.asarray([noise.mean(si) for si in s]) * np.exp(e1 * (t - s))))


def linear_moments(model: ModelSpec, noise: NoiseSpec, init: InitialSpec,
                   t: float) -> Tuple[float, float]:
    """Closed-form mean and variance of the linear response:

    m(t) = m0 e^{eta1 (t-t0)} + kappa int m_Xi(s) e^{eta1 (t-s)} ds,
    v(t) = v0 e^{2 eta1 (t-t0)} + 2 int D_eff(s) e^{2 eta1 (t-s)} ds.
    """
    if not model.is_linear:
        raise UsageError("Gaussian moment formulas require a linear model")
    t0, e1 = model.t0, model.eta1
    dt = t - t0
    mean = init.mean * math.exp(e1 * dt) + _mean_integral(model, noise, t)
    k2 = model.kappa**2

    kern = noise.kernel
    if isinstance(kern, OUKernel) and not noise.has_cross_cov:
        # fully closed form for the OU kernel without initial cross-covariance
        lam = kern.decay_rate
        g = k2 * kern.variance()  # kappa^2 D / tau
        a = lam - e1              # > 0 whenever eta1 < lam
        # D_eff(s) = g (1 - e^{-a (s-t0)}) / a
        if abs(e1) < 1e-14:
            i1 = dt
        else:
            i1 = (1.0 - math.exp(2 * e1 * dt)) / (-2 * e1)
        b = lam + e1
        if abs(b) < 1e-14:
            i2 = math.exp(2 * e1 * dt) * dt
        else:
            i2 = math.exp(2 * e1 * dt) * (1.0 - math.exp(-b * dt)) / b
        var = init.variance * math.exp(2 * e1 * dt) + 2 * (g / a) * (i1 - i2)
        return mean, var

    if noise.is_white:
        D = noise.kernel.D
        if not callable(D):
            if abs(e1) < 1e-14:
                var = init.variance + 2 * k2 * D * dt
            else:
                var = (init.variance * math.exp(2 * e1 * dt)
                       + k2 * D * (math.exp(2 * e1 * dt) - 1.0) / e1)
            return mean, var

    # generic path: outer quadrature over D_eff
    scale = 1.0 / max(abs(e1), 1e-12)
    inner_scale = scale
    if isinstance(kern, (OUKernel, CustomKernel)):
        inner_scale = kern.timescale
    s, w = panel_rule(t0, t, min(scale, inner_scale) / 4.0, 8)
    var = init.variance * math.exp(2 * e1 * dt)
    if s.size:
        dvals = np.asarray([d_eff_linear(model, noise, init, float(si)) for si in s])
        var += 2.0 * float(np.dot(w, dvals * np.exp(2 * e1 * (t - s))))
    return mean, var


def linear_moments_ode(model: ModelSpec, noise: NoiseSpec, init: InitialSpec,
                       t_grid: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Classical RK4 integration of the moment ODEs

        dm/dt = eta1 m + kappa m_Xi(t),
        dv/dt = 2 eta1 v + 2 D_eff(t),

    as an independent cross-check of the closed forms."""
    if not model.is_linear:
        raise UsageError("moment ODEs require a linear model")
    e1, k = model.eta1, model.kappa
    t_grid = np.asarray(t_grid, dtype=float)

    def rhs(t, y):
        m, v = y
        return np.array([
            e1 * m + k * noise.mean_at(t),
            2 * e1 * v + 2 * d_eff_linear(model, noise, init, t),
        ])

    means = np.empty(t_grid.size)
    varis = np.empty(t_grid.size)
    y = np.array([init.mean, init.variance])
    means[0], varis[0] = y
    for i in range(t_grid.size - 1):
        a, b = t_grid[i], t_grid[i + 1]
        n_sub = max(1, int(math.ceil((b - a) / (0.02 / max(abs(e1), 1.0)))))
        h = (b - a) / n_sub
        tt = a
        for _ in range(n_sub):
            k1 = rhs(tt, y)
            k2_ = rhs(tt + h / 2, y + h / 2 * k1)
            k3 = rhs(tt + h / 2, y + h / 2 * k2_)
            k4 = rhs(tt + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2_ + 2 * k3 + k4)
            tt += h
        means[i + 1], varis[i + 1] = y
    return means, varis


@dataclass(frozen=True)
class GaussianEvolution:
    """Time-parameterized Gaussian solution of the linear problem."""

    model: ModelSpec
    noise: NoiseSpec
    init: InitialSpec

    def moments(self, t: float) -> Tuple[float, float]:
        return linear_moments(self.model, self.noise, self.init, t)

    def mean(self, t: float) -> float:
        return self.moments(t)[0]

    def variance(self, t: float) -> float:
        return self.moments(t)[1]

    def pdf(self, t: float, x):
        m, v = self.moments(t)
        return gaussian_pdf(m, v, x)


def stationary_pdf(model: ModelSpec, B_st: Callable, domain: Tuple[float, float],
                   grid: np.ndarray, x_ref: Optional[float] = None) -> np.ndarray:
    """Zero-flux stationary density for diffusion B(x):

    integrating d/dx [h f] = d^2/dx^2 [B f] once with vanishing flux gives
    (B f)' = h f, hence f(x) = (1/B(x)) exp( int_{x_ref}^x h/B du ), worked
    in log space to avoid overflow and normalized on the output grid.
    """
    grid = np.asarray(grid, dtype=float)
    lo, hi = float(domain[0]), float(domain[1])
    if x_ref is None:
        x_ref = lo
    fine = np.linspace(lo, hi, max(4 * grid.size, 2001))
    b = np.asarray(B_st(fine), dtype=float)
    if np.any(b <= 0):
        xb = float(fine[np.nonzero(b <= 0)[0][0]])
        raise DomainError(f"stationary diffusion non-positive at x = {xb:.4g}")
    integrand = model.h(fine) / b
    cum = np.concatenate([[0.0], np.cumsum(
        0.5 * (integrand[1:] + integrand[:-1]) * np.diff(fine))])
    cum -= np.interp(x_ref, fine, cum)
    logf = cum - np.log(b)
    logf -= np.max(logf)
    f = np.interp(grid, fine, np.exp(logf))
    z = trapz(f, grid)
    if z <= 0:
        raise DomainError("stationary density integrated to zero on the grid")
    f = f / z
    # grid-resolution sanity: the peak should span several grid points
    peak = np.max(f)
    if np.count_nonzero(f > 0.5 * peak) < 8:
        import warnings

        warnings.warn("stationary-pdf grid barely resolves the peak", RuntimeWarning)
    return f
