"""Drift and diffusion coefficients of the generalized Fokker-Planck family.

Every evolution equation handled by this package has the common
advection-diffusion form

    df/dt = -d/dx [ q(x,t) f ] + d^2/dx^2 [ B(x,t) f ],

with shared drift q(x,t) = h(x) + kappa*m_Xi(t) and a method-specific
diffusion coefficient B:

  linear        B = D_eff(t), the exact effective noise intensity,
  white-noise   B = kappa^2 D(t),
  SCT           B = D_0(t) + D_1(t) h'(x)  (small correlation time),
  Fox           B = history integral of the kernel against exp(h'(x) lag),
  VADA(M)       B = sum_m D_m_eff(t) * (sum_k phi_k(x,t))^m / m!,
                 with phi_k the fluctuation of eta_k*g_k' about its current
                 response moment; M = 0 is the decoupling (Hanggi) ansatz.

All coefficients except Fox (and custom kernels) are polynomials in x with
time-dependent coefficients; ``poly_coeffs`` exposes that structure so the
finite element assembler can reuse precomputed moment matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from ._quad import panel_rule
from .errors import ParameterError, UsageError
from .model import (
    CustomKernel,
    InitialSpec,
    ModelSpec,
    NoiseSpec,
    OUKernel,
    WhiteNoiseKernel,
)

__all__ = [
    "DriftCoefficient",
    "DiffusionCoefficient",
    "MultiIndexTable",
    "SctValidityReport",
    "d_eff_linear",
    "sct_dn",
    "sct_diffusion",
    "check_sct_validity",
    "fox_diffusion",
    "vada_phi",
    "vada_exp_factor",
    "vada_dm_eff",
    "vada_dm_eff_all",
    "vada_diffusion",
    "white_noise_diffusion",
]

# one-sided kernel time-integrals are truncated this many kernel timescales
# into the past; exp(-45) ~ 3e-20 is far below every tolerance in use
_TRUNCATION_FOLDS = 45.0
# panels of a quarter timescale with 8-point GL resolve exponential kernels
# to near machine precision
_CELL_FRACTION = 0.25
_TIME_ORDER = 8


def _kernel_timescale(noise: NoiseSpec) -> float:
    k = noise.kernel
    if isinstance(k, OUKernel):
        return k.timescale
    if isinstance(k, CustomKernel):
        return k.timescale
    raise UsageError("white-noise kernel has no finite timescale")


def _history_window(noise: NoiseSpec, t0: float, t: float) -> float:
    """Lower integration limit for one-sided kernel integrals ending at t."""
    lo = t0
    if isinstance(noise.kernel, OUKernel):
        lo = max(lo, t - _TRUNCATION_FOLDS * noise.kernel.timescale)
    return lo


def _time_nodes(noise: NoiseSpec, t0: float, t: float):
    ts = _kernel_timescale(noise)
    lo = _history_window(noise, t0, t)
    return panel_rule(lo, t, _CELL_FRACTION * ts, _TIME_ORDER)


# --------------------------------------------------------------------------
# drift
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DriftCoefficient:
    """q(x, t) = h(x) + kappa * m_Xi(t)."""

    model: ModelSpec
    noise: NoiseSpec

    def __call__(self, x, t):
        return self.model.h(x) + self.model.kappa * self.noise.mean_at(t)

    def dx(self, x, t):
        return self.model.h_prime(x)

    def poly_coeffs(self, t) -> np.ndarray:
        """Ascending-power coefficients of q(., t)."""
        c = self.model.h_coeffs().copy()
        c[0] += self.model.kappa * self.noise.mean_at(t)
        return c


# --------------------------------------------------------------------------
# diffusion container
# --------------------------------------------------------------------------

@dataclass
class DiffusionCoefficient:
    """A diffusion coefficient B(x, t) with its x-derivative.

    ``poly_coeffs``, when present, returns ascending-power coefficients of
    B(., t) so assembly can use cached moment matrices; Fox and custom-kernel
    coefficients are not polynomial in x and leave it None.
    """

    kind: str
    evaluator: Callable
    dx_evaluator: Callable
    x_dependent: bool
    poly_coeffs: Optional[Callable[[float], np.ndarray]] = None

    def __call__(self, x, t):
        return self.evaluator(x, t)

    def dx(self, x, t):
        return self.dx_evaluator(x, t)

    def min_over_domain(self, domain: Tuple[float, float], t, n: int = 2001) -> float:
        x = np.linspace(domain[0], domain[1], n)
        return float(np.min(self.evaluator(x, t)))


# --------------------------------------------------------------------------
# exact linear / white noise
# --------------------------------------------------------------------------

def d_eff_linear(model: ModelSpec, noise: NoiseSpec, init: InitialSpec, t) -> float:
    """Exact effective noise intensity of the linear problem:

    D_eff(t) = kappa e^{eta1 (t-t0)} C_X0Xi(t)
             + kappa^2 int_{t0}^t e^{eta1 (t-s)} C_XiXi(t, s) ds.
    """
    if not model.is_linear:
        raise UsageError("effective-intensity formula requires a linear model")
    t0, k, eta1 = model.t0, model.kappa, model.eta1
    if t < t0:
        raise UsageError(f"t={t} precedes t0={t0}")
    if noise.is_white:
        return k**2 * noise.kernel.D(t)
    cross = k * math.exp(eta1 * (t - t0)) * noise.cross_cov_at(t)
    s, w = _time_nodes(noise, t0, t)
    if s.size:
        integrand = np.exp(eta1 * (t - s)) * noise.kernel(t, s)
        cross += k**2 * float(np.dot(w, integrand))
    return cross


def white_noise_diffusion(model: ModelSpec, noise: NoiseSpec) -> DiffusionCoefficient:
    """Classical Fokker-Planck diffusion B(x, t) = kappa^2 D(t)."""
    if not noise.is_white:
        raise UsageError("white-noise diffusion requires a white-noise kernel")
    k2 = model.kappa**2

    def ev(x, t):
        return np.broadcast_to(k2 * noise.kernel.D(t), np.shape(x)).copy() if np.ndim(x) else k2 * noise.kernel.D(t)

    def dx(x, t):
        return np.zeros(np.shape(x)) if np.ndim(x) else 0.0

    return DiffusionCoefficient(
        kind="WhiteNoise", evaluator=ev, dx_evaluator=dx, x_dependent=False,
        poly_coeffs=lambda t: np.array([k2 * noise.kernel.D(t)]),
    )


def linear_diffusion(model: ModelSpec, noise: NoiseSpec, init: InitialSpec) -> DiffusionCoefficient:
    """x-independent exact diffusion for linear models."""
    if not model.is_linear:
        raise UsageError("exact-linear diffusion requires a linear model")
    if noise.is_white:
        return white_noise_diffusion(model, noise)

    @lru_cache(maxsize=4)
    def val(t):
        return d_eff_linear(model, noise, init, t)

    def ev(x, t):
        v = val(float(t))
        return np.full(np.shape(x), v) if np.ndim(x) else v

    def dx(x, t):
        return np.zeros(np.shape(x)) if np.ndim(x) else 0.0

    return DiffusionCoefficient(
        kind="Linear", evaluator=ev, dx_evaluator=dx, x_dependent=False,
        poly_coeffs=lambda t: np.array([val(float(t))]),
    )


# --------------------------------------------------------------------------
# small correlation time (SCT)
# --------------------------------------------------------------------------

def sct_dn(model: ModelSpec, noise: NoiseSpec, init: InitialSpec, t, n: int) -> float:
    """D_n(t) = kappa C_X0Xi(t) (t-t0)^n + kappa^2 int C_XiXi(t,s)(t-s)^n ds,
    for n = 0, 1."""
    if n not in (0, 1):
        raise UsageError(f"only lag weights n=0,1 are defined, got n={n}")
    t0, k = model.t0, model.kappa
    if t < t0:
        raise UsageError(f"t={t} precedes t0={t0}")
    if noise.is_white:
        return k**2 * noise.kernel.D(t) if n == 0 else 0.0
    out = k * noise.cross_cov_at(t) * (t - t0) ** n
    s, w = _time_nodes(noise, t0, t)
    if s.size:
        out += k**2 * float(np.dot(w, noise.kernel(t, s) * (t - s) ** n))
    return out


def sct_diffusion(model: ModelSpec, noise: NoiseSpec, init: InitialSpec) -> DiffusionCoefficient:
    """B(x, t) = D_0(t) + D_1(t) h'(x); may turn negative for long
    correlation times — see check_sct_validity."""

    @lru_cache(maxsize=4)
    def dns(t):
        return (sct_dn(model, noise, init, t, 0), sct_dn(model, noise, init, t, 1))

    def ev(x, t):
        d0, d1 = dns(float(t))
        return d0 + d1 * model.h_prime(x)

    def dx(x, t):
        _, d1 = dns(float(t))
        return d1 * model.h_second(x)

    def poly(t):
        d0, d1 = dns(float(t))
        hp = np.polynomial.polynomial.polyder(model.h_coeffs())
        c = d1 * hp
        if c.size == 0:
            c = np.zeros(1)
        c[0] += d0
        return c

    return DiffusionCoefficient(
        kind="SCT", evaluator=ev, dx_evaluator=dx,
        x_dependent=not model.is_linear, poly_coeffs=poly,
    )


@dataclass(frozen=True)
class SctValidityReport:
    valid: bool
    x_negative: Optional[float] = None
    min_value: float = float("inf")

    def __bool__(self):
        return self.valid


def check_sct_validity(diff: DiffusionCoefficient, domain: Tuple[float, float], t,
                       n: int = 2001) -> SctValidityReport:
    """Scan the domain for points where the SCT diffusion is non-positive."""
    if diff.kind != "SCT":
        raise UsageError("validity scan applies to the SCT diffusion only")
    x = np.linspace(domain[0], domain[1], n)
    b = np.asarray(diff(x, t))
    mn = float(np.min(b))
    bad = np.nonzero(b <= 0.0)[0]
    if bad.size:
        return SctValidityReport(valid=False, x_negative=float(x[bad[0]]), min_value=mn)
    return SctValidityReport(valid=True, min_value=mn)


# --------------------------------------------------------------------------
# Fox
# --------------------------------------------------------------------------

def fox_diffusion(model: ModelSpec, noise: NoiseSpec, init: InitialSpec) -> DiffusionCoefficient:
    """B(x, t) = kappa C_X0Xi(t) e^{h'(x)(t-t0)}
               + kappa^2 int C_XiXi(t,s) e^{h'(x)(t-s)} ds.

    The x-derivative differentiates under the integral (extra h''(x)(t-s)
    factor), reusing the same kernel evaluations.
    """
    t0, k = model.t0, model.kappa

    if noise.is_white:
        return white_noise_diffusion(model, noise)

    @lru_cache(maxsize=4)
    def nodes(t):
        s, w = _time_nodes(noise, t0, t)
        return s, w, noise.kernel(t, s) * w

    def _both(x, t):
        t = float(t)
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        hp = np.atleast_1d(model.h_prime(x))
        hs = np.atleast_1d(model.h_second(x))
        b = k * noise.cross_cov_at(t) * np.exp(hp * (t - t0))
        db = k * noise.cross_cov_at(t) * hs * (t - t0) * np.exp(hp * (t - t0))
        s, w, cw = nodes(t)
        if s.size:
            lag = t - s
            e = np.exp(np.outer(hp, lag)) * cw[None, :]
            b = b + k**2 * e.sum(axis=1)
            db = db + k**2 * hs * (e * lag[None, :]).sum(axis=1)
        if scalar:
            return float(b[0]), float(db[0])
        return b, db

    def ev(x, t):
        return _both(x, t)[0]

    def dx(x, t):
        return _both(x, t)[1]

    return DiffusionCoefficient(
        kind="Fox", evaluator=ev, dx_evaluator=dx,
        x_dependent=not model.is_linear, poly_coeffs=None,
    )


# --------------------------------------------------------------------------
# VADA machinery
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MultiIndexTable:
    """Multi-indices alpha over the nonlinear degrees, grouped by order
    |alpha| = m, each with weight 1/alpha!.

    Used to verify the generating identity
    sum_{|alpha|=m} phi^alpha / alpha! = (sum_k phi_k)^m / m!,
    which the production evaluator exploits.
    """

    degrees: Tuple[int, ...]
    max_order: int
    by_order: Tuple[Tuple[Tuple[Tuple[int, ...], float], ...], ...] = field(init=False)

    def __post_init__(self):
        n = len(self.degrees)
        table = []
        for m in range(self.max_order + 1):
            entries = []
            if n == 0:
                if m == 0:
                    entries.append(((), 1.0))
            else:
                for alpha in product(range(m + 1), repeat=n):
                    if sum(alpha) == m:
                        w = 1.0 / math.prod(math.factorial(a) for a in alpha)
                        entries.append((alpha, w))
            table.append(tuple(entries))
        object.__setattr__(self, "by_order", tuple(table))

    def count(self, m: int) -> int:
        return len(self.by_order[m])

    def weighted_sum(self, m: int, phi: Sequence[float]) -> float:
        """sum over |alpha| = m of weight * prod phi_i^alpha_i."""
        phi = np.asarray(phi, dtype=float)
        out = 0.0
        for alpha, w in self.by_order[m]:
            out += w * math.prod(p**a for p, a in zip(phi, alpha))
        return out


def vada_phi(model: ModelSpec, k: int, x, r_gk_prime: float):
    """phi_k(x, t) = eta_k (k x^{k-1} - R_{g_k'}(t)) for a nonlinear degree k."""
    if k < 2 or k not in model.degrees:
        raise UsageError(f"degree {k} is not a nonlinear degree of the model")
    return model.eta(k) * (k * np.asarray(x, dtype=float) ** (k - 1) - r_gk_prime)


def vada_exp_factor(history, s, t) -> float:
    """exp(int_s^t R_{h'}(u) du) from the history's prefix integrals."""
    times = history.times
    eps = 1e-12 * max(1.0, abs(float(times[-1])))
    if s > t:
        raise UsageError(f"s={s} exceeds t={t}")
    if s < times[0] - eps or t > times[-1] + eps:
        raise UsageError(f"[{s}, {t}] outside recorded history [{times[0]}, {times[-1]}]")
    qs = float(np.interp(s, times, history.prefix))
    qt = float(np.interp(t, times, history.prefix))
    return math.exp(qt - qs)


def _vada_dm_kernel_nodes(model: ModelSpec, noise: NoiseSpec, history, t):
    """Shared quadrature nodes/weights and interpolated exp-factors for the
    generalized effective intensities at time t."""
    t0 = model.t0
    times = history.times
    eps = 1e-12 * max(1.0, abs(t), abs(float(times[-1])))
    if t < times[0] - eps or t > times[-1] + eps:
        raise UsageError(f"t={t} outside recorded history [{times[0]}, {times[-1]}]")
    lo = _history_window(noise, t0, t)
    s, w = panel_rule(lo, t, _CELL_FRACTION * _kernel_timescale(noise), _TIME_ORDER)
    if s.size == 0:
        return s, w, s
    qt = float(np.interp(t, times, history.prefix))
    qs = np.interp(s, times, history.prefix)
    efac = np.exp(qt - qs)
    return s, w, efac


def vada_dm_eff(model: ModelSpec, noise: NoiseSpec, init: InitialSpec,
                history, t, m: int) -> float:
    """Generalized effective noise intensity of order m:

    D_m_eff(t) = kappa E(t0, t) C_X0Xi(t) (t-t0)^m
               + kappa^2 int E(s, t) C_XiXi(t,s) (t-s)^m ds,

    with E(s, t) = exp(int_s^t R_{h'}(u) du) taken from the moment history.
    """
    return vada_dm_eff_all(model, noise, init, history, t, m)[m]


def vada_dm_eff_all(model: ModelSpec, noise: NoiseSpec, init: InitialSpec,
                    history, t, max_order: int) -> np.ndarray:
    """All orders 0..max_order at once, sharing kernel evaluations."""
    t0, k = model.t0, model.kappa
    t = float(t)
    out = np.zeros(max_order + 1)
    if noise.is_white:
        out[0] = k**2 * noise.kernel.D(t)
        if noise.has_cross_cov and t > t0:
            efac = vada_exp_factor(history, t0, t)
            for m in range(max_order + 1):
                out[m] += k * efac * noise.cross_cov_at(t) * (t - t0) ** m
        return out
    s, w, efac = _vada_dm_kernel_nodes(model, noise, history, t)
    cross = k * noise.cross_cov_at(t) if noise.has_cross_cov else 0.0
    cross_efac = vada_exp_factor(history, t0, t) if cross else 1.0
    if s.size:
        base = w * noise.kernel(t, s) * efac
        lag = t - s
        lag_m = np.ones_like(s)
        for m in range(max_order + 1):
            out[m] = k**2 * float(np.dot(base, lag_m))
            if cross:
                out[m] += cross * cross_efac * (t - t0) ** m
            lag_m = lag_m * lag
    elif cross:
        for m in range(max_order + 1):
            out[m] = cross * cross_efac * (t - t0) ** m
    return out


def _phi_sum_poly(model: ModelSpec, moments: Dict[int, float]) -> np.ndarray:
    """Ascending-power coefficients of sum_k phi_k(x) at frozen moments."""
    deg = max(model.nonlinear_degrees, default=1)
    c = np.zeros(deg)  # degree of phi_k is k-1
    for k in model.nonlinear_degrees:
        eta = model.eta(k)
        if eta == 0.0:
            continue
        c[k - 1] += eta * k
        c[0] -= eta * moments[k]
    return np.trim_zeros(c, "b") if np.any(c) else np.zeros(1)


def vada_diffusion(model: ModelSpec, noise: NoiseSpec, init: InitialSpec,
                   M: int, history, current_moments: Dict[int, float],
                   allow_odd: bool = False) -> DiffusionCoefficient:
    """Adjustable-decoupling diffusion of truncation order M:

    B(x, t) = sum_{m=0}^{M} D_m_eff(t) * (sum_k phi_k(x))^m / m!.

    Even M keeps the leading fluctuation term an even power, which is what
    preserves positivity of B for large |x|; odd orders are refused unless
    ``allow_odd`` is set. M = 0 is the decoupling (Hanggi) ansatz.

    The returned coefficient is a snapshot: it closes over the supplied
    history and moment values and is rebuilt every iteration by the solver.
    """
    if M < 0:
        raise ParameterError(f"truncation order must be >= 0, got {M}")
    if M % 2 == 1 and not allow_odd:
        raise ParameterError(
            f"odd truncation order M={M} breaks positivity of the diffusion "
            "coefficient; pass allow_odd=True to build it anyway"
        )
    moments = {k: float(current_moments[k]) for k in model.nonlinear_degrees}
    phi_poly = _phi_sum_poly(model, moments)
    P = np.polynomial.polynomial

    @lru_cache(maxsize=4)
    def poly(t):
        d = vada_dm_eff_all(model, noise, init, history, float(t), M)
        b = np.array([d[0]])
        power = np.ones(1)
        fact = 1.0
        for m in range(1, M + 1):
            power = P.polymul(power, phi_poly)
            fact *= m
            b = P.polyadd(b, (d[m] / fact) * power)
        return b

    def ev(x, t):
        return P.polyval(np.asarray(x, dtype=float), poly(float(t)))

    def dx(x, t):
        return P.polyval(np.asarray(x, dtype=float), P.polyder(poly(float(t))))

    x_dep = M >= 1 and not model.is_linear and phi_poly.size > 1
    return DiffusionCoefficient(
        kind="Hanggi" if M == 0 else f"VADA({M})",
        evaluator=ev, dx_evaluator=dx, x_dependent=x_dep,
        poly_coeffs=lambda t: poly(float(t)),
    )
