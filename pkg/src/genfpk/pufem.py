"""Partition-of-unity finite element discretization in 1D with
Crank-Nicolson time stepping.

The computational domain [omega_min, omega_max] is covered by K overlapping
subdomains of length 2h with overlap h, h = (omega_max - omega_min)/(K+1).
Each subdomain carries a smooth partition-of-unity weight function (a
piecewise polynomial of smoothness class C^s) and a local Legendre basis;
shape functions are products of the two. The weak form of

    df/dt = -d/dx [q f] + d^2/dx^2 [B f]

in this basis gives C dw/dt = A(t) w with

    c_{j,m} = int u_m u_j dx,
    a_{j,m} = int (q - dB/dx) u_m u_j' dx - int B u_m' u_j' dx,

advanced by Crank-Nicolson and solved by dense LU.

Indices are 0-based throughout: subdomain k = 0..K-1 spans
[omega_min + k h, omega_min + (k+2) h]; global dof m = k*M(k) + mu.

Quadrature uses the K+1 cells of width h whose boundaries are exactly the
subdomain endpoints and midpoints, so every integrand is a plain polynomial
on each cell and Gauss-Legendre rules integrate it exactly.

The edge subdomains' PU functions are clamped to 1 on their outer halves
(the only place covered by a single subdomain), which preserves both the
sum-to-one identity on the whole domain and C^s smoothness, since the
branch polynomial has vanishing derivatives at its matching point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from ._quad import gl_rule
from .errors import ConfigurationError, DomainError, ParameterError, StepFailure

__all__ = [
    "Cover",
    "PuFunction",
    "LocalBasis",
    "PufemSpace",
    "PdfField",
    "build_cover",
    "affine_to_ref",
    "affine_to_abs",
    "mother_pu_eval",
    "mother_pu_deriv",
    "legendre_eval",
    "legendre_eval_all",
    "assemble_mass",
    "assemble_system",
    "fit_initial",
    "crank_nicolson_step",
    "pdf_eval",
    "pdf_moment",
]


# --------------------------------------------------------------------------
# cover and affine maps
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Cover:
    omega_min: float
    omega_max: float
    K: int
    h: float = field(init=False)

    def __post_init__(self):
        if self.K < 2:
            raise ParameterError(f"need at least 2 subdomains, got K={self.K}")
        if self.omega_max <= self.omega_min:
            raise ParameterError("empty domain")
        object.__setattr__(self, "h", (self.omega_max - self.omega_min) / (self.K + 1))

    def subdomain(self, k: int) -> Tuple[float, float]:
        if not 0 <= k < self.K:
            raise ParameterError(f"subdomain index {k} outside 0..{self.K - 1}")
        lo = self.omega_min + k * self.h
        return lo, lo + 2 * self.h

    @property
    def subdomains(self) -> List[Tuple[float, float]]:
        return [self.subdomain(k) for k in range(self.K)]


def build_cover(omega_min: float, omega_max: float, K: int) -> Cover:
    return Cover(omega_min=float(omega_min), omega_max=float(omega_max), K=int(K))


def affine_to_ref(cover: Cover, k: int, omega):
    """Map absolute coordinates in subdomain k onto the reference [-1, 1]."""
    lo, hi = cover.subdomain(k)
    omega = np.asarray(omega, dtype=float)
    tol = 1e-12 * max(1.0, abs(hi), abs(lo))
    if np.any(omega < lo - tol) or np.any(omega > hi + tol):
        raise DomainError(f"coordinate outside subdomain {k} = [{lo}, {hi}]")
    xi = (2 * omega - lo - hi) / (hi - lo)
    return float(xi) if xi.ndim == 0 else xi


def affine_to_abs(cover: Cover, k: int, xi):
    """Inverse of affine_to_ref."""
    lo, hi = cover.subdomain(k)
    xi = np.asarray(xi, dtype=float)
    if np.any(np.abs(xi) > 1 + 1e-12):
        raise DomainError("reference coordinate outside [-1, 1]")
    omega = ((hi - lo) * xi + hi + lo) / 2.0
    return float(omega) if omega.ndim == 0 else omega


# --------------------------------------------------------------------------
# PU mother function
# --------------------------------------------------------------------------

_PU_COEFFS = {
    1: (0.5, 0.5),
    2: (0.5, 0.75, -0.25),
    3: (0.5, 15.0 / 16.0, -5.0 / 8.0, 3.0 / 16.0),
}


@dataclass(frozen=True)
class PuFunction:
    """Branch polynomial g_s(z) = a_0 + sum_i a_i z^{2i-1} of smoothness
    class s, with g_s(1) = 1, g_s(z) + g_s(-z) = 1 and s flat derivatives
    at z = 1."""

    s: int

    def __post_init__(self):
        if self.s not in _PU_COEFFS:
            raise ParameterError(f"smoothness s must be 1, 2 or 3, got {self.s}")

    @property
    def coeffs(self) -> Tuple[float, ...]:
        return _PU_COEFFS[self.s]

    def g(self, z):
        z = np.asarray(z, dtype=float)
        a = self.coeffs
        out = np.full_like(z, a[0])
        for i in range(1, len(a)):
            out = out + a[i] * z ** (2 * i - 1)
        return float(out) if out.ndim == 0 else out

    def g_prime(self, z):
        z = np.asarray(z, dtype=float)
        a = self.coeffs
        out = np.zeros_like(z)
        for i in range(1, len(a)):
            out = out + (2 * i - 1) * a[i] * z ** (2 * i - 2)
        return float(out) if out.ndim == 0 else out


def mother_pu_eval(pu: PuFunction, xi):
    """Mother PU function: g_s(2 xi + 1) on [-1, 0], g_s(-2 xi + 1) on
    [0, 1], zero outside."""
    xi = np.asarray(xi, dtype=float)
    out = np.zeros_like(xi)
    left = (xi >= -1) & (xi <= 0)
    right = (xi > 0) & (xi <= 1)
    out[left] = pu.g(2 * xi[left] + 1)
    out[right] = pu.g(-2 * xi[right] + 1)
    return float(out) if out.ndim == 0 else out


def mother_pu_deriv(pu: PuFunction, xi):
    xi = np.asarray(xi, dtype=float)
    out = np.zeros_like(xi)
    left = (xi >= -1) & (xi <= 0)
    right = (xi > 0) & (xi <= 1)
    out[left] = 2 * pu.g_prime(2 * xi[left] + 1)
    out[right] = -2 * pu.g_prime(-2 * xi[right] + 1)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Legendre local bases
# --------------------------------------------------------------------------

def legendre_eval_all(n_max: int, xi) -> Tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of P_0..P_{n_max} by the three-term
    recurrence; returns arrays of shape (n_max + 1, len(xi))."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    P = np.zeros((n_max + 1, xi.size))
    dP = np.zeros_like(P)
    P[0] = 1.0
    if n_max >= 1:
        P[1] = xi
        dP[1] = 1.0
    for n in range(1, n_max):
        P[n + 1] = ((2 * n + 1) * xi * P[n] - n * P[n - 1]) / (n + 1)
        dP[n + 1] = dP[n - 1] + (2 * n + 1) * P[n]
    return P, dP


def legendre_eval(n: int, xi):
    vals, _ = legendre_eval_all(n, xi)
    out = vals[n]
    return float(out[0]) if np.ndim(xi) == 0 else out


@dataclass(frozen=True)
class LocalBasis:
    """Legendre basis of a subdomain: b_mu(xi) = P_mu(xi), mu = 0..M-1."""

    size: int

    def eval(self, xi):
        P, _ = legendre_eval_all(self.size - 1, xi)
        return P

    def eval_deriv(self, xi):
        _, dP = legendre_eval_all(self.size - 1, xi)
        return dP


# --------------------------------------------------------------------------
# the discrete space
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class _CellData:
    """Precomputed quadrature data on one width-h cell."""

    nodes: np.ndarray          # (Q,) absolute coordinates
    weights: np.ndarray        # (Q,)
    dof: np.ndarray            # (n_loc,) global dof indices active here
    U: np.ndarray              # (n_loc, Q) shape function values
    dU: np.ndarray             # (n_loc, Q) x-derivatives


class PufemSpace:
    """Cover + PU smoothness + per-subdomain Legendre bases, with
    precomputed quadrature data and lazily cached moment matrices."""

    def __init__(self, cover: Cover, basis_count: int = 4, smoothness: int = 2,
                 quad_margin: int = 8):
        if basis_count < 1:
            raise ParameterError(f"need at least 1 basis function, got {basis_count}")
        self.cover = cover
        self.pu = PuFunction(s=smoothness)
        self.basis_counts = tuple([basis_count] * cover.K)
        self.bases = tuple(LocalBasis(size=n) for n in self.basis_counts)
        self._offsets = np.concatenate([[0], np.cumsum(self.basis_counts)])
        self.total_dof = int(self._offsets[-1])
        # exactness: GL with Q points integrates degree 2Q-1; shape-function
        # products reach degree 2(2s-1) + 2(basis_count-1); the margin covers
        # the polynomial factors x^p and B(x) of the assembled forms
        base_order = max(2 * basis_count + smoothness + 2, 8)
        self.quad_order = base_order + quad_margin
        self._cells = self._build_cells()
        self.quad_nodes = np.concatenate([c.nodes for c in self._cells])
        self.quad_weights = np.concatenate([c.weights for c in self._cells])
        self._moment_cache: Dict[Tuple[str, int], np.ndarray] = {}

    # -- structure ---------------------------------------------------------

    def global_index(self, k: int, mu: int) -> int:
        if not 0 <= mu < self.basis_counts[k]:
            raise ParameterError(f"basis index {mu} outside subdomain {k}")
        return int(self._offsets[k]) + mu

    def subdomain_of(self, m: int) -> Tuple[int, int]:
        k = int(np.searchsorted(self._offsets, m, side="right")) - 1
        return k, m - int(self._offsets[k])

    def pu_eval(self, k: int, x):
        """PU function of subdomain k at absolute coordinates (0 outside)."""
        return self._pu_on_sub(k, x, deriv=False)

    def pu_deriv(self, k: int, x):
        return self._pu_on_sub(k, x, deriv=True)

    def _pu_on_sub(self, k: int, x, deriv: bool):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        lo, hi = self.cover.subdomain(k)
        out = np.zeros_like(x)
        inside = (x >= lo) & (x <= hi)
        if np.any(inside):
            xi = (2 * x[inside] - lo - hi) / (hi - lo)
            scale = 2.0 / (hi - lo)
            if deriv:
                v = mother_pu_deriv(self.pu, xi) * scale
            else:
                v = mother_pu_eval(self.pu, xi)
            # clamp the single-cover outer halves of the edge subdomains
            if k == 0:
                clamp = xi <= 0
                v[clamp] = 0.0 if deriv else 1.0
            if k == self.cover.K - 1:
                clamp = xi >= 0
                v[clamp] = 0.0 if deriv else 1.0
            out[inside] = v
        return out

    # -- precomputed quadrature cells --------------------------------------

    def _build_cells(self) -> List[_CellData]:
        cov = self.cover
        xg, wg = gl_rule(self.quad_order)
        cells = []
        for c in range(cov.K + 1):
            lo = cov.omega_min + c * cov.h
            hi = lo + cov.h
            nodes = (hi + lo) / 2 + (hi - lo) / 2 * xg
            weights = (hi - lo) / 2 * wg
            active = [k for k in (c - 1, c) if 0 <= k < cov.K]
            dof, U, dU = [], [], []
            for k in active:
                phi = self.pu_eval(k, nodes)
                dphi = self.pu_deriv(k, nodes)
                slo, shi = cov.subdomain(k)
                xi = (2 * nodes - slo - shi) / (shi - slo)
                scale = 2.0 / (shi - slo)
                P, dP = legendre_eval_all(self.basis_counts[k] - 1, xi)
                U.append(phi[None, :] * P)
                dU.append(dphi[None, :] * P + phi[None, :] * dP * scale)
                dof.extend(self.global_index(k, mu) for mu in range(self.basis_counts[k]))
            cells.append(_CellData(
                nodes=nodes, weights=weights, dof=np.asarray(dof, dtype=int),
                U=np.vstack(U), dU=np.vstack(dU),
            ))
        return cells

    # -- evaluation --------------------------------------------------------

    def eval(self, weights: np.ndarray, x, deriv: bool = False):
        """f-hat(x) = sum_m w_m u_m(x) (or its x-derivative)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        cov = self.cover
        for k in range(cov.K):
            lo, hi = cov.subdomain(k)
            inside = (x >= lo) & (x <= hi)
            if not np.any(inside):
                continue
            xs = x[inside]
            xi = (2 * xs - lo - hi) / (hi - lo)
            scale = 2.0 / (hi - lo)
            wk = weights[self._offsets[k]:self._offsets[k + 1]]
            phi = self.pu_eval(k, xs)
            P, dP = legendre_eval_all(self.basis_counts[k] - 1, xi)
            if deriv:
                dphi = self.pu_deriv(k, xs)
                out[inside] += dphi * (wk @ P) + phi * (wk @ dP) * scale
            else:
                out[inside] += phi * (wk @ P)
        return out

    def values_at_quadrature(self, weights: np.ndarray, deriv: bool = False) -> np.ndarray:
        """f-hat (or f-hat') at every precomputed quadrature node."""
        parts = []
        for c in self._cells:
            M = c.dU if deriv else c.U
            parts.append(weights[c.dof] @ M)
        return np.concatenate(parts)

    def integrate(self, values: np.ndarray) -> float:
        """Integrate nodal values given at the precomputed quadrature nodes."""
        return float(np.dot(self.quad_weights, values))

    # -- moment matrices for polynomial coefficients ------------------------

    def moment_matrix(self, kind: str, p: int) -> np.ndarray:
        """Cached matrices of x^p against shape-function pairs:

        kind 'P': int x^p u_m u_j,  'G': int x^p u_m u_j',
        kind 'H': int x^p u_m' u_j'   (rows j, columns m).
        """
        key = (kind, p)
        if key not in self._moment_cache:
            A = np.zeros((self.total_dof, self.total_dof))
            for c in self._cells:
                xp = c.weights * c.nodes**p
                if kind == "P":
                    block = (c.U * xp) @ c.U.T
                elif kind == "G":
                    block = (c.dU * xp) @ c.U.T
                elif kind == "H":
                    block = (c.dU * xp) @ c.dU.T
                else:
                    raise ParameterError(f"unknown moment-matrix kind {kind!r}")
                A[np.ix_(c.dof, c.dof)] += block
            self._moment_cache[key] = A
        return self._moment_cache[key]


# --------------------------------------------------------------------------
# fields
# --------------------------------------------------------------------------

@dataclass
class PdfField:
    space: PufemSpace
    weights: np.ndarray
    t: float

    def __call__(self, x):
        return self.space.eval(self.weights, x)


def pdf_eval(field: PdfField, x_grid):
    return field.space.eval(field.weights, x_grid)


def pdf_moment(field: PdfField, g: Callable) -> float:
    """int g(x) f-hat(x) dx by the space's exact quadrature."""
    sp = field.space
    fv = sp.values_at_quadrature(field.weights)
    return sp.integrate(np.asarray(g(sp.quad_nodes), dtype=float) * fv)


# --------------------------------------------------------------------------
# assembly and stepping
# --------------------------------------------------------------------------

def assemble_mass(space: PufemSpace) -> np.ndarray:
    C = space.moment_matrix("P", 0)
    # a degenerate cover yields (numerically) dependent shape functions
    try:
        scipy.linalg.cholesky(C)
    except scipy.linalg.LinAlgError as e:
        raise ConfigurationError(f"mass matrix is not positive definite: {e}") from e
    return C


def assemble_system(space: PufemSpace, drift, diff, t: float) -> np.ndarray:
    """A(t) with a_{j,m} = int (q - dB/dx) u_m u_j' - int B u_m' u_j'."""
    if diff.poly_coeffs is not None:
        qc = np.asarray(drift.poly_coeffs(t), dtype=float)
        bc = np.asarray(diff.poly_coeffs(t), dtype=float)
        bxc = np.polynomial.polynomial.polyder(bc) if bc.size > 1 else np.zeros(1)
        A = np.zeros((space.total_dof, space.total_dof))
        for p, v in enumerate(qc):
            if v:
                A += v * space.moment_matrix("G", p)
        for p, v in enumerate(bxc):
            if v:
                A -= v * space.moment_matrix("G", p)
        for p, v in enumerate(bc):
            if v:
                A -= v * space.moment_matrix("H", p)
        return A
    x = space.quad_nodes
    qv = np.asarray(drift(x, t), dtype=float)
    bv = np.asarray(diff(x, t), dtype=float)
    bxv = np.asarray(diff.dx(x, t), dtype=float)
    A = np.zeros((space.total_dof, space.total_dof))
    pos = 0
    for c in space._cells:
        n = c.nodes.size
        sl = slice(pos, pos + n)
        pos += n
        adv = c.weights * (qv[sl] - bxv[sl])
        dif = c.weights * bv[sl]
        block = (c.dU * adv) @ c.U.T - (c.dU * dif) @ c.dU.T
        A[np.ix_(c.dof, c.dof)] += block
    return A


def fit_initial(space: PufemSpace, f0: Callable) -> np.ndarray:
    """L2-projection of the initial density onto the PU space: C w0 = f,
    f_j = int f0 u_j."""
    fv = np.asarray(f0(space.quad_nodes), dtype=float)
    rhs = np.zeros(space.total_dof)
    pos = 0
    for c in space._cells:
        n = c.nodes.size
        rhs[c.dof] += c.U @ (c.weights * fv[pos:pos + n])
        pos += n
    C = space.moment_matrix("P", 0)
    try:
        return scipy.linalg.solve(C, rhs, assume_a="pos")
    except scipy.linalg.LinAlgError as e:
        raise ConfigurationError(f"mass-matrix solve failed: {e}") from e


def crank_nicolson_step(space: PufemSpace, C: np.ndarray, A_t: np.ndarray,
                        A_t_plus: np.ndarray, w_t: np.ndarray, dt: float) -> np.ndarray:
    """(C - dt/2 A(t+dt)) w(t+dt) = (C + dt/2 A(t)) w(t), dense LU."""
    lhs = C - 0.5 * dt * A_t_plus
    rhs = (C + 0.5 * dt * A_t) @ w_t
    try:
        w_new = scipy.linalg.solve(lhs, rhs)
    except scipy.linalg.LinAlgError as e:
        raise StepFailure(f"time-step solve failed: {e}", dt=dt,
                          cond=float(np.linalg.cond(lhs))) from e
    if not np.all(np.isfinite(w_new)):
        raise StepFailure("non-finite weights after step", dt=dt)
    return w_new
