"""Monte Carlo ground truth: path ensembles of the random ODE under sampled
OU excitation, kernel density estimation, and pdf comparison metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.stats

from ._quad import trapz
from .errors import DivergenceError, ParameterError, UsageError
from .model import NoiseSpec, OUKernel, Scenario

__all__ = [
    "PathEnsemble",
    "PdfComparison",
    "default_dt_mc",
    "ou_sample_path",
    "ou_sample_paths",
    "integrate_paths",
    "binned_density",
    "kde_estimate",
    "stationary_sampling",
    "compare_pdfs",
]

_BLOWUP_CAP = 1e6
_MAX_FLAGGED_FRACTION = 1e-3


def _relaxation_time(scenario: Scenario) -> float:
    e1 = scenario.model.eta1
    if e1 < 0:
        return 1.0 / (-e1)
    if e1 > 0:
        return 1.0 / (2.0 * e1)
    return 1.0


def default_dt_mc(scenario: Scenario) -> float:
    """Resolve both the noise correlation time and the system relaxation
    time: min(tau/20, tau_rel/50)."""
    kern = scenario.noise.kernel
    if not isinstance(kern, OUKernel):
        raise UsageError("path sampling requires an OU kernel")
    return min(kern.tau / 20.0, _relaxation_time(scenario) / 50.0)


# --------------------------------------------------------------------------
# OU sampling
# --------------------------------------------------------------------------

def ou_sample_paths(noise: NoiseSpec, t_grid: np.ndarray, rng: np.random.Generator,
                    n_paths: int) -> np.ndarray:
    """Exact OU recursion on a uniform grid, n_paths at once:

    Xi_{j+1} = rho Xi_j + sqrt(var (1 - rho^2)) z_j, rho = e^{-c dt / tau},
    started from the stationary marginal, plus the deterministic mean.
    Returns shape (n_paths, len(t_grid)).
    """
    kern = noise.kernel
    if not isinstance(kern, OUKernel):
        raise UsageError("OU sampling requires an OU kernel")
    t_grid = np.asarray(t_grid, dtype=float)
    dts = np.diff(t_grid)
    if dts.size and not np.allclose(dts, dts[0], rtol=1e-8):
        raise UsageError("OU recursion requires a uniform time grid")
    var = kern.variance()
    paths = np.empty((n_paths, t_grid.size))
    paths[:, 0] = rng.standard_normal(n_paths) * math.sqrt(var)
    if dts.size:
        rho = math.exp(-kern.decay_rate * float(dts[0]))
        sig = math.sqrt(var * (1.0 - rho * rho))
        for j in range(dts.size):
            paths[:, j + 1] = rho * paths[:, j] + sig * rng.standard_normal(n_paths)
    means = np.asarray([noise.mean_at(float(t)) for t in t_grid]) \
        if callable(noise.mean) else noise.mean_at(0.0)
    return paths + means


def ou_sample_path(noise: NoiseSpec, t_grid: np.ndarray,
                   rng: np.random.Generator) -> np.ndarray:
    """Single sampled excitation path on a uniform grid."""
    return ou_sample_paths(noise, t_grid, rng, 1)[0]


# --------------------------------------------------------------------------
# path integration
# --------------------------------------------------------------------------

@dataclass
class PathEnsemble:
    t_grid: np.ndarray                 # snapshot times
    trajectories: np.ndarray           # (N_s, len(t_grid)) response values
    seed: int
    dt_mc: float
    n_flagged: int = 0

    @property
    def n_paths(self) -> int:
        return self.trajectories.shape[0]

    def samples_at(self, i: int = -1) -> np.ndarray:
        x = self.trajectories[:, i]
        return x[np.isfinite(x)]


def integrate_paths(scenario: Scenario, dt_mc: Optional[float], t_grid: np.ndarray,
                    N_s: int, seed: int, coarse: bool = False) -> PathEnsemble:
    """Heun integration of dX/dt = h(X) + kappa Xi(t) along sampled OU
    paths, with X0 drawn from the initial Gaussian (independent of the
    excitation; correlated initial values are not supported).

    Paths exceeding the blow-up cap are flagged (set to NaN from that point
    on); more than 0.1% flagged paths fails the run.
    """
    model, noise, init = scenario.model, scenario.noise, scenario.init
    if noise.has_cross_cov:
        raise UsageError("correlated initial value and excitation sampling is unsupported")
    t_grid = np.asarray(t_grid, dtype=float)
    if dt_mc is None:
        dt_mc = default_dt_mc(scenario)
        if coarse:
            dt_mc *= 4.0
    t0, t_end = float(t_grid[0]), float(t_grid[-1])
    n_fine = max(1, int(math.ceil((t_end - t0) / dt_mc)))
    fine = np.linspace(t0, t_end, n_fine + 1)
    dt = (t_end - t0) / n_fine
    out_idx = np.searchsorted(fine, t_grid - 1e-12 * max(1.0, abs(t_end)))

    rng = np.random.default_rng(seed)
    kern = noise.kernel
    if not isinstance(kern, OUKernel):
        raise UsageError("path sampling requires an OU kernel")
    var = kern.variance()
    rho = math.exp(-kern.decay_rate * dt)
    sig = math.sqrt(var * (1.0 - rho * rho))
    # stream the exact OU recursion instead of materializing all noise paths
    xi = rng.standard_normal(N_s) * math.sqrt(var)
    x = init.mean + init.std * rng.standard_normal(N_s)
    kappa = model.kappa
    traj = np.empty((N_s, t_grid.size))
    alive = np.ones(N_s, dtype=bool)

    def f(xv, xiv, t):
        return model.h(xv) + kappa * (xiv + noise.mean_at(t))

    next_out = 0
    for j in range(n_fine + 1):
        while next_out < t_grid.size and out_idx[next_out] == j:
            traj[:, next_out] = np.where(alive, x, np.nan)
            next_out += 1
        if j == n_fine:
            break
        t_j = fine[j]
        xi_next = rho * xi + sig * rng.standard_normal(N_s)
        f0 = f(x, xi, t_j)
        xp = x + dt * f0
        np.clip(xp, -_BLOWUP_CAP, _BLOWUP_CAP, out=xp)
        x = x + 0.5 * dt * (f0 + f(xp, xi_next, t_j + dt))
        xi = xi_next
        bad = ~np.isfinite(x) | (np.abs(x) > _BLOWUP_CAP)
        if np.any(bad):
            alive &= ~bad
            x = np.where(bad, 0.0, x)
    n_flagged = int(N_s - np.count_nonzero(alive))
    if n_flagged > _MAX_FLAGGED_FRACTION * N_s:
        raise DivergenceError(
            f"{n_flagged}/{N_s} paths blew up during integration")
    return PathEnsemble(t_grid=t_grid, trajectories=traj, seed=seed,
                        dt_mc=dt, n_flagged=n_flagged)


# --------------------------------------------------------------------------
# density estimation
# --------------------------------------------------------------------------

def kde_estimate(samples: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Gaussian-kernel density estimate with Scott's bandwidth, renormalized
    on the evaluation grid."""
    samples = np.asarray(samples, dtype=float)
    samples = samples[np.isfinite(samples)]
    if samples.size < 100:
        raise ParameterError(f"need at least 100 samples, got {samples.size}")
    if np.std(samples) == 0:
        raise ParameterError("degenerate (zero-variance) sample set")
    kde = scipy.stats.gaussian_kde(samples, bw_method="scott")
    f = kde(np.asarray(grid, dtype=float))
    z = trapz(f, grid)
    if z <= 0:
        raise ParameterError("density estimate integrated to zero on the grid")
    return f / z


def binned_density(samples: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Histogram density (Freedman-Diaconis binning) interpolated onto the
    evaluation grid and renormalized there.

    Unlike a fixed-bandwidth KDE this estimator has no smoothing bias, which
    matters for densities whose peaks are narrower than Scott's bandwidth
    (low-noise stationary states); its price is bin-level sampling noise, so
    it is the right choice for integral metrics but not for peak finding.
    """
    samples = np.asarray(samples, dtype=float)
    samples = samples[np.isfinite(samples)]
    if samples.size < 100:
        raise ParameterError(f"need at least 100 samples, got {samples.size}")
    if np.std(samples) == 0:
        raise ParameterError("degenerate (zero-variance) sample set")
    grid = np.asarray(grid, dtype=float)
    span = (float(grid[0]), float(grid[-1]))
    edges = np.histogram_bin_edges(samples, bins="auto", range=span)
    hist, edges = np.histogram(samples, bins=edges, range=span, density=True)
    centers = 0.5 * (edges[1:] + edges[:-1])
    f = np.interp(grid, centers, hist)
    z = trapz(f, grid)
    if z <= 0:
        raise ParameterError("density estimate integrated to zero on the grid")
    return f / z


# --------------------------------------------------------------------------
# stationary sampling
# --------------------------------------------------------------------------

def stationary_sampling(scenario: Scenario, dt_mc: Optional[float], seed: int,
                        N_s: int = 50_000, rtol: float = 0.02) -> np.ndarray:
    """Pooled decorrelated samples of the stationary response.

    Detects the end of the transient by time invariance of the first two
    ensemble moments, then keeps every path's value each 2*tau onward
    (samples a lag 2*tau apart are practically uncorrelated for an OU-driven
    system). The scenario horizon must be long enough to cover both phases.
    """
    kern = scenario.noise.kernel
    if not isinstance(kern, OUKernel):
        raise UsageError("stationary sampling requires an OU kernel")
    model = scenario.model
    tau = kern.tau
    check_dt = max(2.0 * tau, _relaxation_time(scenario)) / 4.0
    t_grid = np.arange(model.t0, model.t_end + 1e-12, check_dt)
    ens = integrate_paths(scenario, dt_mc, t_grid, N_s, seed)
    m1 = np.nanmean(ens.trajectories, axis=0)
    m2 = np.nanmean(ens.trajectories**2, axis=0)
    # scale the mean's variation by the response amplitude, not the mean
    # itself, which may legitimately hover around zero
    s2 = max(float(np.max(np.abs(m2))), 1e-12)
    s1 = max(float(np.max(np.abs(m1))), math.sqrt(s2))
    # statistical noise floor: the range of ~M independent checkpoint
    # estimates fluctuates by several standard errors even at stationarity
    x_last = ens.samples_at(-1)
    se1 = float(np.std(x_last)) / math.sqrt(max(x_last.size, 1))
    se2 = float(np.std(x_last**2)) / math.sqrt(max(x_last.size, 1))
    tol1 = max(rtol, 8.0 * se1 / s1)
    tol2 = max(rtol, 8.0 * se2 / s2)
    window = max(4.0 * tau, 2.0 * _relaxation_time(scenario))
    t_st = None
    for i in range(t_grid.size):
        sel = (t_grid >= t_grid[i]) & (t_grid <= t_grid[i] + window)
        if t_grid[-1] < t_grid[i] + window:
            break
        if (np.ptp(m1[sel]) / s1 <= tol1) and (np.ptp(m2[sel]) / s2 <= tol2):
            t_st = float(t_grid[i])
            break
    if t_st is None:
        raise DivergenceError("stationarity was not reached within the horizon")
    # confirmation: moments stay put over the remaining horizon
    conf = t_grid >= t_st
    if np.ptp(m1[conf]) / s1 > 2 * tol1 or np.ptp(m2[conf]) / s2 > 2 * tol2:
        raise DivergenceError("moments drifted after the detected stationary time")
    collect = t_grid[(t_grid >= t_st) & (np.mod(np.round((t_grid - t_st) / check_dt),
                                                 max(1, int(round(2 * tau / check_dt)))) == 0)]
    cols = np.searchsorted(t_grid, collect)
    pooled = ens.trajectories[:, cols].ravel()
    return pooled[np.isfinite(pooled)]


# --------------------------------------------------------------------------
# comparison metrics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PdfComparison:
    l1: float
    linf: float
    peaks_p: Tuple[Tuple[float, float], ...]
    peaks_q: Tuple[Tuple[float, float], ...]


def _find_peaks(grid: np.ndarray, f: np.ndarray) -> Tuple[Tuple[float, float], ...]:
    """Local maxima (3-point stencil) above 10% of the global maximum."""
    thresh = 0.1 * float(np.max(f))
    peaks = []
    for i in range(1, f.size - 1):
        if f[i] >= f[i - 1] and f[i] > f[i + 1] and f[i] >= thresh:
            peaks.append((float(grid[i]), float(f[i])))
    return tuple(peaks)


def compare_pdfs(p: np.ndarray, q: np.ndarray, grid: np.ndarray) -> PdfComparison:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if p.shape != grid.shape or q.shape != grid.shape:
        raise UsageError("densities and grid must share a common shape")
    diff = np.abs(p - q)
    return PdfComparison(
        l1=float(trapz(diff, grid)),
        linf=float(np.max(diff)),
        peaks_p=_find_peaks(grid, p),
        peaks_q=_find_peaks(grid, q),
    )
