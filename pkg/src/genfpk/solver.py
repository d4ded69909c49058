"""Time-marching driver: binds drift/diffusion coefficients to the
partition-of-unity discretization, owns the response-moment history, and
runs the prediction-correction iteration needed by the adjustable
decoupling (VADA) diffusion, whose coefficient depends on the unknown pdf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import coefficients as cf
from .errors import DivergenceError, ParameterError, StepFailure, UsageError
from .model import ModelSpec, Scenario
from .pufem import (
    PdfField,
    PufemSpace,
    assemble_mass,
    assemble_system,
    build_cover,
    crank_nicolson_step,
    fit_initial,
)

__all__ = [
    "MomentHistory",
    "SolveConfig",
    "SolveResult",
    "METHODS",
    "default_dt",
    "relaxation_time",
    "estimate_domain",
    "run",
    "run_local",
    "run_vada",
    "compute_moments",
    "detect_stationarity",
]

METHODS = ("ExactLinear", "WhiteNoiseFPK", "SCT", "Fox", "Hanggi", "VADA")

_LOCAL_METHODS = ("ExactLinear", "WhiteNoiseFPK", "SCT", "Fox")


# --------------------------------------------------------------------------
# moment history
# --------------------------------------------------------------------------

class MomentHistory:
    """Per-step response moments R_{h'}(t_i) and R_{g_k'}(t_i), plus the
    running prefix integral Q(t_i) = int_{t0}^{t_i} R_{h'}(u) du by the
    trapezoid rule on the step grid.

    Backed by growing arrays so the time-marching loop appends in O(1) and
    coefficient quadratures read contiguous views.
    """

    def __init__(self, degrees: Sequence[int], t0: float, r_hprime: float,
                 r_gk: Dict[int, float]):
        self._degrees = tuple(degrees)
        cap = 1024
        self._t = np.empty(cap)
        self._rh = np.empty(cap)
        self._q = np.empty(cap)
        self._rg = {k: np.empty(cap) for k in self._degrees}
        self._n = 1
        self._t[0] = t0
        self._rh[0] = r_hprime
        self._q[0] = 0.0
        for k in self._degrees:
            self._rg[k][0] = r_gk[k]

    def __len__(self):
        return self._n

    @property
    def degrees(self):
        return self._degrees

    @property
    def times(self) -> np.ndarray:
        return self._t[: self._n]

    @property
    def r_hprime(self) -> np.ndarray:
        return self._rh[: self._n]

    @property
    def prefix(self) -> np.ndarray:
        return self._q[: self._n]

    def r_gk(self, k: int) -> np.ndarray:
        return self._rg[k][: self._n]

    def _grow(self):
        cap = 2 * self._t.size
        for name in ("_t", "_rh", "_q"):
            buf = np.empty(cap)
            buf[: self._n] = getattr(self, name)[: self._n]
            setattr(self, name, buf)
        for k in self._degrees:
            buf = np.empty(cap)
            buf[: self._n] = self._rg[k][: self._n]
            self._rg[k] = buf

    def append(self, t: float, r_hprime: float, r_gk: Dict[int, float]):
        if t <= self._t[self._n - 1]:
            raise UsageError("history times must be strictly increasing")
        if self._n == self._t.size:
            self._grow()
        i = self._n
        self._t[i] = t
        self._rh[i] = r_hprime
        for k in self._degrees:
            self._rg[k][i] = r_gk[k]
        self._n += 1
        self._update_prefix()

    def replace_last(self, r_hprime: float, r_gk: Dict[int, float]):
        if self._n < 2:
            raise UsageError("cannot replace the initial node")
        i = self._n - 1
        self._rh[i] = r_hprime
        for k in self._degrees:
            self._rg[k][i] = r_gk[k]
        self._update_prefix()

    def _update_prefix(self):
        i = self._n - 1
        dt = self._t[i] - self._t[i - 1]
        self._q[i] = self._q[i - 1] + 0.5 * dt * (self._rh[i - 1] + self._rh[i])

    def last(self) -> Tuple[float, float, Dict[int, float]]:
        i = self._n - 1
        return self._t[i], self._rh[i], {k: self._rg[k][i] for k in self._degrees}


# --------------------------------------------------------------------------
# configuration / result
# --------------------------------------------------------------------------

def relaxation_time(model: ModelSpec) -> float:
    """Relaxation time of the deterministic linear part: 1/|eta1| for a
    stable linear term, 1/(2 eta1) for an unstable one (where the decay
    rate at the stable equilibria of the bistable form is 2 eta1)."""
    e1 = model.eta1
    if e1 < 0:
        return 1.0 / (-e1)
    if e1 > 0:
        return 1.0 / (2.0 * e1)
    return 1.0


def default_dt(scenario: Scenario) -> float:
    return relaxation_time(scenario.model) / 200.0


@dataclass(frozen=True)
class SolveConfig:
    method: str
    vada_order: int = 2
    dt: Optional[float] = None
    eps_tol: float = 1e-8
    max_iters: int = 50
    K: int = 50
    basis_count: int = 4
    smoothness: int = 2
    domain: Optional[Tuple[float, float]] = None
    snapshot_stride: int = 10
    divergence_cap: float = 1e6
    norm_drift_limit: float = 0.1
    boundary_tol: float = 1e-6
    boundary_abort: bool = False
    allow_odd: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.dt is not None and self.dt <= 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if self.eps_tol <= 0:
            raise ParameterError("eps_tol must be positive")
        if self.method == "VADA" and self.vada_order % 2 == 1 and not self.allow_odd:
            raise ParameterError(
                f"odd truncation order {self.vada_order} is refused by default "
                "(positivity); set allow_odd=True to override"
            )

    @property
    def effective_order(self) -> int:
        return 0 if self.method == "Hanggi" else self.vada_order


@dataclass
class SolveResult:
    scenario: Scenario
    config: SolveConfig
    space: PufemSpace
    times: np.ndarray                  # snapshot times
    weights: List[np.ndarray]          # snapshot weight vectors
    history: Optional[MomentHistory]
    diagnostics: Dict

    def field(self, i: int = -1) -> PdfField:
        return PdfField(space=self.space, weights=self.weights[i], t=float(self.times[i]))

    def pdf_on(self, grid, i: int = -1) -> np.ndarray:
        return self.space.eval(self.weights[i], grid)

    @property
    def domain(self) -> Tuple[float, float]:
        return self.space.cover.omega_min, self.space.cover.omega_max


# --------------------------------------------------------------------------
# domain estimation
# --------------------------------------------------------------------------

def estimate_domain(scenario: Scenario, config: SolveConfig) -> Tuple[float, float]:
    """Computational domain wide enough for the whole run.

    Linear models: the analytic Gaussian envelope mean +/- 6 sigma over the
    horizon. Nonlinear models: extreme quantiles of a small, coarse path
    ensemble, widened by a margin. Either way the initial density's own
    6.5-sigma interval is included. SCT runs are additionally clipped to
    the region where the diffusion coefficient stays positive.
    """
    if config.domain is not None:
        return (float(config.domain[0]), float(config.domain[1]))
    model, noise, init = scenario.model, scenario.noise, scenario.init
    lo = init.mean - 6.5 * init.std
    hi = init.mean + 6.5 * init.std
    if model.is_linear:
        from .analytic import linear_moments

        for t in np.linspace(model.t0, model.t_end, 61):
            m, v = linear_moments(model, noise, init, float(t))
            lo = min(lo, m - 6.0 * math.sqrt(v))
            hi = max(hi, m + 6.0 * math.sqrt(v))
    else:
        from .montecarlo import integrate_paths

        t_grid = np.linspace(model.t0, model.t_end,
                             max(32, int((model.t_end - model.t0) / (relaxation_time(model) / 8)) + 1))
        ens = integrate_paths(scenario, dt_mc=None, t_grid=t_grid, N_s=2000,
                              seed=config.seed + 90001, coarse=True)
        allx = ens.trajectories.ravel()
        qlo, qhi = np.quantile(allx, [1e-4, 1 - 1e-4])
        margin = 0.25 * (qhi - qlo)
        lo = min(lo, qlo - margin)
        hi = max(hi, qhi + margin)
    if config.method == "SCT" and not model.is_linear:
        diff = cf.sct_diffusion(model, noise, init)
        x = np.linspace(lo, hi, 4001)
        b = np.asarray(diff(x, model.t_end))
        floor = 0.02 * float(np.max(b))
        ok = b > floor
        # largest positive interval containing the initial mean
        i0 = int(np.argmin(np.abs(x - init.mean)))
        if not ok[i0]:
            raise UsageError("SCT diffusion non-positive at the initial mean")
        iL = i0
        while iL > 0 and ok[iL - 1]:
            iL -= 1
        iR = i0
        while iR < x.size - 1 and ok[iR + 1]:
            iR += 1
        lo, hi = max(lo, x[iL]), min(hi, x[iR])
    return float(lo), float(hi)


# --------------------------------------------------------------------------
# shared stepping internals
# --------------------------------------------------------------------------

def _norm_vector(space: PufemSpace) -> np.ndarray:
    n = np.zeros(space.total_dof)
    for c in space._cells:
        n[c.dof] += c.U @ c.weights
    return n


def compute_moments(field: PdfField, model: ModelSpec,
                    norm: Optional[float] = None) -> Dict:
    """R_{h'} = int h'(x) f-hat dx and R_{g_k'} = int k x^{k-1} f-hat dx for
    each nonlinear degree k. Rejects badly de-normalized fields, whose
    moments would be meaningless."""
    sp = field.space
    fv = sp.values_at_quadrature(field.weights)
    if norm is None:
        norm = sp.integrate(fv)
    if abs(norm - 1.0) > 1e-2:
        raise DivergenceError(f"normalization drifted to {norm:.4f}; moments meaningless",
                              t=field.t)
    x = sp.quad_nodes
    out = {"h_prime": sp.integrate(np.asarray(model.h_prime(x)) * fv)}
    for k in model.nonlinear_degrees:
        out[k] = sp.integrate(k * x ** (k - 1) * fv)
    return out


class _StepMonitor:
    """Per-step divergence / conservation / boundary bookkeeping."""

    def __init__(self, scenario: Scenario, config: SolveConfig, space: PufemSpace):
        self.config = config
        self.space = space
        self.nvec = _norm_vector(space)
        self.boundary_events: List[Tuple[float, float]] = []

    def norm(self, w: np.ndarray) -> float:
        return float(self.nvec @ w)

    def check(self, w: np.ndarray, t: float) -> float:
        cfg = self.config
        fv = self.space.values_at_quadrature(w)
        peak = float(np.max(np.abs(fv)))
        if not np.all(np.isfinite(w)) or peak > cfg.divergence_cap:
            raise DivergenceError(f"solution blew up (max |f| = {peak:.3g})", t=t)
        nrm = self.norm(w)
        if abs(nrm - 1.0) > cfg.norm_drift_limit:
            raise DivergenceError(f"normalization drifted to {nrm:.4f}", t=t)
        b = self.space.eval(w, np.array([self.space.cover.omega_min,
                                         self.space.cover.omega_max]))
        rel = float(np.max(np.abs(b))) / max(peak, 1e-300)
        if rel > cfg.boundary_tol:
            self.boundary_events.append((t, rel))
            if cfg.boundary_abort:
                raise DivergenceError(
                    f"density at the domain boundary reached {rel:.2e} of the peak", t=t)
        return nrm


def _snapshot_diagnostics(space, w, t, diag, monitor, model, noise, init, method):
    nrm = monitor.norm(w)
    diag["norm"].append(nrm)
    fv = space.values_at_quadrature(w)
    dfv = space.values_at_quadrature(w, deriv=True)
    diag["I"].append(space.integrate(fv * fv))
    diag["P"].append(space.integrate(dfv * dfv))
    if method == "ExactLinear":
        diag["d_eff"].append(cf.d_eff_linear(model, noise, init, t))


# --------------------------------------------------------------------------
# drivers
# --------------------------------------------------------------------------

def run(scenario: Scenario, config: SolveConfig) -> SolveResult:
    if config.method in _LOCAL_METHODS:
        return run_local(scenario, config)
    return run_vada(scenario, config)


def _setup(scenario: Scenario, config: SolveConfig):
    domain = estimate_domain(scenario, config)
    space = PufemSpace(build_cover(domain[0], domain[1], config.K),
                       basis_count=config.basis_count, smoothness=config.smoothness)
    C = assemble_mass(space)
    w0 = fit_initial(space, scenario.init.pdf)
    dt = config.dt if config.dt is not None else default_dt(scenario)
    n_steps = max(1, int(round((scenario.model.t_end - scenario.model.t0) / dt)))
    return space, C, w0, dt, n_steps


def run_local(scenario: Scenario, config: SolveConfig) -> SolveResult:
    """March the pdf equation for methods whose diffusion coefficient does
    not depend on the unknown pdf (no inner iteration needed)."""
    model, noise, init = scenario.model, scenario.noise, scenario.init
    method = config.method
    if method not in _LOCAL_METHODS:
        raise UsageError(f"run_local does not handle method {method!r}")
    if method == "ExactLinear" and not model.is_linear:
        raise UsageError("ExactLinear requires a linear model")
    if method == "WhiteNoiseFPK" and not noise.is_white:
        raise UsageError("WhiteNoiseFPK requires a white-noise kernel")
    if method == "ExactLinear":
        diff = cf.linear_diffusion(model, noise, init)
    elif method == "WhiteNoiseFPK":
        diff = cf.white_noise_diffusion(model, noise)
    elif method == "SCT":
        diff = cf.sct_diffusion(model, noise, init)
    else:
        diff = cf.fox_diffusion(model, noise, init)
    drift = cf.DriftCoefficient(model=model, noise=noise)

    space, C, w, dt, n_steps = _setup(scenario, config)
    monitor = _StepMonitor(scenario, config, space)
    diag = {"norm": [], "I": [], "P": [], "d_eff": [], "sct_reports": [],
            "boundary_events": monitor.boundary_events, "iterations": []}
    times = [model.t0]
    snaps = [w.copy()]
    _snapshot_diagnostics(space, w, model.t0, diag, monitor, model, noise, init, method)
    if method == "SCT":
        diag["sct_reports"].append(
            (model.t0, cf.check_sct_validity(diff, (space.cover.omega_min, space.cover.omega_max), model.t0)))

    t = model.t0
    A_prev = assemble_system(space, drift, diff, t)
    for i in range(1, n_steps + 1):
        t_next = model.t0 + i * dt
        A_next = assemble_system(space, drift, diff, t_next)
        w = crank_nicolson_step(space, C, A_prev, A_next, w, t_next - t)
        monitor.check(w, t_next)
        t, A_prev = t_next, A_next
        if i % config.snapshot_stride == 0 or i == n_steps:
            times.append(t)
            snaps.append(w.copy())
            _snapshot_diagnostics(space, w, t, diag, monitor, model, noise, init, method)
            if method == "SCT":
                diag["sct_reports"].append(
                    (t, cf.check_sct_validity(diff, (space.cover.omega_min, space.cover.omega_max), t)))
    return SolveResult(scenario=scenario, config=config, space=space,
                       times=np.asarray(times), weights=snaps, history=None,
                       diagnostics=diag)


def run_vada(scenario: Scenario, config: SolveConfig) -> SolveResult:
    """Prediction-correction marching for the pdf-dependent diffusion:

    step 1 seeds the new moments with the initial ones; later steps
    extrapolate linearly from the two previous steps; each step assembles
    the diffusion from the predicted moments, advances the pdf, recomputes
    the moments from it and repeats until they agree within eps_tol
    (componentwise, relative)."""
    model, noise, init = scenario.model, scenario.noise, scenario.init
    if config.method not in ("Hanggi", "VADA"):
        raise UsageError(f"run_vada does not handle method {config.method!r}")
    M = config.effective_order
    drift = cf.DriftCoefficient(model=model, noise=noise)

    space, C, w, dt, n_steps = _setup(scenario, config)
    monitor = _StepMonitor(scenario, config, space)
    diag = {"norm": [], "I": [], "P": [], "d_eff": [], "sct_reports": [],
            "boundary_events": monitor.boundary_events, "iterations": []}
    degrees = model.nonlinear_degrees

    field0 = PdfField(space=space, weights=w, t=model.t0)
    m0 = compute_moments(field0, model)
    history = MomentHistory(degrees, model.t0, m0["h_prime"],
                            {k: m0[k] for k in degrees})
    times = [model.t0]
    snaps = [w.copy()]
    _snapshot_diagnostics(space, w, model.t0, diag, monitor, model, noise, init, config.method)

    def moments_tuple(m: Dict) -> np.ndarray:
        return np.array([m["h_prime"]] + [m[k] for k in degrees])

    diff0 = cf.vada_diffusion(model, noise, init, M, history,
                              {k: m0[k] for k in degrees}, allow_odd=config.allow_odd)
    A_prev = assemble_system(space, drift, diff0, model.t0)
    t = model.t0
    rh_hist = [m0["h_prime"]]
    rg_hist = [{k: m0[k] for k in degrees}]

    for i in range(1, n_steps + 1):
        t_next = model.t0 + i * dt
        if i == 1:
            rh_pred = rh_hist[-1]
            rg_pred = dict(rg_hist[-1])
        else:
            rh_pred = 2 * rh_hist[-1] - rh_hist[-2]
            rg_pred = {k: 2 * rg_hist[-1][k] - rg_hist[-2][k] for k in degrees}
        history.append(t_next, rh_pred, rg_pred)
        pred = np.array([rh_pred] + [rg_pred[k] for k in degrees])

        w_new = None
        for it in range(1, config.max_iters + 1):
            diff = cf.vada_diffusion(model, noise, init, M, history, rg_pred,
                                     allow_odd=config.allow_odd)
            A_next = assemble_system(space, drift, diff, t_next)
            w_new = crank_nicolson_step(space, C, A_prev, A_next, w, dt)
            monitor.check(w_new, t_next)
            fld = PdfField(space=space, weights=w_new, t=t_next)
            upd = compute_moments(fld, model)
            upd_vec = moments_tuple(upd)
            resid = np.abs(pred - upd_vec) / np.maximum(1.0, np.abs(upd_vec))
            rh_pred = upd["h_prime"]
            rg_pred = {k: upd[k] for k in degrees}
            history.replace_last(rh_pred, rg_pred)
            if np.all(resid <= config.eps_tol):
                break
            pred = upd_vec
        else:
            raise StepFailure(
                f"moment iteration did not converge in {config.max_iters} iterations",
                t=t_next, dt=dt, residual=float(np.max(resid)))
        diag["iterations"].append(it)

        # next step's A(t) must use this step's converged diffusion
        diff = cf.vada_diffusion(model, noise, init, M, history, rg_pred,
                                 allow_odd=config.allow_odd)
        A_prev = assemble_system(space, drift, diff, t_next)
        w, t = w_new, t_next
        rh_hist.append(rh_pred)
        rg_hist.append(dict(rg_pred))
        if len(rh_hist) > 2:
            rh_hist.pop(0)
            rg_hist.pop(0)
        if i % config.snapshot_stride == 0 or i == n_steps:
            times.append(t)
            snaps.append(w.copy())
            _snapshot_diagnostics(space, w, t, diag, monitor, model, noise, init, config.method)
    return SolveResult(scenario=scenario, config=config, space=space,
                       times=np.asarray(times), weights=snaps, history=history,
                       diagnostics=diag)


# --------------------------------------------------------------------------
# stationarity
# --------------------------------------------------------------------------

def detect_stationarity(result: SolveResult, window: Optional[float] = None,
                        rtol: float = 1e-3) -> Optional[float]:
    """First snapshot time after which the mean and second moment stay
    within rtol (relative to their scales) over a trailing window; None if
    never reached."""
    times = result.times
    if window is None:
        window = 2.0 * relaxation_time(result.scenario.model)
    sp = result.space
    x = sp.quad_nodes
    m1 = np.empty(times.size)
    m2 = np.empty(times.size)
    for i, w in enumerate(result.weights):
        fv = sp.values_at_quadrature(w)
        m1[i] = sp.integrate(x * fv)
        m2[i] = sp.integrate(x * x * fv)
    s2 = max(np.max(np.abs(m2)), 1e-12)
    s1 = max(np.max(np.abs(m1)), math.sqrt(s2))
    for i in range(times.size):
        sel = (times >= times[i]) & (times <= times[i] + window)
        if times[sel].size < 2 or times[-1] < times[i] + window:
            break
        if (np.ptp(m1[sel]) / s1 <= rtol) and (np.ptp(m2[sel]) / s2 <= rtol):
            return float(times[i])
    return None
