"""Problem specification: the random ODE, its Gaussian excitation and the
Gaussian initial condition.

The system considered throughout is

    dX/dt = h(X) + kappa * Xi(t),    X(t0) = X0,

with a polynomial restoring term h(x) = sum_k eta_k x^k (degree 1 always
present), a Gaussian process Xi with a prescribed mean and autocovariance
kernel, and a Gaussian initial value X0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ParameterError

__all__ = [
    "OUKernel",
    "WhiteNoiseKernel",
    "CustomKernel",
    "NoiseSpec",
    "ModelSpec",
    "InitialSpec",
    "Scenario",
    "ou_kernel",
    "nondimensionalize_bistable",
    "scenario_from_dict",
    "scenario_to_dict",
    "load_scenario",
    "save_scenario",
]


# --------------------------------------------------------------------------
# covariance kernels
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class OUKernel:
    """Exponential (Ornstein-Uhlenbeck) autocovariance.

    Two conventions coexist in the literature and both are used by the
    experiments this package reproduces:

      plain:   C(t, s) = (D / tau) * exp(-|t - s| / tau)
      scaled:  C(t, s) = (D / tau) * exp(-2 |t - s| / tau)

    ``decay_rate`` is the coefficient of |t - s| in the exponent, i.e.
    1/tau (plain) or 2/tau (scaled).
    """

    D: float
    tau: float
    convention: str = "plain"

    def __post_init__(self):
        if self.D <= 0:
            raise ParameterError(f"OU intensity must be positive, got {self.D}")
        if self.tau <= 0:
            raise ParameterError(f"OU correlation time must be positive, got {self.tau}")
        if self.convention not in ("plain", "scaled"):
            raise ParameterError(f"unknown OU convention {self.convention!r}")

    @property
    def decay_rate(self) -> float:
        c = 1.0 if self.convention == "plain" else 2.0
        return c / self.tau

    @property
    def timescale(self) -> float:
        """e-folding time of the kernel; used to size quadrature panels."""
        return 1.0 / self.decay_rate

    def variance(self) -> float:
        """Zero-lag value C(t, t)."""
        return self.D / self.tau

    def __call__(self, t, s):
        return (self.D / self.tau) * np.exp(-self.decay_rate * np.abs(np.asarray(t) - np.asarray(s)))


@dataclass(frozen=True)
class WhiteNoiseKernel:
    """Delta-correlated excitation, C(t, s) = 2 D(t) delta(t - s).

    Never evaluated pointwise; coefficient integrals absorb it through the
    half-mass rule (the symmetric delta family contributes D(t) to a
    one-sided integral ending at t).
    """

    intensity: Union[float, Callable[[float], float]] = 1.0

    def D(self, t):
        if callable(self.intensity):
            return self.intensity(t)
        return self.intensity

    def __call__(self, t, s):  # pragma: no cover - guarded by callers
        raise ParameterError("white-noise kernel has no pointwise value; use the half-mass rule")


@dataclass(frozen=True)
class CustomKernel:
    """User-supplied continuous symmetric kernel C(t, s).

    ``timescale`` hints the shortest scale of variation for quadrature
    panel sizing. Symmetry is the caller's contract; it is spot-checked by
    the test suite, not at every evaluation.
    """

    fn: Callable[[float, float], float]
    timescale: float = 1.0

    def __call__(self, t, s):
        return self.fn(t, s)


Kernel = Union[OUKernel, WhiteNoiseKernel, CustomKernel]


def ou_kernel(D: float, tau: float, convention: str, t, s):
    """Evaluate the OU autocovariance under the named convention."""
    return OUKernel(D=D, tau=tau, convention=convention)(t, s)


# --------------------------------------------------------------------------
# specs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian excitation: mean function, autocovariance kernel, and
    cross-covariance with the initial value (zero if omitted)."""

    kernel: Kernel
    mean: Union[float, Callable[[float], float]] = 0.0
    cross_cov: Optional[Callable[[float], float]] = None

    @property
    def is_white(self) -> bool:
        return isinstance(self.kernel, WhiteNoiseKernel)

    def mean_at(self, t):
        if callable(self.mean):
            return self.mean(t)
        return self.mean

    def cross_cov_at(self, t):
        if self.cross_cov is None:
            return 0.0
        return self.cross_cov(t)

    @property
    def has_cross_cov(self) -> bool:
        return self.cross_cov is not None


@dataclass(frozen=True)
class ModelSpec:
    """Polynomial restoring term h(x) = sum eta_k x^k, noise gain kappa,
    and the time horizon [t0, t_end]."""

    etas: Tuple[Tuple[int, float], ...]
    kappa: float
    t0: float = 0.0
    t_end: float = 1.0

    def __post_init__(self):
        etas = tuple((int(k), float(c)) for k, c in self.etas)
        degrees = [k for k, _ in etas]
        if len(set(degrees)) != len(degrees):
            raise ParameterError(f"duplicate degrees in {degrees}")
        if any(k < 1 for k in degrees):
            raise ParameterError(f"degrees must be positive integers, got {degrees}")
        if 1 not in degrees:
            raise ParameterError("degree 1 must be present (its coefficient may be any real)")
        object.__setattr__(self, "etas", tuple(sorted(etas)))
        if self.t_end <= self.t0:
            raise ParameterError(f"t_end={self.t_end} must exceed t0={self.t0}")

    @property
    def degrees(self) -> Tuple[int, ...]:
        return tuple(k for k, _ in self.etas)

    @property
    def nonlinear_degrees(self) -> Tuple[int, ...]:
        return tuple(k for k, _ in self.etas if k >= 2)

    @property
    def is_linear(self) -> bool:
        return all(k == 1 or c == 0.0 for k, c in self.etas)

    @property
    def eta1(self) -> float:
        return self.eta(1)

    def eta(self, k: int) -> float:
        for kk, c in self.etas:
            if kk == k:
                return c
        raise ParameterError(f"degree {k} not present in model")

    def h(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for k, c in self.etas:
            out += c * x**k
        return out if out.ndim else float(out)

    def h_prime(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for k, c in self.etas:
            out += k * c * x ** (k - 1)
        return out if out.ndim else float(out)

    def h_second(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for k, c in self.etas:
            if k >= 2:
                out += k * (k - 1) * c * x ** (k - 2)
        return out if out.ndim else float(out)

    def h_coeffs(self) -> np.ndarray:
        """Coefficients of h in ascending powers (index p holds x^p)."""
        deg = max(self.degrees)
        c = np.zeros(deg + 1)
        for k, v in self.etas:
            c[k] = v
        return c


def h_eval(model: ModelSpec, x):
    return model.h(x)


def h_prime_eval(model: ModelSpec, x):
    return model.h_prime(x)


@dataclass(frozen=True)
class InitialSpec:
    """Gaussian initial value: mean and (strictly positive) variance."""

    mean: float
    variance: float

    def __post_init__(self):
        if self.variance <= 0:
            raise ParameterError(f"initial variance must be positive, got {self.variance}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-0.5 * (x - self.mean) ** 2 / self.variance) / math.sqrt(
            2 * math.pi * self.variance
        )


@dataclass(frozen=True)
class Scenario:
    model: ModelSpec
    noise: NoiseSpec
    init: InitialSpec
    label: str = ""


# --------------------------------------------------------------------------
# nondimensionalization of the bistable system
# --------------------------------------------------------------------------

def nondimensionalize_bistable(
    eta1: float,
    eta3: float,
    kappa: float,
    D_ou: float,
    tau_cor: float,
    *,
    t0: float = 0.0,
    t_end: float = 10.0,
    init_mean: float = 0.0,
    init_std: float = 0.6,
    label: str = "bistable",
) -> Scenario:
    """Rescale the bistable system eta1*x + eta3*x^3 to its dimensionless
    form x - x^3 driven by a scaled-convention OU kernel.

    The reference time is the relaxation time 1/(2*eta1) of the unforced
    system, giving relative correlation time tau = 2*eta1*tau_cor and
    dimensionless intensity D = 2*kappa^2*D_ou*|eta3|/eta1^2.
    """
    if eta1 <= 0:
        raise ParameterError(f"bistable regime needs eta1 > 0, got {eta1}")
    if eta3 >= 0:
        raise ParameterError(f"bistable regime needs eta3 < 0, got {eta3}")
    if D_ou <= 0 or tau_cor <= 0:
        raise ParameterError("noise intensity and correlation time must be positive")
    tau_rel = 1.0 / (2.0 * eta1)
    tau_tilde = tau_cor / tau_rel
    D_tilde = 2.0 * kappa**2 * D_ou * abs(eta3) / eta1**2
    model = ModelSpec(etas=((1, 1.0), (3, -1.0)), kappa=1.0, t0=t0, t_end=t_end)
    noise = NoiseSpec(kernel=OUKernel(D=D_tilde, tau=tau_tilde, convention="scaled"))
    init = InitialSpec(mean=init_mean, variance=init_std**2)
    return Scenario(model=model, noise=noise, init=init, label=label)


# --------------------------------------------------------------------------
# JSON scenario files
# --------------------------------------------------------------------------
#
# Schema (all fields shown; "label" and "cross_cov" optional):
#
# {
#   "label": "fig3-linear",
#   "etas": [[1, -0.8]],
#   "kappa": 0.2,
#   "t0": 0.0,
#   "t_end": 12.5,
#   "noise": {"type": "ou", "D": 1.0, "tau": 1.0,
#             "convention": "plain", "mean": 0.2},
#   "init": {"mean": -0.7, "variance": 0.0225},
#   "cross_cov": {"type": "zero"}
# }
#
# noise.type is "ou" (requires D, tau, convention) or "white" (requires D,
# taken as a constant intensity). cross_cov.type is "zero" or "exp" with
# params {"amplitude": a, "rate": r} meaning a * exp(-r * (t - t0)).
# Unknown fields are rejected.

_TOP_FIELDS = {"label", "etas", "kappa", "t0", "t_end", "noise", "init", "cross_cov"}
_NOISE_FIELDS = {"type", "D", "tau", "convention", "mean"}
_INIT_FIELDS = {"mean", "variance"}
_CROSS_FIELDS = {"type", "params"}


def _reject_unknown(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    if unknown:
        raise ParameterError(f"unknown field(s) {sorted(unknown)} in {where}")


@dataclass(frozen=True)
class _ExpCrossCov:
    amplitude: float
    rate: float
    t0: float

    def __call__(self, t):
        return self.amplitude * math.exp(-self.rate * (t - self.t0))


def scenario_from_dict(d: dict) -> Scenario:
    _reject_unknown(d, _TOP_FIELDS, "scenario")
    for req in ("etas", "kappa", "t0", "t_end", "noise", "init"):
        if req not in d:
            raise ParameterError(f"scenario missing required field {req!r}")
    nd = d["noise"]
    _reject_unknown(nd, _NOISE_FIELDS, "noise")
    ntype = nd.get("type")
    if ntype == "ou":
        kernel = OUKernel(
            D=float(nd["D"]), tau=float(nd["tau"]),
            convention=nd.get("convention", "plain"),
        )
    elif ntype == "white":
        kernel = WhiteNoiseKernel(intensity=float(nd["D"]))
    else:
        raise ParameterError(f"unknown noise type {ntype!r}")
    mean = float(nd.get("mean", 0.0))

    cross = None
    t0 = float(d["t0"])
    if "cross_cov" in d:
        cd = d["cross_cov"]
        _reject_unknown(cd, _CROSS_FIELDS, "cross_cov")
        ctype = cd.get("type", "zero")
        if ctype == "zero":
            cross = None
        elif ctype == "exp":
            params = dict(cd.get("params", {}))
            _reject_unknown(params, {"amplitude", "rate"}, "cross_cov.params")
            cross = _ExpCrossCov(
                amplitude=float(params["amplitude"]),
                rate=float(params["rate"]), t0=t0,
            )
        else:
            raise ParameterError(f"unknown cross_cov type {ctype!r}")

    idict = d["init"]
    _reject_unknown(idict, _INIT_FIELDS, "init")

    model = ModelSpec(
        etas=tuple((int(k), float(c)) for k, c in d["etas"]),
        kappa=float(d["kappa"]), t0=t0, t_end=float(d["t_end"]),
    )
    noise = NoiseSpec(kernel=kernel, mean=mean, cross_cov=cross)
    init = InitialSpec(mean=float(idict["mean"]), variance=float(idict["variance"]))
    return Scenario(model=model, noise=noise, init=init, label=str(d.get("label", "")))


def scenario_to_dict(sc: Scenario) -> dict:
    k = sc.noise.kernel
    if isinstance(k, OUKernel):
        noise = {"type": "ou", "D": k.D, "tau": k.tau, "convention": k.convention}
    elif isinstance(k, WhiteNoiseKernel):
        if callable(k.intensity):
            raise ParameterError("cannot serialize a callable white-noise intensity")
        noise = {"type": "white", "D": k.intensity}
    else:
        raise ParameterError("custom kernels cannot be serialized to scenario files")
    if callable(sc.noise.mean):
        raise ParameterError("cannot serialize a callable excitation mean")
    noise["mean"] = sc.noise.mean

    d = {
        "label": sc.label,
        "etas": [[k_, c] for k_, c in sc.model.etas],
        "kappa": sc.model.kappa,
        "t0": sc.model.t0,
        "t_end": sc.model.t_end,
        "noise": noise,
        "init": {"mean": sc.init.mean, "variance": sc.init.variance},
    }
    cc = sc.noise.cross_cov
    if cc is None:
        d["cross_cov"] = {"type": "zero"}
    elif isinstance(cc, _ExpCrossCov):
        d["cross_cov"] = {"type": "exp", "params": {"amplitude": cc.amplitude, "rate": cc.rate}}
    else:
        raise ParameterError("only zero/exp cross-covariances can be serialized")
    return d


def load_scenario(path) -> Scenario:
    with open(path) as f:
        return scenario_from_dict(json.load(f))


def save_scenario(sc: Scenario, path):
    with open(path, "w") as f:
        json.dump(scenario_to_dict(sc), f, indent=2)
        f.write("\n")
