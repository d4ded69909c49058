"""Shared fixtures: canonical scenarios used across the suite."""

import numpy as np
import pytest

from genfpk.model import (
    InitialSpec,
    ModelSpec,
    NoiseSpec,
    OUKernel,
    Scenario,
    WhiteNoiseKernel,
)


@pytest.fixture
def linear_scenario():
    """The linear benchmark: eta1=-0.8, kappa=0.2, OU(D=1, tau=1) with mean
    0.2, Gaussian init (-0.7, 0.15^2)."""
    model = ModelSpec(etas=((1, -0.8),), kappa=0.2, t0=0.0, t_end=12.5)
    noise = NoiseSpec(kernel=OUKernel(D=1.0, tau=1.0, convention="plain"), mean=0.2)
    init = InitialSpec(mean=-0.7, variance=0.15**2)
    return Scenario(model=model, noise=noise, init=init, label="linear-benchmark")


@pytest.fixture
def bistable_model():
    return ModelSpec(etas=((1, 1.0), (3, -1.0)), kappa=1.0, t0=0.0, t_end=12.0)


def make_bistable(D, tau, t_end=12.0, init_std=0.6):
    model = ModelSpec(etas=((1, 1.0), (3, -1.0)), kappa=1.0, t0=0.0, t_end=t_end)
    noise = NoiseSpec(kernel=OUKernel(D=D, tau=tau, convention="scaled"))
    init = InitialSpec(mean=0.0, variance=init_std**2)
    return Scenario(model=model, noise=noise, init=init,
                    label=f"bistable-D{D}-tau{tau}")


@pytest.fixture
def bistable_scenario():
    return make_bistable(1.0, 0.1)


@pytest.fixture
def white_scenario():
    model = ModelSpec(etas=((1, -1.0),), kappa=1.0, t0=0.0, t_end=4.0)
    noise = NoiseSpec(kernel=WhiteNoiseKernel(intensity=1.0))
    init = InitialSpec(mean=0.0, variance=0.25)
    return Scenario(model=model, noise=noise, init=init, label="white")
