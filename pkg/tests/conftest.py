from __future__ import annotations

import numpy as np
import pytest
from hypothesis import strategies as st

from weakkam.geometry import ParticleConfig, canonicalize
from weakkam.lax_oleinik import build_space
from weakkam.potentials import Potential
from weakkam.weak_kam import solve


def configs(n_min: int = 1, n_max: int = 6):
    """Hypothesis strategy for canonical configurations."""
    coord = st.floats(min_value=0.0, max_value=1.0, exclude_max=True, allow_nan=False)
    return st.lists(coord, min_size=n_min, max_size=n_max).map(canonicalize)


def config_pairs(n_min: int = 1, n_max: int = 6, k: int = 2):
    def build(n):
        coord = st.floats(min_value=0.0, max_value=1.0, exclude_max=True, allow_nan=False)
        one = st.lists(coord, min_size=n, max_size=n).map(canonicalize)
        return st.tuples(*([one] * k))

    return st.integers(n_min, n_max).flatmap(build)


def random_config(rng: np.random.Generator, n: int) -> ParticleConfig:
    return canonicalize(rng.random(n))


@pytest.fixture(scope="session")
def pendulum():
    """n=1, W = cos(2 pi x), m=256, dt=0.01."""
    return solve(build_space(1, 256), Potential.cosine(), 0.01, tol=1e-10)


@pytest.fixture(scope="session")
def pendulum_coarse():
    return solve(build_space(1, 64), Potential.cosine(), 0.02, tol=1e-10)
