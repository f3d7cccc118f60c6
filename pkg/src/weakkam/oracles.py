"""Independent reference computations used by ``verify`` and the test suite."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.integrate import quad

from .geometry import ParticleConfig, brute_force_cost
from .lax_oleinik import GridStateSpace
from .potentials import Potential

__all__ = ["brute_force_cost", "brute_force_dist", "enumerate_paths", "enumerate_paths_loop", "pendulum_profile"]


def brute_force_dist(A: ParticleConfig, B: ParticleConfig) -> float:
    return math.sqrt(brute_force_cost(A, B))


def enumerate_paths(space: GridStateSpace, values: np.ndarray, W: Potential, dt: float, k: int) -> np.ndarray:
    """``min`` over every grid path ``x0 -> ... -> xk`` ending at each state.

    The path value is ``v(x0) + sum_j [dist(x_j, x_{j+1})**2/(2 dt) - dt W(x_{j+1})]``
    accumulated left to right.  Enumerates all ``S**(k+1)`` paths, so only
    for tiny spaces.
    """
    S = len(space)
    if S ** (k + 1) > 5_000_000:
        raise ValueError(f"{S}**{k + 1} paths is too many to enumerate")
    cost = space.dist_sq_rows(np.arange(S)) / (2.0 * dt)
    pen = dt * np.asarray(W(space.coords), dtype=float).reshape(-1)
    # w[x0, x1, ..., xj] for the paths enumerated so far
    w = np.asarray(values, dtype=float).copy()
    for _ in range(k):
        # cost[x_new, x_prev] broadcast over the new last axis
        w = (w[..., None] + cost.T) - pen
    return w.reshape(-1, S).min(axis=0)


def enumerate_paths_loop(space: GridStateSpace, values: np.ndarray, W: Potential, dt: float, k: int) -> np.ndarray:
    """Same as ``enumerate_paths`` with an explicit loop over paths (slow, tiny spaces only)."""
    S = len(space)
    cost = space.dist_sq_rows(np.arange(S)) / (2.0 * dt)
    pen = dt * np.asarray(W(space.coords), dtype=float).reshape(-1)
    best = np.full(S, np.inf)
    for path in itertools.product(range(S), repeat=k + 1):
        w = values[path[0]]
        for a, b in zip(path, path[1:]):
            w = (w + cost[b, a]) - pen[b]
        if w < best[path[-1]]:
            best[path[-1]] = w
    return best


def pendulum_profile(x, amplitude: float = 1.0) -> np.ndarray:
    """Weak KAM solution of ``|u'|^2/2 + a cos(2 pi x) = a``, vanishing at 0.

    Critical value ``lambda = a = max W``; ``u'`` has modulus
    ``sqrt(2 (lambda - W))`` and ``u`` is the smaller of the two integrals
    from the maximum of ``W`` going either way around the circle.
    """
    lam = amplitude

    def speed(s):
        return math.sqrt(max(0.0, 2.0 * (lam - amplitude * math.cos(2.0 * math.pi * s))))

    out = []
    for xi in np.atleast_1d(np.asarray(x, dtype=float)):
        xi = xi % 1.0
        right, _ = quad(speed, 0.0, xi, epsabs=1e-13, epsrel=1e-13)
        left, _ = quad(speed, xi, 1.0, epsabs=1e-13, epsrel=1e-13)
        out.append(min(right, left))
    return np.array(out)
