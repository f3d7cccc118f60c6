"""Particle configurations on the circle and the quotient metric between them.

A state is stored as ``n`` equal-mass particles on the torus ``[0, 1)``,
sorted nondecreasingly.  Sorting picks one representative of the orbit under
particle relabelings, and reducing mod 1 picks one representative under
integer shifts, so any function that is periodic and rearrangement invariant
is a function of the canonical configuration alone.

The distance between two configurations is the quadratic optimal-transport
distance between their empirical measures, with mass ``1/n`` per particle.
On the circle an optimal matching of sorted points is a cyclic shift of the
sorted order; ``brute_force_cost`` enumerates every permutation and is kept
as the reference for that claim.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


def _reduce(x: np.ndarray) -> np.ndarray:
    r = np.mod(x, 1.0)
    # np.mod(-tiny, 1.0) rounds up to exactly 1.0
    r[r >= 1.0] = 0.0
    return r


@dataclass(frozen=True)
class ParticleConfig:
    """Canonical configuration: coordinates in [0, 1), sorted nondecreasingly."""

    points: tuple[float, ...]

    def __post_init__(self):
        if len(self.points) == 0:
            raise ValueError("configuration must contain at least one particle")
        prev = -math.inf
        for x in self.points:
            if not (0.0 <= x < 1.0):
                raise ValueError(f"coordinate {x!r} outside [0, 1)")
            if x < prev:
                raise ValueError("coordinates must be sorted; use canonicalize()")
            prev = x

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)

    def lift(self) -> "LiftedConfig":
        return LiftedConfig(self.points)


@dataclass(frozen=True)
class LiftedConfig:
    """Unconstrained real-line lifts of particle positions, one per particle."""

    reals: tuple[float, ...]

    def __post_init__(self):
        if len(self.reals) == 0:
            raise ValueError("configuration must contain at least one particle")
        if not all(math.isfinite(x) for x in self.reals):
            raise ValueError("lifted coordinates must be finite")

    @property
    def n(self) -> int:
        return len(self.reals)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.reals, dtype=float)

    @property
    def base(self) -> ParticleConfig:
        return canonicalize(self.reals)


@dataclass(frozen=True)
class Matching:
    """Optimal pairing of two configurations.

    Particle ``i`` of the source is sent to ``target[assignment[i]] + lifts[i]``
    on the real line, so ``cost = mean((a_i - b_assignment(i) - lifts_i)**2)``.
    """

    assignment: tuple[int, ...]
    lifts: tuple[int, ...]
    cost: float


def canonicalize(points: Sequence[float]) -> ParticleConfig:
    arr = np.asarray(points, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("configuration must contain at least one particle")
    if not np.all(np.isfinite(arr)):
        raise ValueError("configuration contains a non-finite coordinate")
    return ParticleConfig(tuple(float(x) for x in np.sort(_reduce(arr))))


def torus_dist(x: float, y: float) -> float:
    d = abs(x - y)
    return min(d, 1.0 - d)


def _nearest_lifts(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # integer L minimizing |a - b - L|; half-way ties go to floor(a - b + 0.5)
    return np.floor(a - b + 0.5)


def _offset_costs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    costs = np.empty(n)
    for k in range(n):
        bk = np.roll(b, -k)
        r = a - bk - _nearest_lifts(a, bk)
        costs[k] = np.sum(r * r) / n
    return costs


def _check_same_n(A: ParticleConfig, B: ParticleConfig) -> None:
    if A.n != B.n:
        raise ValueError(f"particle counts differ: {A.n} vs {B.n}")


def match(A: ParticleConfig, B: ParticleConfig) -> Matching:
    """Cyclic-shift matching of sorted orders, smallest offset on ties."""
    _check_same_n(A, B)
    a, b = A.array, B.array
    costs = _offset_costs(a, b)
    k = int(np.argmin(costs))
    n = A.n
    assignment = tuple((i + k) % n for i in range(n))
    bk = b[list(assignment)]
    lifts = tuple(int(L) for L in _nearest_lifts(a, bk))
    return Matching(assignment, lifts, float(costs[k]))


def config_dist(A: ParticleConfig, B: ParticleConfig) -> float:
    _check_same_n(A, B)
    return math.sqrt(float(np.min(_offset_costs(A.array, B.array))))


def brute_force_cost(A: ParticleConfig, B: ParticleConfig) -> float:
    """Squared distance by enumerating all n! assignments (reference only)."""
    _check_same_n(A, B)
    a, b = A.points, B.points
    n = len(a)
    best = math.inf
    for perm in itertools.permutations(range(n)):
        s = sum(torus_dist(a[i], b[perm[i]]) ** 2 for i in range(n)) / n
        best = min(best, s)
    return best


def apply_symmetry(C: ParticleConfig, perm: Sequence[int], shifts: Sequence[int]) -> ParticleConfig:
    """Act on ``C`` by a relabeling and per-particle integer shifts.

    Integer shifts are the identity modulo 1, so they are validated and then
    dropped rather than added in floating point (``(x + k) % 1`` is not
    bit-exact for ``x`` with a full mantissa).
    """
    n = C.n
    perm = [int(p) for p in perm]
    if sorted(perm) != list(range(n)):
        raise ValueError(f"not a permutation of 0..{n - 1}: {perm}")
    if len(shifts) != n:
        raise ValueError("need one shift per particle")
    for s in shifts:
        if float(s) != int(s):
            raise ValueError(f"shift {s!r} is not an integer")
    return canonicalize([C.points[p] for p in perm])


def parse_config(text: str) -> ParticleConfig:
    """Read a configuration from a JSON array or a single CSV row."""
    text = text.strip()
    if text.startswith("["):
        values = json.loads(text)
    else:
        values = [float(tok) for tok in text.replace(",", " ").split()]
    return canonicalize(values)


def format_config(C: ParticleConfig) -> str:
    return json.dumps(list(C.points))


def batch_dist_sq(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Squared ``config_dist`` between rows of canonical arrays of shape (P, n)."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n = X.shape[-1]
    best = None
    for k in range(n):
        Yk = np.roll(Y, -k, axis=-1)
        r = X - Yk - _nearest_lifts(X, Yk)
        c = np.sum(r * r, axis=-1) / n
        best = c if best is None else np.minimum(best, c)
    return best
