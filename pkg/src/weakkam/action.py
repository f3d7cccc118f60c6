"""Discrete curves, the mechanical Lagrangian and the action functional.

A curve is piecewise linear in lifted coordinates between time-stamped knots.
Kinetic energy is integrated exactly on each segment; the potential is
integrated by the midpoint rule, which keeps the quadrature symmetric under
time reversal.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import LiftedConfig, ParticleConfig, batch_dist_sq, match
from .potentials import Potential


@dataclass
class Curve:
    """Knots ``q[j]`` (lifted reals, shape (K+1, n)) at strictly increasing ``times``."""

    times: np.ndarray
    knots: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.knots = np.atleast_2d(np.asarray(self.knots, dtype=float))
        if self.times.ndim != 1 or self.times.size < 1:
            raise ValueError("times must be a non-empty 1-D sequence")
        if self.knots.shape[0] != self.times.size:
            raise ValueError(f"{self.times.size} times but {self.knots.shape[0]} knots")
        if not np.all(np.isfinite(self.knots)) or not np.all(np.isfinite(self.times)):
            raise ValueError("curve contains non-finite values")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("degenerate segment: times must be strictly increasing")

    @property
    def n(self) -> int:
        return self.knots.shape[1]

    @property
    def segments(self) -> int:
        return self.times.size - 1

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def knot(self, j: int) -> LiftedConfig:
        return LiftedConfig(tuple(float(x) for x in self.knots[j]))

    def bases(self) -> np.ndarray:
        """Canonical (sorted, reduced) coordinates of every knot."""
        r = np.mod(self.knots, 1.0)
        r[r >= 1.0] = 0.0
        return np.sort(r, axis=1)

    def reversed(self) -> "Curve":
        t = self.times[0] + self.times[-1] - self.times[::-1]
        return Curve(t, self.knots[::-1].copy())

    def lift_continuity_gap(self) -> float:
        """Largest excess of a segment's lifted displacement over the matching distance.

        Zero when every consecutive pair of knots moves along the nearest-lift
        optimal matching of their bases.
        """
        if self.segments == 0:
            return 0.0
        disp = np.sum(np.diff(self.knots, axis=0) ** 2, axis=1) / self.n
        b = self.bases()
        return float(np.max(disp - batch_dist_sq(b[:-1], b[1:])))

    def to_csv(self, header: list[str] | None = None) -> str:
        buf = io.StringIO()
        for line in header or ():
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(self.n)])
        for t, row in zip(self.times, self.knots):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Curve":
        rows = [r for r in csv.reader(line for line in text.splitlines() if line and not line.startswith("#"))]
        data = np.array([[float(x) for x in r] for r in rows[1:]])
        return cls(data[:, 0], data[:, 1:])


def chain_curve(times, states) -> Curve:
    """Lifted curve through canonical states, each step along the optimal matching.

    ``states`` is a sequence of ParticleConfigs; the first knot is the first
    state itself, and each next knot moves particle-by-particle to the matched
    nearest lift of the next state.
    """
    states = list(states)
    q = np.empty((len(states), states[0].n))
    q[0] = states[0].array
    for j in range(len(states) - 1):
        cur = q[j]
        red = np.mod(cur, 1.0)
        red[red >= 1.0] = 0.0
        order = np.argsort(red, kind="stable")
        m = match(ParticleConfig(tuple(float(x) for x in red[order])), states[j + 1])
        b = states[j + 1].array
        nxt = np.empty_like(cur)
        for i, p in enumerate(order):
            nxt[p] = cur[p] + (b[m.assignment[i]] + m.lifts[i] - red[p])
        q[j + 1] = nxt
    return Curve(np.asarray(times, dtype=float), q)


@dataclass
class ActionReport:
    kinetic: float
    potential_integral: float
    total: float
    energy_samples: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kinetic": self.kinetic,
            "potential_integral": self.potential_integral,
            "total": self.total,
            "energy_samples": list(self.energy_samples),
        }


def lagrangian(C: ParticleConfig, V, W: Potential) -> float:
    """``L = (1/2)(1/n) sum v_i^2 - W(C)``."""
    v = np.asarray(V, dtype=float)
    if v.shape != (C.n,):
        raise ValueError(f"velocity has shape {v.shape}, expected ({C.n},)")
    return 0.5 * float(np.sum(v * v)) / C.n - float(W(C.array))


def segment_terms(times: np.ndarray, knots: np.ndarray, W: Potential):
    """Per-segment kinetic energy, potential integral and energy ``|v|^2/2 + W``."""
    dt = np.diff(times)
    dq = np.diff(knots, axis=0)
    n = knots.shape[1]
    speed_sq = np.sum(dq * dq, axis=1) / n / (dt * dt)
    w_mid = np.asarray(W(0.5 * (knots[:-1] + knots[1:])), dtype=float).reshape(-1)
    kin = 0.5 * speed_sq * dt
    pot = dt * w_mid
    return kin, pot, 0.5 * speed_sq + w_mid


def action(curve: Curve, W: Potential) -> ActionReport:
    if curve.segments == 0:
        return ActionReport(0.0, 0.0, 0.0, [])
    kin, pot, energy = segment_terms(curve.times, curve.knots, W)
    # fsum: totals independent of segment order, so time reversal is exact
    kinetic = math.fsum(kin)
    potential = math.fsum(pot)
    return ActionReport(kinetic, potential, kinetic - potential, [float(e) for e in energy])


@dataclass
class HolderReport:
    K1: float
    worst_slack: float
    violations: int
    pairs_checked: int


# absolute allowance for rounding in the comparison below; the inequality
# itself is exact for piecewise-linear curves (Cauchy-Schwarz)
HOLDER_ROUNDING = 1e-12


def holder_check(curve: Curve) -> HolderReport:
    """Check ``dist(q(s), q(t)) <= K1 sqrt(t - s)`` over all knot pairs.

    ``K1**2`` is the discrete ``int |dq/dt|^2 dt`` of the curve.
    """
    if curve.segments == 0:
        return HolderReport(0.0, 0.0, 0, 0)
    dt = np.diff(curve.times)
    dq = np.diff(curve.knots, axis=0)
    K1 = math.sqrt(float(np.sum(np.sum(dq * dq, axis=1) / curve.n / dt)))
    b = curve.bases()
    i, j = np.triu_indices(curve.times.size, k=1)
    dist = np.sqrt(batch_dist_sq(b[i], b[j]))
    slack = K1 * np.sqrt(curve.times[j] - curve.times[i]) - dist
    return HolderReport(
        K1=K1,
        worst_slack=float(np.min(slack)),
        violations=int(np.sum(slack < -HOLDER_ROUNDING)),
        pairs_checked=int(i.size),
    )


def constant_curve(C: ParticleConfig, T: float, K: int = 1) -> Curve:
    times = np.linspace(0.0, T, K + 1)
    return Curve(times, np.tile(C.array, (K + 1, 1)))

