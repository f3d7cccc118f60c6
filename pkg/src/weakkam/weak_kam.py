"""Critical value, weak KAM solution and calibrated chains on the grid.

``solve`` runs min-plus value iteration ``v <- T v`` from ``v = 0``.  The
per-sweep decrease ``v - T v`` becomes constant across states once the
iterate has converged modulo constants; that constant is ``lambda * dt``.
Iterates are renormalized to vanish at the reference state (all particles at
cell 0) after every sweep to keep their magnitude bounded.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .action import Curve, action, chain_curve
from .geometry import batch_dist_sq
from .lax_oleinik import GridStateSpace, GridValueFunction, LaxOleinik, StepPlan
from .potentials import Potential

logger = logging.getLogger(__name__)

# slack for floating-point rounding in re-checks of exact discrete identities
ROUNDING = 1e-12


@dataclass
class WeakKamSolution:
    u: GridValueFunction
    lam: float
    dt: float
    residual: float
    iterations: int
    converged: bool
    potential: Potential
    spread: float = math.nan
    history: list[tuple[int, float, float]] = field(default_factory=list, repr=False)

    @property
    def space(self) -> GridStateSpace:
        return self.u.space

    def operator(self, threads: int = 1) -> LaxOleinik:
        return LaxOleinik(self.space, self.potential, StepPlan(self.dt), threads=threads)

    def fixed_point_residual(self, threads: int = 1) -> float:
        """``sup |T u + lambda dt - u|``, recomputed from scratch."""
        Tu = self.operator(threads)(self.u.values)
        return float(np.max(np.abs(Tu + self.lam * self.dt - self.u.values)))

    def summary(self) -> dict:
        return {
            "lambda": self.lam,
            "dt": self.dt,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "spread": self.spread,
            "n": self.space.n,
            "m": self.space.m,
            "states": len(self.space),
        }


def solve(
    space: GridStateSpace,
    W: Potential,
    dt: float,
    tol: float = 1e-10,
    max_iters: int = 100_000,
    threads: int = 1,
    operator: LaxOleinik | None = None,
) -> WeakKamSolution:
    """Value iteration until the spread of ``v - T v`` drops below ``tol``.

    Returns the best iterate with ``converged=False`` if ``max_iters`` sweeps
    are not enough.  Raises ``FloatingPointError`` on non-finite iterates.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    op = operator or LaxOleinik(space, W, StepPlan(dt), threads=threads)
    ref = space.reference
    v = np.zeros(len(space))
    history = []
    spread = math.inf
    lam = math.nan
    it = 0
    converged = False
    while it < max_iters:
        w = op(v)
        if not np.all(np.isfinite(w)):
            raise FloatingPointError(f"non-finite value after {it + 1} sweeps")
        shift = v - w
        spread = float(np.max(shift) - np.min(shift))
        lam = float(np.mean(shift)) / dt
        it += 1
        history.append((it, lam, spread))
        v = w - w[ref]
        if spread < tol:
            converged = True
            break
    if not converged:
        logger.warning("value iteration stopped at max_iters=%d with spread %.3e", max_iters, spread)
    u = GridValueFunction(space, v)
    sol = WeakKamSolution(u, lam, dt, 0.0, it, converged, W, spread, history)
    sol.residual = sol.fixed_point_residual(threads)
    K0 = W.K0
    if not (-K0 - tol / dt - ROUNDING <= lam <= K0 + tol / dt + ROUNDING):
        raise RuntimeError(f"critical value {lam} outside [-K0, K0] = [{-K0}, {K0}]")
    return sol


def calibrated_curve(sol: WeakKamSolution, state: int, horizon: float) -> tuple[Curve, np.ndarray, list[int]]:
    """Backward chain of argmin predecessors ending at ``state`` at time 0.

    Returns the curve on ``[-horizon, 0]`` (oldest knot first), the defect of
    every backward step, and the visited state ids (``state`` first).
    """
    k = round(horizon / sol.dt)
    if k < 1 or not math.isclose(k * sol.dt, horizon, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"horizon {horizon} is not a positive multiple of dt={sol.dt}")
    op = sol.operator()
    u = sol.u.values
    ids = [int(state)]
    defects = np.empty(k)
    for j in range(k):
        cur = ids[-1]
        pred, _ = op.argmin(u, cur)
        step = op.step_cost(cur, pred)
        defects[j] = abs(u[cur] - u[pred] - step - sol.lam * sol.dt)
        ids.append(pred)
    chain = ids[::-1]
    times = -horizon + sol.dt * np.arange(k + 1)
    times[-1] = 0.0
    curve = chain_curve(times, [sol.space.config(i) for i in chain])
    return curve, defects, ids


@dataclass
class DominationReport:
    c: float
    curves_tested: int
    worst_violation: float
    lipschitz_estimate: float
    slack_bound: float
    statewise_excess: float
    worst_curve: Curve | None = field(default=None, repr=False)
    worst_states: tuple[int, int] | None = None

    @property
    def passed(self) -> bool:
        return self.worst_violation <= self.slack_bound

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "curves_tested": self.curves_tested,
            "worst_violation": self.worst_violation,
            "lipschitz_estimate": self.lipschitz_estimate,
            "slack_bound": self.slack_bound,
            "statewise_excess": self.statewise_excess,
            "passed": self.passed,
        }


def domination_slack(sol: WeakKamSolution) -> float:
    """Quadrature slack for the domination test: ``2 (dt + 1/m) K0``."""
    return 2.0 * (sol.dt + 1.0 / sol.space.m) * sol.potential.K0


def domination_violation(sol: WeakKamSolution, curve: Curve, start: int, end: int) -> float:
    """``u(end) - u(start) - action - c * duration``; positive means a violation."""
    u = sol.u.values
    return float(u[end] - u[start] - action(curve, sol.potential).total - sol.lam * curve.duration)


def random_grid_curve(space: GridStateSpace, rng: np.random.Generator, max_segments: int = 4,
                      max_duration: float = 2.0) -> tuple[Curve, list[int]]:
    """Piecewise-linear curve through uniformly drawn grid states (sometimes at rest)."""
    J = int(rng.integers(1, max_segments + 1))
    ids = [int(i) for i in rng.integers(0, len(space), size=J + 1)]
    if rng.random() < 0.25:
        ids = [ids[0]] * (J + 1)
    durations = rng.uniform(0.05, max_duration, size=J)
    times = np.concatenate([[0.0], np.cumsum(durations)])
    return chain_curve(times, [space.config(i) for i in ids]), ids


def _coarse_chain_curve(sol: WeakKamSolution, rng: np.random.Generator) -> tuple[Curve, list[int]]:
    # a backward argmin chain with knots thinned out: nearly calibrated, so
    # the domination inequality is close to tight along it
    steps = int(rng.integers(1, 201))
    stride = int(rng.integers(1, 11))
    state = int(rng.integers(0, len(sol.space)))
    _, _, ids = calibrated_curve(sol, state, steps * sol.dt)
    ids = ids[::-1]
    keep = sorted(set(range(0, steps + 1, stride)) | {steps})
    times = sol.dt * np.array(keep, dtype=float)
    return chain_curve(times, [sol.space.config(ids[j]) for j in keep]), [ids[0], ids[-1]]


def check_domination(sol: WeakKamSolution, samples: int = 100, seed: int = 0) -> DominationReport:
    """Test ``u(b) - u(a) <= action + lambda (b - a)`` on seeded random grid curves.

    About a third of the curves are thinned-out backward argmin chains, on
    which the inequality is nearly an equality; the rest join random states.

    Also reports the state-wise excess ``max(u - T u - lambda dt)``, the
    exact discrete form of the same inequality.
    """
    rng = np.random.default_rng(seed)
    worst = -math.inf
    worst_curve = None
    worst_states = None
    for _ in range(samples):
        if rng.random() < 0.35:
            curve, ids = _coarse_chain_curve(sol, rng)
        else:
            curve, ids = random_grid_curve(sol.space, rng)
        viol = domination_violation(sol, curve, ids[0], ids[-1])
        if viol > worst:
            worst, worst_curve, worst_states = viol, curve, (ids[0], ids[-1])
    op = sol.operator()
    excess = float(np.max(sol.u.values - op(sol.u.values) - sol.lam * sol.dt))
    return DominationReport(
        c=sol.lam,
        curves_tested=samples,
        worst_violation=worst,
        lipschitz_estimate=lipschitz_check(sol).empirical,
        slack_bound=domination_slack(sol),
        statewise_excess=excess,
        worst_curve=worst_curve,
        worst_states=worst_states,
    )


@dataclass
class LipschitzReport:
    empirical: float
    bound: float
    grid_slack: float
    implied_c: float

    @property
    def passed(self) -> bool:
        return self.empirical <= self.bound + self.grid_slack

    def to_dict(self) -> dict:
        return {
            "empirical": self.empirical,
            "bound": self.bound,
            "grid_slack": self.grid_slack,
            "implied_c": self.implied_c,
            "passed": self.passed,
        }


def lipschitz_check(sol: WeakKamSolution) -> LipschitzReport:
    """Largest ``|u(A) - u(B)| / dist(A, B)`` over neighboring grid states.

    The bound is ``1/2 + K0 + lambda``.  The grid slack ``1 / (2 m dt)`` is
    the Lipschitz ratio of the cheapest one-cell move in one step.
    """
    space = sol.space
    pairs = space.neighbors()
    u = sol.u.values
    if len(pairs):
        i, j = pairs[:, 0], pairs[:, 1]
        d = np.sqrt(batch_dist_sq(space.coords[i], space.coords[j]))
        K = float(np.max(np.abs(u[i] - u[j]) / d))
    else:
        K = 0.0
    K0 = sol.potential.K0
    return LipschitzReport(
        empirical=K,
        bound=0.5 + K0 + sol.lam,
        grid_slack=1.0 / (2.0 * space.m * sol.dt),
        implied_c=0.5 * K * K + K0,
    )
