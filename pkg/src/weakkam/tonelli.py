"""Fixed-endpoint action minimization and its dynamic-programming oracle.

``minimize_action`` searches for a minimizer of the discrete action among
curves from ``M`` to the orbit of ``N``.  Each admissible endpoint lift (a
particle assignment plus an integer winding per particle) is a separate
homotopy class.  Only finitely many classes can beat the straight line: a
curve with action below ``d(M,N)**2/(2T) + K0*T`` has
``int |dq/dt|^2 <= 2 (bound + K0 T)``, so its total displacement is at most
``sqrt(2 T (bound + K0 T))``.  Classes inside that budget are optimized in
order of displacement until the kinetic lower bound of the next one exceeds
the best value found.

Within a class the interior knots are moved by descent along the gradient
preconditioned with the kinetic-energy Hessian (a scaled discrete
Laplacian), with Armijo backtracking.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .action import ActionReport, Curve, action, chain_curve, segment_terms
from .geometry import ParticleConfig, config_dist, match
from .lax_oleinik import GridStateSpace, StateSpaceTooLarge
from .potentials import Potential

MAX_CLASSES = 20_000
# DP tables are S x S; refuse beyond this many entries
DP_TABLE_CAP = 4_000_000


def _endpoints(M: ParticleConfig, N: ParticleConfig):
    if M.n != N.n:
        raise ValueError(f"particle counts differ: {M.n} vs {N.n}")
    mt = match(M, N)
    b = N.array
    target = np.array([b[j] + L for j, L in zip(mt.assignment, mt.lifts)])
    return M.array, target


def line_curve(M: ParticleConfig, N: ParticleConfig, T: float, K: int) -> Curve:
    """Constant-speed curve along the optimal matching, in ``K`` equal segments."""
    if not T > 0:
        raise ValueError("T must be positive")
    if K < 1:
        raise ValueError("K must be a positive integer")
    a, target = _endpoints(M, N)
    s = np.linspace(0.0, 1.0, K + 1)[:, None]
    knots = (1.0 - s) * a[None, :] + s * target[None, :]
    knots[-1] = target
    return Curve(np.linspace(0.0, T, K + 1), knots)


def tonelli_upper_bound(M: ParticleConfig, N: ParticleConfig, T: float, W: Potential) -> float:
    return config_dist(M, N) ** 2 / (2.0 * T) + W.K0 * T


def winding_classes(M: ParticleConfig, N: ParticleConfig, T: float, W: Potential) -> list[np.ndarray]:
    """Lifted endpoint vectors whose displacement fits the a-priori budget.

    Sorted by displacement, so the nearest-lift line comes first.
    """
    a, b = M.array, N.array
    n = M.n
    budget = math.sqrt(2.0 * T * (tonelli_upper_bound(M, N, T, W) + W.K0 * T))
    reach = math.sqrt(n) * budget
    seen = set()
    found = []
    for perm in itertools.permutations(range(n)):
        bp = b[list(perm)]
        ranges = [range(math.ceil(a[i] - bp[i] - reach), math.floor(a[i] - bp[i] + reach) + 1) for i in range(n)]
        for w in itertools.product(*ranges):
            target = bp + np.array(w, dtype=float)
            key = tuple(target.tolist())
            if key in seen:
                continue
            disp = math.sqrt(float(np.sum((target - a) ** 2)) / n)
            if disp <= budget * (1 + 1e-12):
                seen.add(key)
                found.append((disp, key, target))
                if len(found) > MAX_CLASSES:
                    raise ValueError(f"more than {MAX_CLASSES} winding classes within the budget")
    found.sort(key=lambda item: (item[0], item[1]))
    return [t for _, _, t in found]


@dataclass
class _Objective:
    times: np.ndarray
    start: np.ndarray
    end: np.ndarray
    W: Potential

    def full(self, x: np.ndarray) -> np.ndarray:
        return np.vstack([self.start[None, :], x, self.end[None, :]])

    def value(self, x: np.ndarray) -> float:
        kin, pot, _ = segment_terms(self.times, self.full(x), self.W)
        return math.fsum(kin) - math.fsum(pot)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        q = self.full(x)
        n = q.shape[1]
        dt = np.diff(self.times)[:, None]
        vel = np.diff(q, axis=0) / dt / n
        gW = self.W.grad(0.5 * (q[:-1] + q[1:])) * dt
        return (vel[:-1] - vel[1:]) - 0.5 * (gW[:-1] + gW[1:])


def _kinetic_hessian_inverse(times: np.ndarray, n: int) -> np.ndarray:
    inv_dt = 1.0 / np.diff(times)
    K = inv_dt.size
    H = np.diag(inv_dt[:-1] + inv_dt[1:]) - np.diag(inv_dt[1:-1], 1) - np.diag(inv_dt[1:-1], -1)
    return np.linalg.inv(H / n) if K > 1 else np.zeros((0, 0))


@dataclass
class DescentResult:
    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool


def _descend(obj: _Objective, x0: np.ndarray, Hinv: np.ndarray, tol: float, max_iters: int) -> DescentResult:
    x = x0.copy()
    f = obj.value(x)
    g = obj.gradient(x)
    gn = float(np.linalg.norm(g))
    it = 0
    while gn > tol and it < max_iters:
        d = -Hinv @ g
        slope = float(np.sum(g * d))
        alpha = 1.0
        accepted = False
        for _ in range(60):
            xn = x + alpha * d
            fn = obj.value(xn)
            if fn <= f + 1e-4 * alpha * slope:
                accepted = True
                break
            # near the optimum the decrease drops below the rounding of f;
            # accept on a strictly smaller gradient instead
            if abs(fn - f) <= 4 * np.finfo(float).eps * max(1.0, abs(f)):
                gn_try = float(np.linalg.norm(obj.gradient(xn)))
                if gn_try < gn:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            break
        x, f = xn, fn
        g = obj.gradient(x)
        gn = float(np.linalg.norm(g))
        it += 1
    return DescentResult(x, f, gn, it, gn <= tol)


@dataclass
class MinimizeResult:
    curve: Curve
    report: ActionReport
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    endpoint: np.ndarray
    classes: int
    explored: int
    line_value: float
    upper_bound: float

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "endpoint_lift": [float(x) for x in self.endpoint],
            "winding_classes": self.classes,
            "classes_optimized": self.explored,
            "line_value": self.line_value,
            "upper_bound": self.upper_bound,
            "action": self.report.to_dict(),
        }


def minimize_action(
    M: ParticleConfig,
    N: ParticleConfig,
    T: float,
    W: Potential,
    K: int = 32,
    restarts: int = 4,
    tol: float = 1e-8,
    max_iters: int = 2000,
    seed: int = 0,
    threads: int = 1,
    perturbation: float = 0.1,
) -> MinimizeResult:
    """Best discrete minimizer over all admissible winding classes and restarts.

    Restart 0 of each class starts from the straight line; the others add a
    seeded random perturbation of size ``perturbation`` to the interior knots.
    Ties are broken by the knot array, lexicographically.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if K < 1:
        raise ValueError("K must be a positive integer")
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    times = np.linspace(0.0, T, K + 1)
    a = M.array
    classes = winding_classes(M, N, T, W)
    Hinv = _kinetic_hessian_inverse(times, M.n)
    s = np.linspace(0.0, 1.0, K + 1)[1:-1, None]
    bump = np.sin(np.pi * s)

    def run(task):
        ci, r = task
        end = classes[ci]
        obj = _Objective(times, a, end, W)
        x0 = (1.0 - s) * a[None, :] + s * end[None, :]
        if r > 0:
            rng = np.random.default_rng([seed, ci, r])
            x0 = x0 + perturbation * bump * rng.standard_normal(x0.shape)
        if K == 1:
            return ci, DescentResult(x0, obj.value(x0), 0.0, 0, True)
        return ci, _descend(obj, x0, Hinv, tol, max_iters)

    # classes come in order of displacement; a class whose action lower
    # bound disp**2/(2T) - K0 T already exceeds the incumbent is skipped
    results = []
    explored = 0
    incumbent = math.inf
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for ci, end in enumerate(classes):
            lower = float(np.sum((end - a) ** 2)) / M.n / (2.0 * T) - W.K0 * T
            if lower > incumbent + tol:
                break
            tasks = [(ci, r) for r in range(restarts)]
            batch = list(pool.map(run, tasks)) if pool else [run(t) for t in tasks]
            results.extend(batch)
            explored += 1
            incumbent = min(incumbent, min(res.value for _, res in batch))
    finally:
        if pool:
            pool.shutdown()

    def key(item):
        ci, res = item
        return (res.value, tuple(_Objective(times, a, classes[ci], W).full(res.x).ravel().tolist()))

    ci, best = min(results, key=key)
    end = classes[ci]
    curve = Curve(times, np.vstack([a[None, :], best.x, end[None, :]]))
    line = line_curve(M, N, T, K)
    return MinimizeResult(
        curve=curve,
        report=action(curve, W),
        value=best.value,
        grad_norm=best.grad_norm,
        iterations=best.iterations,
        converged=best.converged,
        endpoint=end,
        classes=len(classes),
        explored=explored,
        line_value=action(line, W).total,
        upper_bound=tonelli_upper_bound(M, N, T, W),
    )


def _midpoints(space: GridStateSpace) -> np.ndarray:
    """Midpoint (lifted) of the optimal matching between every pair of states."""
    S, n = len(space), space.n
    x = space.coords
    best_cost = np.full((S, S), np.inf)
    mid = np.zeros((S, S, n))
    for k in range(n):
        y = np.roll(x, -k, axis=1)
        diff = x[:, None, :] - y[None, :, :]
        lifts = np.floor(diff + 0.5)
        r = diff - lifts
        c = np.sum(r * r, axis=-1) / n
        better = c < best_cost
        best_cost = np.where(better, c, best_cost)
        mk = 0.5 * (x[:, None, :] + (y[None, :, :] + lifts))
        mid = np.where(better[..., None], mk, mid)
    return mid


def dp_minimize(
    M: ParticleConfig,
    N: ParticleConfig,
    T: float,
    W: Potential,
    m: int,
    K: int,
) -> tuple[Curve, float]:
    """Exact minimum of the discrete action over grid-knot paths with ``K`` steps.

    Endpoints snap to the nearest grid state.  Each step moves along the
    optimal matching of consecutive states, with the same quadrature as
    ``action``.  Ties go to the smallest state id.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if K < 1:
        raise ValueError("K must be a positive integer")
    space = GridStateSpace(M.n, m)
    S = len(space)
    if S * S > DP_TABLE_CAP:
        raise StateSpaceTooLarge(f"{S} states need an {S}x{S} step table ({S * S * 8 / 2**20:.0f} MiB)")
    dt = T / K
    d2 = space.dist_sq_rows(np.arange(S))
    # step cost from state i to state j
    cost = d2 / (2.0 * dt) - dt * np.asarray(W(_midpoints(space)), dtype=float)
    start, goal = space.snap(M), space.snap(N)
    V = np.full(S, np.inf)
    V[start] = 0.0
    back = np.empty((K, S), dtype=np.int64)
    for j in range(K):
        cand = V[:, None] + cost
        back[j] = np.argmin(cand, axis=0)
        V = cand[back[j], np.arange(S)]
    path = [goal]
    for j in range(K - 1, -1, -1):
        path.append(int(back[j, path[-1]]))
    path.reverse()
    curve = chain_curve(np.linspace(0.0, T, K + 1), [space.config(i) for i in path])
    return curve, float(V[goal])
