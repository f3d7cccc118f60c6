"""Self-checks run by ``weakkam verify``.

Each check returns a ``Check`` with a pass flag and the numbers behind it.
Sizes come from the ``verify`` section of the run config.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .action import holder_check
from .config import RunConfig
from .geometry import ParticleConfig, config_dist
from .lax_oleinik import GridStateSpace, GridValueFunction, LaxOleinik, StepPlan, apply_T_steps, build_space
from .oracles import brute_force_dist, enumerate_paths
from .potentials import Potential
from .tonelli import minimize_action, tonelli_upper_bound
from .weak_kam import ROUNDING, calibrated_curve, check_domination, lipschitz_check, solve


@dataclass
class Check:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "details": self.details}


def random_config(rng: np.random.Generator, n: int, grid: int | None = None) -> ParticleConfig:
    x = rng.random(n)
    if grid:
        x = np.floor(x * grid) / grid
    return ParticleConfig(tuple(sorted(float(v) for v in x)))


def operator_laws(space: GridStateSpace, W: Potential, dt: float, pairs: int, rng: np.random.Generator) -> Check:
    """Monotonicity, constant commutation, non-expansiveness, semigroup, relabeling."""
    op = LaxOleinik(space, W, StepPlan(dt))
    S = len(space)
    mono = commute = expand = 0.0
    for _ in range(pairs):
        u = rng.uniform(-1.0, 1.0, S)
        w = rng.uniform(-1.0, 1.0, S)
        Tu, Tw = op(u), op(w)
        # u <= max(u, w) so T u <= T max(u, w)
        Tmax = op(np.maximum(u, w))
        mono = max(mono, float(np.max(Tu - Tmax)))
        k = float(rng.uniform(-10.0, 10.0))
        commute = max(commute, float(np.max(np.abs(op(u + k) - (Tu + k)))))
        expand = max(expand, float(np.max(np.abs(Tu - Tw)) - np.max(np.abs(u - w))))

    semigroup = True
    for _ in range(min(pairs, 20)):
        v = GridValueFunction(space, rng.uniform(-1.0, 1.0, S))
        a, b = (int(x) for x in rng.integers(1, 4, size=2))
        plan = StepPlan(dt)
        lhs = apply_T_steps(apply_T_steps(v, W, plan, b), W, plan, a).values
        rhs = apply_T_steps(v, W, plan, a + b).values
        semigroup &= bool(np.array_equal(lhs, rhs))

    perm = rng.permutation(S)
    other = space.relabeled(perm)
    v = rng.uniform(-1.0, 1.0, S)
    relabel = bool(np.array_equal(LaxOleinik(other, W, StepPlan(dt))(v[perm]), op(v)[perm]))

    passed = mono <= ROUNDING and commute <= ROUNDING and expand <= ROUNDING and semigroup and relabel
    return Check(
        f"operator_laws_n{space.n}_m{space.m}",
        passed,
        {
            "pairs": pairs,
            "monotonicity_excess": mono,
            "constant_commutation_error": commute,
            "expansion_excess": expand,
            "semigroup_bit_exact": semigroup,
            "relabeling_bit_exact": relabel,
        },
    )


def matching_oracle(pairs: int, max_n: int, rng: np.random.Generator) -> Check:
    worst = 0.0
    for n in range(2, max_n + 1):
        for i in range(pairs):
            # every other pair on a coarse grid, where ties between matchings are common
            grid = 8 if i % 2 else None
            A, B = random_config(rng, n, grid), random_config(rng, n, grid)
            worst = max(worst, abs(config_dist(A, B) - brute_force_dist(A, B)))
    return Check("matching_oracle", worst <= ROUNDING, {"pairs_per_n": pairs, "max_n": max_n, "worst_error": worst})


def path_oracle(W: Potential, dt: float, ms: list[int], k_max: int, rng: np.random.Generator) -> Check:
    mismatches = []
    for m in ms:
        space = build_space(1, m)
        for k in range(1, k_max + 1):
            if m ** (k + 1) > 5_000_000:
                continue
            v = rng.uniform(-1.0, 1.0, len(space))
            got = apply_T_steps(GridValueFunction(space, v), W, StepPlan(dt), k).values
            if not np.array_equal(got, enumerate_paths(space, v, W, dt, k)):
                mismatches.append([m, k])
    return Check("path_oracle", not mismatches, {"grids": ms, "max_steps": k_max, "mismatches": mismatches})


def weak_kam_bundle(cfg: RunConfig, threads: int) -> list[Check]:
    W = cfg.build_potential()
    space = build_space(cfg.n, cfg.m)
    sol = solve(space, W, cfg.dt, cfg.tol, cfg.max_iters, threads=threads)
    v = cfg.verify
    checks = [Check("solve_converged", sol.converged, sol.summary())]

    recheck = sol.fixed_point_residual(threads)
    checks.append(Check("fixed_point_recheck", recheck <= sol.residual, {"recheck": recheck, "residual": sol.residual}))

    rng = np.random.default_rng([cfg.seed, 1])
    starts = sorted({space.reference, int(np.argmax(sol.potential(space.coords)))}
                    | {int(i) for i in rng.integers(0, len(space), size=3)})
    worst = 0.0
    for s in starts:
        _, defects, _ = calibrated_curve(sol, s, v.horizon)
        worst = max(worst, float(np.max(defects)))
    checks.append(Check(
        "calibration_defects",
        worst <= sol.residual + ROUNDING,
        {"states": starts, "horizon": v.horizon, "worst_defect": worst, "residual": sol.residual},
    ))

    dom = check_domination(sol, v.samples, cfg.seed)
    checks.append(Check("domination", dom.passed and dom.statewise_excess <= ROUNDING, dom.to_dict()))

    lip = lipschitz_check(sol)
    checks.append(Check("lipschitz", lip.passed, lip.to_dict()))

    shifted = solve(space, W.shifted(v.shift), cfg.dt, cfg.tol, cfg.max_iters, threads=threads)
    dlam = abs((shifted.lam - v.shift) - sol.lam)
    checks.append(Check("shift_invariance", dlam <= 1e-9, {"shift": v.shift, "lambda_difference": dlam}))
    return checks


def tonelli_instances(W: Potential, count: int, rng: np.random.Generator, threads: int) -> Check:
    worst_ub = worst_line = -math.inf
    violations = 0
    unconverged = 0
    for _ in range(count):
        M, N = random_config(rng, 1), random_config(rng, 1)
        T = float(rng.uniform(0.5, 2.0))
        res = minimize_action(M, N, T, W, threads=threads, seed=int(rng.integers(2**32)))
        worst_ub = max(worst_ub, res.value - tonelli_upper_bound(M, N, T, W))
        worst_line = max(worst_line, res.value - res.line_value)
        violations += holder_check(res.curve).violations
        unconverged += not res.converged
    passed = count == 0 or (worst_ub <= 1e-9 and worst_line <= 1e-9 and violations == 0 and unconverged == 0)
    return Check("tonelli", passed, {
        "instances": count,
        "worst_excess_over_upper_bound": worst_ub if count else 0.0,
        "worst_excess_over_line": worst_line if count else 0.0,
        "holder_violations": violations,
        "unconverged": unconverged,
    })


def determinism(cfg: RunConfig, flip: bool = False) -> Check:
    """Thread count must not change values or argmin choices.

    ``flip`` injects a fault (threaded runs break ties the other way) that
    this check has to catch.

    Uses a tie-rich table: two equally deep pits placed symmetrically about
    cell 0 give every state on the symmetry axis two equally good
    predecessors.
    """
    # compared against one thread regardless of --threads, so the report does not depend on it
    many = max(2, os.cpu_count() or 1)
    W = cfg.build_potential()
    space = build_space(1, 16)
    v = np.zeros(len(space))
    v[4] = v[12] = -10.0
    plan = StepPlan(cfg.dt)
    one = LaxOleinik(space, W, plan, threads=1)
    par = LaxOleinik(space, W, plan, threads=many, flip_tiebreak_when_threaded=flip)
    p1, t1 = one.argmin_all(v)
    pm, tm = par.argmin_all(v)
    tie_ok = bool(np.array_equal(p1, pm) and np.array_equal(t1, tm))

    small = build_space(cfg.n, min(cfg.m, 32))
    s1 = solve(small, W, cfg.dt, cfg.tol, cfg.max_iters, operator=LaxOleinik(small, W, plan, threads=1))
    sm = solve(small, W, cfg.dt, cfg.tol, cfg.max_iters,
               operator=LaxOleinik(small, W, plan, threads=many, flip_tiebreak_when_threaded=flip))
    solve_ok = s1.lam == sm.lam and np.array_equal(s1.u.values, sm.u.values)
    q1, _ = LaxOleinik(small, W, plan, threads=1).argmin_all(s1.u.values)
    qm, _ = LaxOleinik(small, W, plan, threads=many, flip_tiebreak_when_threaded=flip).argmin_all(sm.u.values)
    chain_ok = bool(np.array_equal(q1, qm))
    return Check("determinism", tie_ok and solve_ok and chain_ok, {
        "threads_compared": [1, many],
        "tie_instance_identical": tie_ok,
        "solution_identical": bool(solve_ok),
        "argmin_table_identical": chain_ok,
    })


def run_all(cfg: RunConfig, threads: int = 1, flip: bool = False) -> list[Check]:
    v = cfg.verify
    W = cfg.build_potential()
    rng = np.random.default_rng(cfg.seed)
    checks = [
        operator_laws(build_space(1, v.law_m1), W, cfg.dt, v.law_pairs, rng),
        operator_laws(build_space(2, v.law_m2), W, cfg.dt, v.law_pairs, rng),
        matching_oracle(v.matching_pairs, v.matching_max_n, rng),
        path_oracle(W, cfg.dt, v.path_m, v.path_k, rng),
    ]
    checks.extend(weak_kam_bundle(cfg, threads))
    checks.append(tonelli_instances(W, v.tonelli_instances, rng, threads))
    checks.append(determinism(cfg, flip))
    return checks
