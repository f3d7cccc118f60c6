"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import contextlib
import io
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from weakkam.action import holder_check
from weakkam.cli import main
from weakkam.geometry import canonicalize, config_dist
from weakkam.lax_oleinik import GridValueFunction, LaxOleinik, StepPlan, apply_T_steps, build_space
from weakkam.oracles import brute_force_dist, enumerate_paths, pendulum_profile
from weakkam.potentials import Potential
from weakkam.tonelli import dp_minimize, minimize_action, tonelli_upper_bound
from weakkam.weak_kam import ROUNDING, calibrated_curve, check_domination, lipschitz_check, solve

PENDULUM = Potential.cosine()


def _line(ok: bool, label: str, detail: str, seconds: float) -> str:
    return f"{'PASS' if ok else 'FAIL'}  {label}: {detail} [{seconds:.1f} s]"


def criterion_1():
    """Operator laws on two spaces, 1000 value-function pairs each."""
    rng = np.random.default_rng(101)
    dt = 0.01
    worst = {"mono": -math.inf, "const": 0.0, "expand": -math.inf}
    semigroup = True
    for n, m in ((1, 64), (2, 16)):
        space = build_space(n, m)
        S = len(space)
        op = LaxOleinik(space, PENDULUM, StepPlan(dt))
        for _ in range(1000):
            u = rng.uniform(-1, 1, S)
            v = u + np.abs(rng.normal(size=S))
            z = rng.uniform(-1, 1, S)
            Tu = op(u)
            worst["mono"] = max(worst["mono"], float(np.max(Tu - op(v))))
            k = float(rng.uniform(-100, 100))
            worst["const"] = max(worst["const"], float(np.max(np.abs(op(u + k) - (Tu + k)))))
            worst["expand"] = max(worst["expand"], float(np.max(np.abs(Tu - op(z))) - np.max(np.abs(u - z))))
        plan = StepPlan(dt)
        for _ in range(50):
            w = GridValueFunction(space, rng.uniform(-1, 1, S))
            a, b = (int(x) for x in rng.integers(1, 6, 2))
            lhs = apply_T_steps(apply_T_steps(w, PENDULUM, plan, b), PENDULUM, plan, a)
            semigroup &= bool(np.array_equal(lhs.values, apply_T_steps(w, PENDULUM, plan, a + b).values))
    ok = worst["mono"] <= 0.0 and worst["const"] <= 1e-12 and worst["expand"] <= 1e-12 and semigroup
    detail = (f"monotone excess {worst['mono']:.1e}, constant error {worst['const']:.1e}, "
              f"expansion {worst['expand']:.1e}, semigroup bit-exact {semigroup}")
    return ok, detail, 30.0


def criterion_2():
    """Matching distance against exhaustive permutations, 500 pairs per n in 2..6."""
    rng = np.random.default_rng(202)
    worst = 0.0
    for n in range(2, 7):
        for i in range(500):
            if i % 4 == 0:
                # coarse-grid pairs produce ties between matchings
                A = canonicalize(np.floor(rng.random(n) * 8) / 8)
                B = canonicalize(np.floor(rng.random(n) * 8) / 8)
            else:
                A, B = canonicalize(rng.random(n)), canonicalize(rng.random(n))
            worst = max(worst, abs(config_dist(A, B) - brute_force_dist(A, B)))
    return worst <= 1e-12, f"worst |dist - brute force| = {worst:.1e} over 2500 pairs", 60.0


def criterion_3():
    """Lax-Oleinik steps against exhaustive path minimization, n=1, m <= 16, k <= 4."""
    rng = np.random.default_rng(303)
    cases = mismatches = 0
    for W in (PENDULUM, Potential.zero()):
        for m in range(2, 17):
            space = build_space(1, m)
            for k in range(1, 5):
                for dt in (0.01, 0.1):
                    v = rng.uniform(-1, 1, m)
                    got = apply_T_steps(GridValueFunction(space, v), W, StepPlan(dt), k).values
                    cases += 1
                    mismatches += not np.array_equal(got, enumerate_paths(space, v, W, dt, k))
    return mismatches == 0, f"{cases - mismatches}/{cases} cases bit-identical", 60.0


def criterion_4():
    """Zero potential: lambda = 0, constant u, constant zero-defect chains."""
    worst_lam = worst_spread = worst_defect = 0.0
    moving = 0
    for n, m in ((1, 64), (2, 16), (3, 8)):
        sol = solve(build_space(n, m), Potential.zero(), 0.05)
        worst_lam = max(worst_lam, abs(sol.lam))
        worst_spread = max(worst_spread, float(np.ptp(sol.u.values)))
        for state in range(0, len(sol.space), max(1, len(sol.space) // 7)):
            curve, defects, ids = calibrated_curve(sol, state, 1.0)
            worst_defect = max(worst_defect, float(np.max(defects)))
            moving += len(set(ids)) != 1 or float(np.max(np.ptp(curve.knots, axis=0))) != 0.0
    ok = worst_lam <= 1e-12 and worst_spread == 0.0 and worst_defect == 0.0 and moving == 0
    return ok, f"|lambda| {worst_lam:.1e}, u spread {worst_spread:.1e}, defect {worst_defect:.1e}, moving chains {moving}", None


def criterion_5():
    """Pendulum: lambda and u against the analytic solution."""
    sol = solve(build_space(1, 256), PENDULUM, 0.01)
    err = float(np.max(np.abs(sol.u.values - pendulum_profile(sol.space.coords[:, 0]))))
    ok = sol.converged and abs(sol.lam - 1.0) <= 0.03 and err <= 0.05
    return ok, f"lambda = {sol.lam:.12f}, sup |u - oracle| = {err:.4f}", 120.0


def criterion_6():
    """Two particles, separable cosine potential, m=48."""
    sol = solve(build_space(2, 48), PENDULUM, 0.01)
    ok = sol.converged and abs(sol.lam - 1.0) <= 0.05
    return ok, f"lambda = {sol.lam:.12f} after {sol.iterations} sweeps", 300.0


def criterion_7():
    """Tonelli minimizer: bounds, Hoelder check and the grid dynamic program."""
    rng = np.random.default_rng(7)
    worst_ub = worst_line = worst_rel = -math.inf
    violations = unconverged = 0
    for _ in range(50):
        # endpoints on the oracle's grid so snapping does not move them
        M = canonicalize([int(rng.integers(32)) / 32])
        N = canonicalize([int(rng.integers(32)) / 32])
        T = float(rng.uniform(1.0, 2.0))
        res = minimize_action(M, N, T, PENDULUM)
        worst_ub = max(worst_ub, res.value - tonelli_upper_bound(M, N, T, PENDULUM))
        worst_line = max(worst_line, res.value - res.line_value)
        violations += holder_check(res.curve).violations
        unconverged += not res.converged
        # the oracle works with K=8 segments, so compare at K=8
        coarse = minimize_action(M, N, T, PENDULUM, K=8)
        _, dp = dp_minimize(M, N, T, PENDULUM, 32, 8)
        worst_rel = max(worst_rel, abs(coarse.value - dp) / abs(dp))
    ok = worst_ub <= 1e-9 and worst_line <= 1e-9 and violations == 0 and unconverged == 0 and worst_rel <= 0.05
    detail = (f"max(value - bound) {worst_ub:.3f}, max(value - line) {worst_line:.1e}, "
              f"Hoelder violations {violations}, worst DP gap {100 * worst_rel:.2f}%")
    return ok, detail, 180.0


def criterion_8():
    """Verification bundle on the solved pendulum."""
    space = build_space(1, 256)
    sol = solve(space, PENDULUM, 0.01)
    recheck = sol.fixed_point_residual()
    rng = np.random.default_rng(808)
    states = sorted({0, 64, 128, 192} | {int(i) for i in rng.integers(0, 256, 12)})
    worst_defect = max(float(np.max(calibrated_curve(sol, s, 10.0)[1])) for s in states)
    dom = check_domination(sol, samples=100, seed=0)
    lip = lipschitz_check(sol)
    shifted = solve(space, PENDULUM.shifted(0.37), 0.01)
    dlam = abs(shifted.lam - 0.37 - sol.lam)
    ok = (recheck <= sol.residual and worst_defect <= sol.residual + ROUNDING and dom.passed
          and dom.statewise_excess <= ROUNDING and lip.passed and dlam <= 1e-9)
    detail = (f"recheck {recheck:.1e} <= residual {sol.residual:.1e}; defect {worst_defect:.1e}; "
              f"domination {dom.worst_violation:.4f} <= {dom.slack_bound:.4f}; "
              f"Lipschitz {lip.empirical:.3f} <= {lip.bound + lip.grid_slack:.3f}; shift {dlam:.1e}")
    return ok, detail, None


def criterion_9(workdir: Path):
    """CLI outputs with --threads 1 and --threads max are byte-identical."""
    with contextlib.redirect_stdout(io.StringIO()):
        return _cli_runs(workdir)


def _cli_runs(workdir: Path):
    many = str(max(2, os.cpu_count() or 1))
    sol_dir = workdir / "shared_solution"
    assert main(["solve", "--out", str(sol_dir)]) == 0
    verify_small = ["--verify.law_pairs", "100", "--verify.matching_pairs", "50", "--verify.samples", "100",
                    "--verify.tonelli_instances", "3"]
    runs = {}
    for t in ("1", many):
        out = workdir / f"threads_{t}"
        codes = [
            main(["solve", "--threads", t, "--out", str(out / "solve")]),
            main(["solve", "--n", "2", "--m", "48", "--threads", t, "--out", str(out / "solve2")]),
            main(["minimize", "--minimize.start", "[0.125]", "--minimize.end", "[0.75]", "--minimize.oracle",
                  "true", "--threads", t, "--out", str(out / "minimize")]),
            main(["calibrate", "--calibrate.solution", str(sol_dir), "--calibrate.state", "[0.3]",
                  "--threads", t, "--out", str(out / "calibrate")]),
            main(["verify", *verify_small, "--threads", t, "--out", str(out / "verify")]),
        ]
        runs[t] = out
        if any(codes):
            return False, f"nonzero exit codes {codes} with --threads {t}", None
    files = sorted(p.relative_to(runs["1"]) for p in runs["1"].rglob("*") if p.is_file())
    differ = [str(f) for f in files if (runs["1"] / f).read_bytes() != (runs[many] / f).read_bytes()]
    return not differ, f"{len(files) - len(differ)}/{len(files)} files identical (threads 1 vs {many})", None


CRITERIA = {
    1: ("operator laws", criterion_1),
    2: ("matching oracle", criterion_2),
    3: ("path oracle", criterion_3),
    4: ("zero potential", criterion_4),
    5: ("pendulum ground truth", criterion_5),
    6: ("two-particle separable", criterion_6),
    7: ("Tonelli consistency", criterion_7),
    8: ("weak KAM bundle", criterion_8),
    9: ("determinism", criterion_9),
}


def run(number: int, workdir: Path | None = None) -> tuple[bool, str]:
    label, fn = CRITERIA[number]
    start = time.perf_counter()
    ok, detail, limit = fn(workdir) if number == 9 else fn()
    seconds = time.perf_counter() - start
    if limit is not None and seconds > limit:
        ok = False
        detail += f"; over the {limit:.0f} s budget"
    return ok, _line(ok, f"criterion {number} ({label})", detail, seconds)


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys, tmp_path):
    ok, line = run(number, tmp_path)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    import tempfile

    results = []
    with tempfile.TemporaryDirectory() as tmp:
        for number in sorted(CRITERIA):
            ok, line = run(number, Path(tmp))
            print(line, flush=True)
            results.append(ok)
    sys.exit(0 if all(results) else 1)
