"""``weakkam`` command line: solve, minimize, calibrate, verify.

Exit codes: 0 success, 1 configuration or input error (the message names the
field), 2 the computation finished but is flagged (no convergence, failed
defect check, failed verification).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import outputs
from .config import ConfigError, RunConfig, apply_overrides, defaults_yaml, leaf_fields, load_file, validate
from .geometry import ParticleConfig, canonicalize, parse_config
from .lax_oleinik import GridValueFunction, StateSpaceTooLarge, build_space
from .potentials import Potential
from .tonelli import dp_minimize, minimize_action
from .weak_kam import ROUNDING, WeakKamSolution, calibrated_curve, solve

logger = logging.getLogger("weakkam")

OK, INPUT_ERROR, FLAGGED = 0, 1, 2


class InputError(ValueError):
    pass


def _config_value(value, field: str, n: int) -> ParticleConfig:
    """A configuration given inline as a list or as a path to a JSON/CSV file."""
    try:
        if isinstance(value, str):
            text = Path(value).read_text()
            lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
            if not lines:
                raise ValueError(f"{value} is empty")
            # a CSV file may carry a header row
            row = lines[-1] if not text.lstrip().startswith("[") else text
            C = parse_config(row)
        else:
            C = canonicalize(value)
    except OSError as exc:
        raise InputError(f"{field}: cannot read {value}: {exc.strerror}") from None
    except (ValueError, TypeError) as exc:
        raise InputError(f"{field}: {exc}") from None
    if C.n != n:
        raise InputError(f"{field}: expected {n} coordinates, got {C.n}")
    return C


def _space(cfg: RunConfig):
    try:
        return build_space(cfg.n, cfg.m)
    except StateSpaceTooLarge as exc:
        raise InputError(f"m: {exc}") from None


def cmd_solve(cfg: RunConfig, out: Path, threads: int) -> int:
    W = cfg.build_potential()
    space = _space(cfg)
    try:
        sol = solve(space, W, cfg.dt, cfg.tol, cfg.max_iters, threads=threads)
    except (FloatingPointError, RuntimeError) as exc:
        print(f"flagged: {exc}", file=sys.stderr)
        return FLAGGED
    echo = cfg.echo()
    blob = sol.u.to_binary()
    (out / "values.bin").write_bytes(blob)
    outputs.write_csv(out / "values.csv", sol.u.to_csv(), echo)
    rows = ["iteration,lambda,spread"] + [f"{i},{lam!r},{spr!r}" for i, lam, spr in sol.history]
    outputs.write_csv(out / "convergence.csv", "\n".join(rows) + "\n", echo)
    payload = sol.summary()
    payload.update({
        "K0": W.K0,
        "reference_state": space.reference,
        "values_bin_sha256": outputs.sha256(blob),
    })
    outputs.write_json(out / "solution.json", payload, echo)
    print(f"lambda = {sol.lam!r}  residual = {sol.residual:.3e}  iterations = {sol.iterations}")
    if not sol.converged:
        print(f"flagged: no convergence within max_iters={cfg.max_iters}", file=sys.stderr)
        return FLAGGED
    return OK


def cmd_minimize(cfg: RunConfig, out: Path, threads: int) -> int:
    mc = cfg.minimize
    if mc.start is None:
        raise InputError("minimize.start: required")
    if mc.end is None:
        raise InputError("minimize.end: required")
    M = _config_value(mc.start, "minimize.start", cfg.n)
    N = _config_value(mc.end, "minimize.end", cfg.n)
    W = cfg.build_potential()
    try:
        res = minimize_action(M, N, mc.T, W, mc.K, mc.restarts, mc.tol, mc.max_iters, seed=cfg.seed, threads=threads)
    except ValueError as exc:
        raise InputError(f"minimize: {exc}") from None
    echo = cfg.echo()
    report = res.to_dict()
    if mc.oracle:
        try:
            _, dp_value = dp_minimize(M, N, mc.T, W, mc.oracle_m, mc.oracle_K)
        except StateSpaceTooLarge as exc:
            raise InputError(f"minimize.oracle_m: {exc}") from None
        # compare like with like: the continuous minimizer at the oracle's K
        coarse = minimize_action(M, N, mc.T, W, mc.oracle_K, mc.restarts, mc.tol, mc.max_iters,
                                 seed=cfg.seed, threads=threads)
        gap = coarse.value - dp_value
        report["oracle"] = {
            "m": mc.oracle_m,
            "K": mc.oracle_K,
            "dp_value": dp_value,
            "continuous_value_at_K": coarse.value,
            "gap": gap,
            "relative_gap": abs(gap) / max(abs(dp_value), 1e-12),
        }
    outputs.write_csv(out / "curve.csv", res.curve.to_csv(), echo)
    outputs.write_json(out / "action_report.json", report, echo)
    print(f"action = {res.value!r}  grad_norm = {res.grad_norm:.3e}  classes = {res.explored}/{res.classes}")
    if not res.converged:
        print("flagged: descent did not reach the gradient tolerance", file=sys.stderr)
        return FLAGGED
    return OK


def load_solution(directory: str) -> WeakKamSolution:
    """Rebuild a solution from the files written by ``solve``."""
    base = Path(directory)
    try:
        doc = json.loads((base / "solution.json").read_text())
        blob = (base / "values.bin").read_bytes()
    except OSError as exc:
        raise InputError(f"calibrate.solution: cannot read {directory}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"calibrate.solution: {base / 'solution.json'} is not valid JSON: {exc}") from None
    if doc.get("values_bin_sha256") != outputs.sha256(blob):
        raise InputError(f"calibrate.solution: values.bin in {directory} does not match solution.json")
    try:
        W = Potential.from_dict(doc["config"]["potential"])
        u = GridValueFunction.from_binary(blob)
        return WeakKamSolution(u, doc["lambda"], doc["dt"], doc["residual"], doc["iterations"], doc["converged"],
                               W, doc["spread"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"calibrate.solution: incomplete solve output in {directory}: {exc}") from None


def cmd_calibrate(cfg: RunConfig, out: Path, threads: int) -> int:
    cc = cfg.calibrate
    if cc.solution is None:
        raise InputError("calibrate.solution: required (a directory written by solve)")
    sol = load_solution(cc.solution)
    space = sol.space
    if cc.state is None:
        state = space.reference
    else:
        state = space.snap(_config_value(cc.state, "calibrate.state", space.n))
    try:
        curve, defects, ids = calibrated_curve(sol, state, cc.horizon)
    except ValueError as exc:
        raise InputError(f"calibrate.horizon: {exc}") from None
    echo = cfg.echo()
    k = len(defects)
    rows = ["step,time,state,defect"]
    for j, (d, i) in enumerate(zip(defects, ids)):
        rows.append(f"{j},{-j * sol.dt!r},{i},{float(d)!r}")
    outputs.write_csv(out / "calibrated_curve.csv", curve.to_csv(), echo)
    outputs.write_csv(out / "defects.csv", "\n".join(rows) + "\n", echo)
    worst = float(np.max(defects))
    bound = sol.residual + ROUNDING
    outputs.write_json(out / "calibrate_report.json", {
        "state": state,
        "coordinates": [float(x) for x in space.coords[state]],
        "steps": k,
        "worst_defect": worst,
        "bound": bound,
        "passed": worst <= bound,
        "lambda": sol.lam,
        "solution": {"n": space.n, "m": space.m, "dt": sol.dt, "potential": sol.potential.to_dict()},
    }, echo)
    print(f"worst defect = {worst:.3e} (bound {bound:.3e}) over {k} steps")
    return OK if worst <= bound else FLAGGED


def cmd_verify(cfg: RunConfig, out: Path, threads: int, flip: bool = False) -> int:
    from .verify import run_all

    checks = run_all(cfg, threads, flip)
    passed = all(c.passed for c in checks)
    outputs.write_json(out / "verify_report.json", {
        "checks": [c.to_dict() for c in checks],
        "passed": passed,
    }, cfg.echo())
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}")
    return OK if passed else FLAGGED


COMMANDS = {
    "solve": cmd_solve,
    "minimize": cmd_minimize,
    "calibrate": cmd_calibrate,
    "verify": cmd_verify,
}


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors: exit 1, not argparse's 2 (2 means flagged)
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(INPUT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False, allow_abbrev=False)
    common.add_argument("--config", help="YAML run config")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    common.add_argument("--print-config", action="store_true", help="print the effective config and exit")
    fields = common.add_argument_group("config overrides (values parsed as YAML)")
    for name in leaf_fields():
        fields.add_argument(f"--{name}", dest=f"set:{name}", metavar="VALUE")

    parser = _Parser(
        prog="weakkam",
        description="Weak KAM solutions and action minimizers for particles on a circle.",
        epilog="Defaults:\n" + defaults_yaml(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
        allow_abbrev=False,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], allow_abbrev=False)
        if name == "verify":
            p.add_argument("--fault-flip-tiebreak", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else INPUT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        data = load_file(args.config) if args.config else {}
        overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("set:") and v is not None}
        cfg = validate(apply_overrides(data, overrides))
        threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
        if threads < 1:
            raise ConfigError("--threads: must be at least 1")
        if args.print_config:
            print(json.dumps(cfg.echo(), indent=2, sort_keys=True))
            return OK
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "verify":
            return cmd_verify(cfg, out, threads, args.fault_flip_tiebreak)
        return COMMANDS[args.command](cfg, out, threads)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
