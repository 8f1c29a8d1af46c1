"""Command-line front end: solve, diagnose, simulate.

Exit codes: 0 success, 2 model parse error, 3 validation failure,
4 solver nonconvergence, 5 diagnostic suite failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import bsde, hjb, linear, model, oracle, penalized, randomized, simulate

EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_NONCONVERGENCE = 4
EXIT_SUITE = 5


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path, emit):
    import io

    buf = io.StringIO()
    emit(buf)
    _atomic_write(path, buf.getvalue())


def _load(args):
    try:
        p = model.load_problem(args.model)
    except (json.JSONDecodeError, KeyError, ValueError, TypeError, OSError) as exc:
        print(f"error: cannot parse model {args.model}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)
    report = model.validate_problem(p)
    if not report.ok:
        print(f"error: model fails validation:\n{report}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)
    return p


def _merge_config(args):
    """Config file may supply the same keys as the flags; explicit flags win."""
    if not getattr(args, "config", None):
        return
    with open(args.config) as fh:
        cfg = json.load(fh)
    for key in ("n_steps", "paths", "seed", "tol", "levels", "out_dir"):
        if key in cfg and key not in args._explicit:
            setattr(args, key, cfg[key])


def cmd_solve(args):
    p = _load(args)
    try:
        sol = hjb.solve_hjb_picard(p, n_steps=args.n_steps, tol=args.tol)
    except hjb.NonconvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_NONCONVERGENCE)
    os.makedirs(args.out_dir, exist_ok=True)
    _write_csv(
        os.path.join(args.out_dir, "values.csv"),
        lambda fh: sol.values.to_csv(fh, p.states),
    )

    def emit_policy(fh):
        import csv

        w = csv.writer(fh)
        w.writerow(["k", "t", "state", "action_label"])
        ts = sol.values.times
        for k in range(sol.values.n_steps + 1):
            for x, sx in enumerate(p.states):
                w.writerow([k, repr(float(ts[k])), sx, p.actions[sol.argmax[k, x]]])

    _write_csv(os.path.join(args.out_dir, "policy.csv"), emit_policy)
    summary = {
        "v0": {p.states[x]: float(sol.values.values[0, x]) for x in range(p.n_states)},
        "iterations": sol.iterations,
        "residual": sol.residual,
        "n_steps": args.n_steps,
    }
    _atomic_write(
        os.path.join(args.out_dir, "summary.json"),
        json.dumps(summary, indent=2, sort_keys=True) + "\n",
    )
    return 0


def cmd_diagnose(args):
    p = _load(args)
    levels = args.levels
    try:
        primal = hjb.solve_hjb_picard(p, n_steps=args.n_steps, tol=args.tol)
    except hjb.NonconvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_NONCONVERGENCE)
    os.makedirs(args.out_dir, exist_ok=True)
    report = penalized.convergence_report(p, levels, n_steps=args.n_steps, primal=primal)
    _write_csv(os.path.join(args.out_dir, "penalized.csv"), report.to_csv)

    x0 = 0
    v0 = float(primal.values.values[0, x0])
    greedy_level = levels[-1] if 64 not in levels else 64
    dual = randomized.dual_value_check(
        p, 0.0, x0, v0, report.solutions[greedy_level],
        n_paths=args.paths, master_seed=args.seed,
    )
    _write_csv(os.path.join(args.out_dir, "dual.csv"), dual.to_csv)

    miny = bsde.minimal_y_report(p, report.solutions, 0.0, x0, v0)
    _write_csv(os.path.join(args.out_dir, "bsde.csv"), miny.to_csv)
    violations = {}
    for n in levels:
        est, se = bsde.constraint_violation(
            p, report.solutions[n], 0.0, x0, 0, min(args.paths, 2000), master_seed=args.seed
        )
        violations[n] = (est, se)

    checks = {
        "penalized_monotone": all(r.monotonicity_violations == 0 for r in report.rows),
        "penalized_capped": all(r.cap_violations == 0 for r in report.rows),
        "dual_below_primal": dual.all_below_primal,
        "greedy_reaches_vn": dual.greedy_reaches_target,
        "constraint_decay": all(
            violations[b][0] <= violations[a][0] + 3.0 * (violations[a][1] + violations[b][1])
            for a, b in zip(levels, levels[1:])
        ),
    }
    summary = {
        "checks": checks,
        "passed": all(checks.values()),
        "v0": {p.states[x]: float(primal.values.values[0, x]) for x in range(p.n_states)},
        "sigma": {str(r.level): r.sigma for r in report.rows},
        "delta": {str(r.level): r.delta for r in report.rows},
        "constraint_violation": {str(n): list(violations[n]) for n in levels},
        "paths": args.paths,
        "seed": args.seed,
    }
    _atomic_write(
        os.path.join(args.out_dir, "summary.json"),
        json.dumps(summary, indent=2, sort_keys=True) + "\n",
    )
    if not summary["passed"]:
        print("diagnostic suite failed:", checks, file=sys.stderr)
        return EXIT_SUITE
    return 0


def cmd_simulate(args):
    p = _load(args)
    if args.action is not None:
        if args.action not in p.actions:
            print(f"error: unknown action label {args.action!r}", file=sys.stderr)
            raise SystemExit(EXIT_VALIDATION)
        policy = simulate.constant_policy(p, p.actions.index(args.action))
    else:
        try:
            sol = hjb.solve_hjb_picard(p, n_steps=args.n_steps, tol=args.tol)
        except hjb.NonconvergenceError as exc:
            print(f"error: {exc}", file=sys.stderr)
            raise SystemExit(EXIT_NONCONVERGENCE)
        policy = hjb.extract_feedback(sol)
    paths = [
        simulate.simulate_controlled_path(
            p, policy, 0.0, args.start_state, None, rng=simulate.child_rng(args.seed, i)
        )
        for i in range(args.count)
    ]
    os.makedirs(args.out_dir, exist_ok=True)
    _write_csv(
        os.path.join(args.out_dir, "paths.csv"),
        lambda fh: simulate.paths_to_csv(paths, fh),
    )
    return 0


class _TrackingNamespace(argparse.Namespace):
    pass


def _build_parser():
    ap = argparse.ArgumentParser(prog="jumpcontrol")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--model", required=True)
        sp.add_argument("--out-dir", default="out")
        sp.add_argument("--n-steps", type=int, default=2000, dest="n_steps")
        sp.add_argument("--tol", type=float, default=1e-10)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config", default=None)

    sp = sub.add_parser("solve", help="solve the HJB equation, export values and policy")
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("diagnose", help="run penalized/dual/BSDE diagnostic suites")
    common(sp)
    sp.add_argument("--paths", type=int, default=20_000)
    sp.add_argument(
        "--levels",
        type=lambda s: tuple(int(v) for v in s.split(",")),
        default=(1, 2, 4, 8, 16, 32, 64, 128, 256),
    )
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("simulate", help="dump simulated paths as CSV")
    common(sp)
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--start-state", type=int, default=0)
    sp.add_argument("--action", default=None, help="constant action label; default: optimal policy")
    sp.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    ap = _build_parser()
    args = ap.parse_args(argv)
    args._explicit = {
        a.dest for a in ap._actions if any(opt in argv for opt in a.option_strings)
    }
    for sp_action in ap._subparsers._group_actions:
        for name, sp in sp_action.choices.items():
            if name == args.command:
                args._explicit |= {
                    a.dest for a in sp._actions if any(opt in argv for opt in a.option_strings)
                }
    _merge_config(args)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
