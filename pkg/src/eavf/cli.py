"""Command-line entry point: ``eavf {list,run,sweep,verify}``.

Exit codes: 0 success, 1 failed verification, 2 bad arguments or config,
3 iteration divergence during ``run``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .checks import GROUPS, run_checks
from .integrators import IterationConfig, MethodId, _KINDS, _NEEDS_RULE, integrate
from .systems import PROBLEMS, build_problem

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3

_METHOD_HELP = {
    "avf": "average vector field applied to U + y^T M y / 2",
    "avf_reduced": "AVF reduced to the displacement equation (second-order systems)",
    "crk": "order-4 energy-preserving continuous Runge-Kutta",
    "eavf": "exponential AVF",
    "eavf_block": "exponential AVF in block form (second-order systems)",
    "mid": "implicit midpoint",
    "mid_reduced": "implicit midpoint reduced to the displacement equation (second-order systems)",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _param_flags():
    flags = {}
    for entry in PROBLEMS.values():
        for key, (typ, _, help_) in entry.params.items():
            flags.setdefault(key, (typ, help_))
    return dict(sorted(flags.items()))


def _schema():
    problems = {
        name: {
            "description": e.description,
            "params": {k: {"type": t.__name__, "default": d, "help": h} for k, (t, d, h) in sorted(e.params.items())},
        }
        for name, e in sorted(PROBLEMS.items())
    }
    methods = {k: {"quadrature": k in _NEEDS_RULE, "description": _METHOD_HELP[k]} for k in sorted(_KINDS)}
    return {"problems": problems, "methods": methods, "presets": list(harness.PRESETS)}


def cmd_list(args) -> int:
    schema = _schema()
    if args.json:
        print(json.dumps(schema, indent=2, sort_keys=True))
        return EXIT_OK
    if args.methods:
        for name, m in schema["methods"].items():
            q = " [--gl S]" if m["quadrature"] else ""
            print(f"{name}{q}: {m['description']}")
        return EXIT_OK
    for name, p in schema["problems"].items():
        print(f"{name}: {p['description']}")
        for key, spec in p["params"].items():
            print(f"    --{key.replace('_', '-')} ({spec['type']}, default {spec['default']!r}): {spec['help']}")
    return EXIT_OK


def cmd_run(args) -> int:
    if args.problem not in PROBLEMS:
        print(f"error: unknown problem {args.problem!r}; known: {', '.join(sorted(PROBLEMS))}", file=sys.stderr)
        return EXIT_USAGE
    entry = PROBLEMS[args.problem]
    params = {}
    for key in _param_flags():
        val = getattr(args, key, None)
        if val is None:
            continue
        if key not in entry.params:
            print(f"error: --{key.replace('_', '-')} does not apply to {args.problem!r}", file=sys.stderr)
            return EXIT_USAGE
        params[key] = val
    try:
        method = MethodId.parse(args.method, args.gl)
        cfg = IterationConfig(args.tol, args.max_iter)
        system, y0 = build_problem(args.problem, **params)
        traj = integrate(system, method, y0, args.h, args.t_end, cfg)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.out:
        harness.write_trajectory_csv(traj, args.out)
    h0, hn = traj.energies[0], traj.energies[-1]
    drift = float(np.max(np.abs(traj.energies - h0)))
    iters = sum(traj.per_step_iterations)
    print(f"GE=— FE={traj.total_fe} iterations={iters} steps={len(traj) - 1} "
          f"H_final={hn:.16e} H_drift={drift:.3e} method={traj.method}")
    if not traj.converged:
        print(f"error: fixed-point iteration diverged at step {traj.failed_step} "
              f"(t={args.h * traj.failed_step:g}, method={traj.method}, h={args.h:g})", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        if args.preset:
            spec = harness.preset(args.preset)
        elif args.config:
            spec = harness.read_config(args.config)
        else:
            print("error: sweep needs --preset or --config", file=sys.stderr)
            return EXIT_USAGE
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.trajectories:
        spec.export_trajectories = True
    out_dir = Path(args.out_dir)
    result = harness.run_experiment(spec, workers=args.workers, out_dir=out_dir)
    for p in result.points:
        status = "ok" if p.converged else "diverged"
        print(f"{p.method:<10} h={p.h:<12.6g} FE={p.total_fe:<9d} GE={p.ge:.3e} EH={p.eh:.3e} {status}")
    print(f"wrote {out_dir / (spec.name + '.csv')}")
    return EXIT_OK


def cmd_verify(args) -> int:
    only = set(args.only) if args.only else None
    failed = 0
    for group, name, ok, detail, secs in run_checks(only):
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} {group}/{name} ({secs:.2f}s): {detail}")
    print(f"{'all checks passed' if not failed else f'{failed} check(s) failed'}")
    return EXIT_VERIFY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="eavf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ls = sub.add_parser("list", help="list problems and methods")
    ls.add_argument("--methods", action="store_true", help="list methods instead of problems")
    ls.add_argument("--json", action="store_true", help="machine-readable schema")
    ls.set_defaults(func=cmd_list)

    run = sub.add_parser("run", help="integrate one problem with one method")
    run.add_argument("--problem", required=True)
    run.add_argument("--method", required=True)
    run.add_argument("--gl", type=int, default=None, help="Gauss-Legendre points")
    run.add_argument("--h", type=float, required=True)
    run.add_argument("--t-end", type=float, required=True)
    run.add_argument("--tol", type=float, default=1e-14)
    run.add_argument("--max-iter", type=int, default=100)
    run.add_argument("--out", default=None, help="trajectory CSV path")
    for key, (typ, help_) in _param_flags().items():
        run.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ, default=None, help=help_)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="run an efficiency sweep")
    src = sw.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=harness.PRESETS)
    src.add_argument("--config", help="INI experiment file")
    sw.add_argument("--out-dir", default="results")
    sw.add_argument("--workers", type=int, default=None,
                    help=f"parallel cells (default ${harness.WORKERS_ENV} or 1)")
    sw.add_argument("--trajectories", action="store_true", help="also export every trajectory")
    sw.set_defaults(func=cmd_sweep)

    ver = sub.add_parser("verify", help="run the invariant checks")
    ver.add_argument("--only", action="append", choices=GROUPS)
    ver.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
