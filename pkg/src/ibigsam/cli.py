"""Command-line benchmark harness.

Subcommands::

    ibigsam run       one solver on one generated instance, trace CSV out
    ibigsam compare   both solvers over seeded instances, summary table out
    ibigsam path      regularization path CSV
    ibigsam validate  operator/oracle audit suite, audit CSV out

Exit status: 0 success, 1 usage error, 2 numeric failure, 3 audit failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .problems import IllConditionedSpec, gen_lasso, gen_nnls, serialize_instance, toy_bilevel
from .solvers import (
    TRACE_COLUMNS,
    NumericalFailure,
    StopKind,
    StoppingRule,
    big_sam_run,
    default_config,
    ibig_sam_run,
    reference_run,
    tikhonov_path,
)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_AUDIT = 0, 1, 2, 3

# bump when the reference protocol changes so stale caches are ignored
REFERENCE_PROTOCOL = "bigsam-default-steps-v1"

DEFAULT_SIZES = {"toy": (1, 1), "nnls": (200, 200), "lasso": (100, 500)}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _floats(text):
    try:
        return [float(v) for v in str(text).replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def _add_common(p):
    p.add_argument("--config", help="flat key=value file; keys are long flag names")
    p.add_argument("--problem", choices=["toy", "nnls", "lasso"], default="toy")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--mu", type=float, default=0.5)
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--smallest-singular", type=float, default=1e-6)
    p.add_argument("--out", help="output CSV path")


def _add_solver(p):
    p.add_argument("--inertia-alpha", type=_floats, default=[3.0],
                   help="alpha >= 3 in the inertia bound; compare accepts a list like 3,4,5")
    p.add_argument("--kappa", type=float, default=0.1)
    p.add_argument("--lambda", dest="lam", type=float, help="inner step (default 1/L_f)")
    p.add_argument("--gamma", type=float, help="outer step (default 2/(L_h+sigma))")
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("--stop", choices=["relgap", "dist", "cap"], default="dist")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--ref-iters", type=int, default=1000)
    p.add_argument("--moreau", type=_bool, default=False)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ibigsam", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("run", help="run one solver on one instance")
    _add_common(p)
    _add_solver(p)
    p.add_argument("--solver", choices=["ibigsam", "bigsam"], default="ibigsam")

    p = sub.add_parser("compare", help="iBiG-SAM vs BiG-SAM over seeded runs")
    _add_common(p)
    _add_solver(p)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p = sub.add_parser("path", help="regularization path")
    _add_common(p)
    p.add_argument("--lambdas", type=_floats, default=[1.0, 0.1, 0.01, 1e-3, 1e-4])
    p.add_argument("--mode", choices=["tikhonov", "penalty"], default="tikhonov")
    p.add_argument("--path-tol", type=float, default=1e-10)
    p.add_argument("--path-max-iter", type=int, default=100_000)

    p = sub.add_parser("validate", help="run the audit suite on one instance")
    _add_common(p)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--inject-fault", choices=["none", "gradient", "lambda", "gamma"],
                   default="none")
    return parser


def read_config(path) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key.lstrip("-")] = val
    return values


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = read_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.option_strings[0].lstrip("-"): a.dest
                 for a in sub._actions if a.option_strings}
        unknown = sorted(set(cfg) - set(known))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        # string defaults go through each action's type conversion
        sub.set_defaults(**{known[k]: v for k, v in cfg.items()})
        args = parser.parse_args(argv)
    return args


# -- instances and references ------------------------------------------------


def make_problem(args, seed=None):
    seed = args.seed if seed is None else seed
    dm, dn = DEFAULT_SIZES[args.problem]
    m = args.m or dm
    n = args.n or dn
    if args.problem == "toy":
        return toy_bilevel()
    if args.problem == "nnls":
        spec = IllConditionedSpec(m, n, smallest_singular=args.smallest_singular, seed=seed)
        return gen_nnls(spec, noise_scale=args.delta)
    return gen_lasso(m, n, mu=args.mu, noise_scale=args.delta, seed=seed)


def _cache_dir(args) -> Path:
    base = Path(args.out).parent if args.out else Path(".")
    return base / ".ibigsam-cache"


def with_reference(problem, args):
    """Attach ``x*`` and ``phi*`` (toy: exact; otherwise cached BiG-SAM run)."""
    if problem.instance is None:
        return problem
    key = hashlib.sha256()
    key.update(serialize_instance(problem.instance).encode())
    key.update(f"{REFERENCE_PROTOCOL}:{args.ref_iters}".encode())
    path = _cache_dir(args) / f"{key.hexdigest()[:32]}.npz"
    if path.exists():
        with np.load(path) as data:
            return problem.with_reference(data["x"], float(data["phi"]))
    x_ref, phi_ref = reference_run(problem, args.ref_iters)
    path.parent.mkdir(parents=True, exist_ok=True)
    # unique per process so parallel runs sharing a key never collide
    tmp = path.with_name(f"{path.stem}.{os.getpid()}.tmp.npz")
    np.savez(tmp, x=x_ref, phi=phi_ref)
    tmp.replace(path)
    return problem.with_reference(x_ref, phi_ref)


def make_config(problem, args, inertia_alpha=None):
    if args.stop == "relgap":
        stopping = StoppingRule.relative_gap(problem.reference_inner_optimum, args.tol)
    elif args.stop == "dist":
        stopping = StoppingRule.distance(problem.reference_solution, args.tol)
    else:
        stopping = StoppingRule(StopKind.CAP, args.tol)
    kw = dict(
        inertia_alpha=inertia_alpha if inertia_alpha is not None else args.inertia_alpha[0],
        kappa=args.kappa,
        max_iterations=args.max_iter,
        stopping=stopping,
        use_moreau_outer=args.moreau,
        seed=args.seed,
    )
    if args.lam is not None:
        kw["lam"] = args.lam
    if args.gamma is not None:
        kw["gamma"] = args.gamma
    return default_config(problem, **kw)


# -- output ------------------------------------------------------------------


def _fmt(v):
    return "" if v is None else repr(v)


def write_trace_csv(path, trace) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for rec in trace:
            w.writerow([_fmt(v) for v in rec])


def _table(headers, rows) -> str:
    cells = [list(map(str, headers))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    out = io.StringIO()
    for k, r in enumerate(cells):
        out.write("  ".join(c.rjust(wd) for c, wd in zip(r, widths)).rstrip() + "\n")
        if k == 0:
            out.write("  ".join("-" * wd for wd in widths) + "\n")
    return out.getvalue()


# -- commands ----------------------------------------------------------------


def cmd_run(args) -> int:
    if len(args.inertia_alpha) != 1:
        raise UsageError("run takes a single --inertia-alpha")
    problem = with_reference(make_problem(args), args)
    try:
        config = make_config(problem, args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    solve = ibig_sam_run if args.solver == "ibigsam" else big_sam_run
    try:
        result = solve(problem, config)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = args.out or f"{args.problem}_{args.solver}_trace.csv"
    write_trace_csv(out, result.trace)
    last = result.trace[-1]
    x = result.solution
    shown = np.array2string(x[:5], precision=6) + (" ..." if x.size > 5 else "")
    print(f"solver={args.solver} problem={problem.name} iterations={result.iterations_used} "
          f"stop={result.stop_reason.value}")
    print(f"phi={last.phi:.10g} h={last.h:.10g} dist_ref={_fmt(last.dist_ref)}")
    print(f"x={shown}")
    print(f"trace -> {out}")
    return EXIT_OK


@dataclass
class RunSummary:
    problem: str
    solver: str
    runs: int = 0
    mean_iterations: float = 0.0
    mean_seconds: float = 0.0
    records: list = field(default_factory=list)  # (seed, iterations, seconds, final_dist)

    def finalize(self):
        self.records.sort(key=lambda r: r[0])
        self.runs = len(self.records)
        self.mean_iterations = float(np.mean([r[1] for r in self.records]))
        self.mean_seconds = float(np.mean([r[2] for r in self.records]))
        return self


def _compare_one(args, seed):
    problem = with_reference(make_problem(args, seed), args)
    out = {}
    for alpha in args.inertia_alpha:
        cfg = make_config(problem, args, inertia_alpha=alpha)
        res = ibig_sam_run(problem, cfg)
        out[f"ibigsam(alpha={alpha:g})"] = res
    res = big_sam_run(problem, make_config(problem, args))
    out["bigsam"] = res
    return seed, {k: (r.iterations_used, r.trace[-1].seconds, r.trace[-1].dist_ref,
                      r.stop_reason.value) for k, r in out.items()}


def cmd_compare(args) -> int:
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    seeds = [args.seed + k for k in range(args.runs)]
    # validate flags on the first instance before fanning out
    make_config(with_reference(make_problem(args, seeds[0]), args), args)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_compare_one, [args] * len(seeds), seeds))
    else:
        results = [_compare_one(args, s) for s in seeds]
    results.sort(key=lambda r: r[0])
    solvers = list(results[0][1])
    summaries = {s: RunSummary(args.problem, s) for s in solvers}
    for seed, per in results:
        for s, (its, secs, dist, _) in per.items():
            summaries[s].records.append((seed, its, secs, dist))
    for s in summaries.values():
        s.finalize()
    big = [per["bigsam"][0] for _, per in results]
    rows = []
    for s in solvers:
        its = [per[s][0] for _, per in results]
        if s == "bigsam":
            win, gain = "", ""
        else:
            win = f"{np.mean([a <= b for a, b in zip(its, big)]):.2f}"
            gain = f"{np.mean([(b - a) / b for a, b in zip(its, big)]):.3f}"
        sm = summaries[s]
        rows.append([s, sm.runs, f"{sm.mean_iterations:.2f}", f"{sm.mean_seconds:.4f}", win, gain])
    headers = ["solver", "runs", "mean_iterations", "mean_seconds", "win_rate", "rel_improvement"]
    print(f"problem={args.problem} stop={args.stop} tol={args.tol:g}")
    print(_table(headers, rows), end="")
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["problem"] + headers)
            for r in rows:
                w.writerow([args.problem] + r)
        runs_path = Path(args.out).with_name(Path(args.out).stem + "_runs.csv")
        with open(runs_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["solver", "seed", "iterations", "seconds", "final_dist", "stop_reason"])
            for seed, per in results:
                for s in solvers:
                    its, secs, dist, why = per[s]
                    w.writerow([s, seed, its, repr(secs), _fmt(dist), why])
    return EXIT_OK


def cmd_path(args) -> int:
    problem = make_problem(args)
    try:
        path = tikhonov_path(problem, args.lambdas, mode=args.mode, tolerance=args.path_tol,
                             max_iterations=args.path_max_iter)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = args.out or f"{args.problem}_{args.mode}_path.csv"
    n = problem.dimension
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda"] + [f"x{k}" for k in range(n)] + ["phi", "h", "iterations"])
        for pt in path:
            w.writerow([repr(pt.lam)] + [repr(float(v)) for v in pt.x]
                       + [repr(pt.phi), repr(pt.h), pt.iterations])
    for pt in path:
        print(f"lambda={pt.lam:<10g} phi={pt.phi:.10g} h={pt.h:.10g} iterations={pt.iterations}")
    print(f"path -> {out}")
    return EXIT_OK


def audit_suite(problem, samples=100, seed=0, fault="none"):
    """Run every audit on ``problem``; canary rows are expected to fail."""
    f, g, h = problem.inner_smooth, problem.inner_nonsmooth, problem.outer
    cfg = default_config(problem, max_iterations=200)
    lam, gamma = cfg.lam, cfg.gamma
    if fault == "gradient":
        f = diag.corrupt_gradient(f)
    if fault == "lambda":
        lam = 3.0 / f.lipschitz_grad
    if fault == "gamma":
        gamma = 2.0 * gamma
    reports = [
        diag.gradient_fd_check(f, points=20, seed=seed, name="gradient_fd_inner"),
        diag.gradient_fd_check(h, points=20, seed=seed, name="gradient_fd_outer"),
        diag.averagedness_audit(problem, lam, samples, seed),
        diag.contraction_audit(h, gamma, samples, seed),
        diag.prox_audit(g, lam, samples, seed),
        diag.trace_audit(ibig_sam_run(problem, cfg).trace, cfg),
        # canaries: the suite must be able to see these faults
        replace(diag.gradient_fd_check(diag.corrupt_gradient(problem.inner_smooth), 20, seed,
                                       name="canary_gradient_fd"), canary=True),
        replace(diag.averagedness_audit(problem, 3.0 / f.lipschitz_grad, samples, seed,
                                        canary=True), check="canary_averagedness"),
        replace(diag.contraction_audit(h, 2.0 * cfg.gamma, samples, seed, canary=True),
                check="canary_contraction"),
    ]
    return reports


def cmd_validate(args) -> int:
    problem = make_problem(args)
    reports = audit_suite(problem, args.samples, args.seed, args.inject_fault)
    out = args.out or f"{args.problem}_audit.csv"
    diag.write_reports_csv(out, reports)
    rows = [[r.check, r.samples, f"{r.worst_violation:.3e}", f"{r.tolerance:.1e}",
             "pass" if r.passed else "FAIL", "canary" if r.canary else ""] for r in reports]
    print(_table(["check", "samples", "worst", "tol", "result", "kind"], rows), end="")
    for r in reports:
        if r.canary and r.passed:
            print(f"warning: canary {r.check} did not trip", file=sys.stderr)
    failed = [r for r in reports if not r.canary and not r.passed]
    return EXIT_AUDIT if failed else EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "path": cmd_path, "validate": cmd_validate}


def main(argv=None) -> int:
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
        if args.out:
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args)
    except (UsageError, ValueError) as exc:
        print(f"ibigsam: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"ibigsam: numeric failure at iteration {exc.iteration}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
