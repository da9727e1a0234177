"""Command-line entry point: ``alrmom {det,sto,verify,repro}``.

Exit codes: 0 on success, 2 on a configuration or input error, 3 when a
verification check fails.
"""

import argparse
import json
import sys

from .._validation import ConfigError, InvalidArgument, ParseError
from .. import diagnostics
from ..trace import read_trace
from .experiment import ExperimentSpec, load_spec, run_experiment
from .repro import FIGURES, format_summary, json_safe, run_figure

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 2, 3

PROBLEM_ALIASES = {
    "ls": "least_squares", "least_squares": "least_squares",
    "quad2d": "two_dim_quadratic", "two_dim_quadratic": "two_dim_quadratic",
    "logistic": "logistic_synthetic", "logistic_synthetic": "logistic_synthetic",
    "overlap": "logistic_overlap", "logistic_overlap": "logistic_overlap",
    "polyhedral": "polyhedral", "libsvm": "libsvm",
}


def _common_run_args(p, stochastic):
    p.add_argument("--config", help="JSON experiment spec; other flags override its fields")
    p.add_argument("--problem", choices=sorted(PROBLEM_ALIASES))
    p.add_argument("--kappa", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--n", type=int, help="number of samples (logistic problems)")
    p.add_argument("--margin", type=float)
    p.add_argument("--separation", type=float)
    p.add_argument("--data", help="LIBSVM file for --problem libsvm")
    p.add_argument("--l2", type=float)
    p.add_argument("--algo")
    p.add_argument("--beta", help="momentum parameter, or 'optimal'")
    p.add_argument("--eta", help="constant step size, or 'optimal'")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--x0", choices=("gaussian", "zeros"))
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    if stochastic:
        p.add_argument("--epochs", type=int)
        p.add_argument("--c", type=float)
        p.add_argument("--eta-max", type=float)
        p.add_argument("--lambda", dest="weight_decay", type=float)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--no-clamp", action="store_true")
        p.add_argument("--schedule", action="append", default=[],
                       help="KEY=KIND[,name=value...], e.g. eta_max=warmup_etamax,slope=1e-3")
    else:
        p.add_argument("--iters", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--lipschitz", type=float)
        p.add_argument("--no-truncate", action="store_true")
        p.add_argument("--guard", action="store_true")
        p.add_argument("--tol", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="alrmom", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _common_run_args(sub.add_parser("det", help="deterministic run"), stochastic=False)
    _common_run_args(sub.add_parser("sto", help="stochastic run"), stochastic=True)
    v = sub.add_parser("verify", help="check convergence guarantees on trace files")
    v.add_argument("--trace", nargs="+", required=True)
    v.add_argument("--check", action="append", choices=("rate", "monotone", "polyhedral"),
                   required=True)
    v.add_argument("--rho", default="auto", help="rate constant, or 'auto'")
    v.add_argument("--kappa1", type=float, default=1.0,
                   help="error-bound constant for the polyhedral check")
    v.add_argument("--out", help="write the JSON summary here")
    r = sub.add_parser("repro", help="re-run a packaged figure analog")
    r.add_argument("figure", choices=FIGURES)
    r.add_argument("--out", help="directory for traces and summary.json")
    return parser


def _number_or_optimal(text, name):
    if text is None or text == "optimal":
        return text
    try:
        return float(text)
    except ValueError:
        raise ConfigError("must be a number or 'optimal'", f"params.{name}") from None


def _parse_schedule(text):
    key, sep, rest = text.partition("=")
    if not sep or not rest:
        raise ConfigError(f"expected KEY=KIND[,name=value...], got {text!r}", "schedules")
    kind, *pairs = rest.split(",")
    sched = {"kind": kind}
    for pair in pairs:
        name, sep, value = pair.partition("=")
        if not sep:
            raise ConfigError(f"bad option {pair!r}", f"schedules.{key}")
        try:
            sched[name] = int(value) if name in ("total", "interval", "mid") else float(value)
        except ValueError:
            raise ConfigError(f"{name} must be numeric", f"schedules.{key}") from None
    return key, sched


def spec_from_args(args, stochastic):
    """Merge a ``--config`` file (if any) with command-line overrides."""
    data = {}
    if args.config:
        data = load_spec(args.config).to_dict()
    problem = dict(data.get("problem", {}))
    if args.problem:
        name = PROBLEM_ALIASES[args.problem]
        if problem.get("name") != name:
            problem = {"name": name}
    for flag, key in (("kappa", "kappa"), ("dim", "dim"), ("n", "n"), ("margin", "margin"),
                      ("separation", "separation"), ("data", "path"), ("l2", "l2")):
        value = getattr(args, flag)
        if value is not None:
            problem[key] = value
    _problem_defaults(problem)
    data["problem"] = problem
    if args.algo:
        data["algo"] = args.algo
    budget = args.epochs if stochastic else args.iters
    if budget is not None:
        data["budget"] = budget
    params = dict(data.get("params", {}))
    for name in ("beta", "eta"):
        value = _number_or_optimal(getattr(args, name), name)
        if value is not None:
            params[name] = value
    if stochastic:
        flags = (("c", "c"), ("eta_max", "eta_max"), ("weight_decay", "weight_decay"),
                 ("batch_size", "batch_size"), ("epsilon", "epsilon"))
        if args.no_clamp:
            params["clamp"] = False
        schedules = dict(data.get("schedules", {}))
        for text in args.schedule:
            key, sched = _parse_schedule(text)
            schedules[key] = sched
        data["schedules"] = schedules
    else:
        flags = (("alpha", "alpha"), ("lipschitz", "lipschitz"), ("tol", "tol"))
        if args.no_truncate:
            params["truncate"] = False
        if args.guard:
            params["guard"] = True
    for flag, key in flags:
        value = getattr(args, flag)
        if value is not None:
            params[key] = value
    data["params"] = params
    if args.seeds:
        data["seeds"] = list(args.seeds)
    elif args.seed is not None:
        data["seeds"] = [args.seed]
    if args.x0:
        data["x0"] = args.x0
    if args.out:
        data["out"] = args.out
    for key in ("algo", "budget"):
        if key not in data:
            flag = {"algo": "--algo", "budget": "--epochs" if stochastic else "--iters"}[key]
            raise ConfigError(f"missing; pass {flag} or a --config file", key)
    spec = ExperimentSpec.from_dict(data)
    if (spec.kind == "sto") != stochastic:
        raise ConfigError(f"{spec.algo} is not a {'stochastic' if stochastic else 'deterministic'}"
                          " algorithm", "algo")
    return spec


def _problem_defaults(problem):
    name = problem.get("name")
    if name == "least_squares":
        problem.setdefault("dim", 200)
        problem.setdefault("kappa", 1e4)
    elif name == "two_dim_quadratic":
        problem.setdefault("kappa", 100.0)
    elif name == "logistic_synthetic":
        problem.setdefault("n", 1000)
        problem.setdefault("dim", 20)
        problem.setdefault("margin", 0.05)
    elif name == "logistic_overlap":
        problem.setdefault("n", 1000)
        problem.setdefault("dim", 20)
        problem.setdefault("separation", 1.0)
    elif name == "polyhedral":
        problem.setdefault("dim", 10)


def _cmd_run(args, stochastic):
    spec = spec_from_args(args, stochastic)
    traces = run_experiment(spec, workers=args.workers)
    for seed, trace in zip(spec.seeds, traces):
        where = spec.output_path(seed) or "-"
        print(f"seed {seed}: {trace.termination}, {len(trace)} rows, "
              f"final f_gap {trace.final('f_gap'):.6e} -> {where}")
    return EXIT_OK


def _auto_rho(trace):
    params = trace.meta.get("params", {})
    problem = trace.meta.get("problem", {})
    beta, kappa = params.get("beta"), problem.get("kappa")
    if beta is None or kappa is None:
        raise ConfigError("--rho auto needs beta and kappa in the trace header", "rho")
    return diagnostics.mag_rate(beta, kappa)


def _cmd_verify(args):
    reports = []
    for path in args.trace:
        try:
            trace = read_trace(path)
        except OSError as exc:
            raise ConfigError(str(exc), "trace") from None
        beta = trace.meta.get("params", {}).get("beta", 0.0)
        for check in args.check:
            if check == "rate":
                rho = _auto_rho(trace) if args.rho == "auto" else float(args.rho)
                report = diagnostics.check_rate_bound(trace, rho)
            elif check == "monotone":
                L = trace.meta.get("problem", {}).get("lipschitz")
                report = (diagnostics.check_monotone_distance(trace, "smooth", L, beta)
                          if L is not None else diagnostics.check_monotone_distance(trace))
            else:
                report = diagnostics.check_polyhedral_rate(trace, beta, 1.0, args.kappa1)
            reports.append(dict(report.to_dict(), trace=path))
    summary = {"passed": all(r["passed"] for r in reports), "reports": reports}
    text = json.dumps(json_safe(summary), indent=2, sort_keys=True, allow_nan=False)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return EXIT_OK if summary["passed"] else EXIT_VERIFY


def _cmd_repro(args):
    print(format_summary(run_figure(args.figure, args.out)))
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "det":
            return _cmd_run(args, stochastic=False)
        if args.command == "sto":
            return _cmd_run(args, stochastic=True)
        if args.command == "verify":
            return _cmd_verify(args)
        return _cmd_repro(args)
    except (ConfigError, InvalidArgument, ParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
