"""Experiment specifications and the runner that turns them into traces."""

import copy
import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .._validation import ConfigError, DivergenceError, InvalidArgument, SingularStepError
from ..det_opt import ALGORITHMS, optimal_hb_params, resolve_params, run_deterministic
from ..problems import PROBLEM_NAMES, make_problem
from ..schedules import Schedule
from ..sto_opt import STO_ALGORITHMS, BatchSampler, StoConfig, StoOptimizer, run_epochs
from ..trace import Trace, write_trace

SPEC_VERSION = 1

# parameters each family understands; anything else is a config error
DET_PARAMS = {"beta", "eta", "lipschitz", "truncate", "alpha", "guard", "tol"}
STO_PARAMS = {"beta", "eta", "c", "eta_max", "epsilon", "weight_decay", "batch_size",
              "fstar_policy", "clamp"}
SCHEDULE_KEYS = ("eta", "eta_max", "c")
# generators whose data depend on a seed; it defaults to the run seed
SEEDED_PROBLEMS = {"least_squares", "logistic_synthetic", "logistic_overlap"}


def algorithm_kind(algo):
    if algo in ALGORITHMS:
        return "det"
    if algo in STO_ALGORITHMS:
        return "sto"
    raise ConfigError(f"unknown algorithm {algo!r}; expected one of "
                      f"{ALGORITHMS + STO_ALGORITHMS}", "algo")


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce a run: problem, algorithm, budget and seeds.

    ``params`` holds algorithm hyperparameters; ``"beta": "optimal"`` and
    ``"eta": "optimal"`` select the heavy-ball optimal values from the
    problem's ``mu`` and ``L``. ``budget`` counts iterations for
    deterministic algorithms and epochs for stochastic ones. ``x0`` is
    ``"gaussian"``, ``"zeros"`` or an explicit list; ``None`` picks
    ``"gaussian"`` for deterministic and ``"zeros"`` for stochastic runs.
    """

    problem: dict
    algo: str
    budget: int
    params: dict = field(default_factory=dict)
    schedules: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])
    x0: object = None
    out: str = None
    version: int = SPEC_VERSION

    def __post_init__(self):
        self.validate()

    @property
    def kind(self):
        return algorithm_kind(self.algo)

    def validate(self):
        if self.version != SPEC_VERSION:
            raise ConfigError(f"unsupported spec version {self.version}", "version")
        if not isinstance(self.problem, dict) or self.problem.get("name") not in PROBLEM_NAMES:
            raise ConfigError(f"unknown problem; expected one of {PROBLEM_NAMES}", "problem.name")
        kind = algorithm_kind(self.algo)
        if not isinstance(self.budget, int) or isinstance(self.budget, bool) or self.budget < 1:
            raise ConfigError("must be a positive integer", "budget")
        allowed = DET_PARAMS if kind == "det" else STO_PARAMS
        for key in self.params:
            if key not in allowed:
                raise ConfigError(f"not a parameter of {self.algo}", f"params.{key}")
        for key, value in self.params.items():
            if value == "optimal" and key in ("beta", "eta"):
                continue
            if key in ("truncate", "guard", "clamp", "fstar_policy"):
                continue
            if value is not None and not isinstance(value, (int, float)):
                raise ConfigError("must be a number", f"params.{key}")
        if self.schedules and kind != "sto":
            raise ConfigError("schedules apply to stochastic algorithms only", "schedules")
        for key, sched in (self.schedules or {}).items():
            if key not in SCHEDULE_KEYS:
                raise ConfigError(f"expected one of {SCHEDULE_KEYS}", f"schedules.{key}")
            if not isinstance(sched, dict) or "kind" not in sched:
                raise ConfigError("must be an object with a 'kind'", f"schedules.{key}")
        if (not isinstance(self.seeds, list) or not self.seeds
                or not all(isinstance(s, int) and not isinstance(s, bool) for s in self.seeds)):
            raise ConfigError("must be a non-empty list of integers", "seeds")
        if not (self.x0 is None or self.x0 in ("gaussian", "zeros") or isinstance(self.x0, list)):
            raise ConfigError("must be 'gaussian', 'zeros' or a list of numbers", "x0")

    def to_dict(self):
        return {"version": self.version, "problem": self.problem, "algo": self.algo,
                "budget": self.budget, "params": self.params, "schedules": self.schedules,
                "seeds": self.seeds, "x0": self.x0, "out": self.out}

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("experiment spec must be a JSON object")
        known = {"version", "problem", "algo", "budget", "params", "schedules", "seeds", "x0",
                 "out"}
        for key in data:
            if key not in known:
                raise ConfigError("unknown field", key)
        for key in ("problem", "algo", "budget"):
            if key not in data:
                raise ConfigError("missing required field", key)
        return cls(**copy.deepcopy(data))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False)

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(data)

    def spec_hash(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"),
                               allow_nan=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def output_path(self, seed):
        if self.out is None:
            return None
        if len(self.seeds) == 1:
            return self.out
        root, ext = os.path.splitext(self.out)
        return f"{root}-seed{seed}{ext or '.csv'}"


def load_spec(path):
    with open(path, encoding="utf-8") as fh:
        return ExperimentSpec.from_json(fh.read())


def build_problem(spec, seed):
    pspec = dict(spec.problem)
    if pspec["name"] in SEEDED_PROBLEMS:
        pspec.setdefault("seed", seed)
    try:
        return make_problem(pspec)
    except InvalidArgument as exc:
        raise ConfigError(str(exc), "problem") from None
    except OSError as exc:
        raise ConfigError(str(exc), "problem.path") from None


def initial_point(spec, problem, seed):
    x0 = spec.x0
    if x0 is None:
        x0 = "gaussian" if spec.kind == "det" else "zeros"
    if x0 == "zeros":
        return np.zeros(problem.dim)
    if x0 == "gaussian":
        return np.random.default_rng([seed, 1]).standard_normal(problem.dim)
    if len(x0) != problem.dim:
        raise ConfigError(f"has length {len(x0)}, problem dimension is {problem.dim}", "x0")
    return np.asarray(x0, dtype=np.float64)


def _resolve_optimal(params, problem):
    p = dict(params)
    if "optimal" in (p.get("beta"), p.get("eta")):
        meta = problem.meta
        if meta.strong_convexity is None or meta.lipschitz is None:
            raise ConfigError("'optimal' needs a problem with known mu and L", "params")
        beta, eta = optimal_hb_params(meta.strong_convexity, meta.lipschitz)
        if p.get("beta") == "optimal":
            p["beta"] = beta
        if p.get("eta") == "optimal":
            p["eta"] = eta
    return p


def _problem_summary(problem):
    meta = problem.meta
    out = {"dim": int(problem.dim), "fstar": meta.fstar}
    if meta.lipschitz is not None:
        out["lipschitz"] = meta.lipschitz
    if meta.strong_convexity is not None:
        out["mu"] = meta.strong_convexity
        out["kappa"] = meta.kappa
    return out


def _history_to_trace(hist):
    trace = Trace()
    steps = hist.steps
    gap = hist.gap
    for i in range(len(hist.f)):
        stepped = i < steps
        trace.append(i + 1, 0, hist.f[i], gap[i],
                     hist.eta[i] if stepped else math.nan,
                     hist.dnorm[i] if stepped else math.nan,
                     hist.dist[i], bool(hist.trunc[i]) if stepped else False, 0.0)
    trace.finalize()
    trace.extras["gnorm"] = hist.gnorm
    return trace


def _build_schedules(spec, params, total_steps):
    out = {}
    for key, sched in (spec.schedules or {}).items():
        data = dict(sched)
        if "base" not in data:
            base = params.get(key)
            if base is None:
                raise ConfigError("needs a 'base' value", f"schedules.{key}.base")
            data["base"] = base
        if data["kind"] in ("cosine", "finetune_c", "step_decay") and "total" not in data \
                and "interval" not in data:
            data["total"] = total_steps
        try:
            out[key] = Schedule.from_dict(data)
        except (InvalidArgument, TypeError) as exc:
            raise ConfigError(str(exc), f"schedules.{key}") from None
    return out


def _run_sto(spec, problem, params, seed, x0):
    cfg_args = {k: v for k, v in params.items() if k != "eta"}
    if cfg_args.get("eta_max") is None:
        cfg_args["eta_max"] = math.inf
    try:
        cfg = StoConfig(**cfg_args)
        optimizer = StoOptimizer(spec.algo, cfg, params.get("eta"))
    except InvalidArgument as exc:
        raise ConfigError(str(exc), "params") from None
    per_epoch = BatchSampler(problem.n_samples, cfg.batch_size, 0).batches_per_epoch
    schedules = _build_schedules(spec, params, per_epoch * spec.budget)
    return run_epochs(problem, optimizer, schedules, spec.budget, seed, x0)


def run_single(spec, seed, keep_path=False):
    """Run ``spec`` for one seed and return its trace (also written if ``spec.out``).

    With ``keep_path`` a deterministic run keeps its iterates in
    ``trace.extras["x"]``.
    """
    problem = build_problem(spec, seed)
    x0 = initial_point(spec, problem, seed)
    params = _resolve_optimal(spec.params, problem)
    message = ""
    try:
        if spec.kind == "det":
            params = resolve_params(problem, spec.algo, params)
    except InvalidArgument as exc:
        raise ConfigError(str(exc), "params") from None
    try:
        if spec.kind == "det":
            hist = run_deterministic(problem, spec.algo, x0, spec.budget, params,
                                     keep_path=keep_path)
            trace = _history_to_trace(hist)
            if keep_path:
                trace.extras["x"] = hist.x
            termination, message = hist.termination, hist.message
        else:
            trace = _run_sto(spec, problem, params, seed, x0)
            termination = trace.meta.get("termination", "budget")
    except (SingularStepError, DivergenceError) as exc:
        trace = Trace().finalize()
        termination = "singular" if isinstance(exc, SingularStepError) else "diverged"
        message = str(exc)
    except InvalidArgument as exc:
        raise ConfigError(str(exc), "params") from None
    resolved = {k: v for k, v in params.items() if isinstance(v, (int, float, bool, str))}
    if resolved.get("eta_max") == math.inf:
        resolved.pop("eta_max")
    trace.meta = {"spec_hash": spec.spec_hash(), "seed": seed, "algo": spec.algo,
                  "termination": termination, "message": message, "spec": spec.to_dict(),
                  "params": resolved, "problem": _problem_summary(problem)}
    path = spec.output_path(seed)
    if path is not None:
        write_trace(trace, path)
    return trace


def run_experiment(spec, workers=1):
    """Run every seed of ``spec``; traces come back in seed order.

    With ``workers > 1`` the seeds run concurrently in threads. Each run owns
    its problem, state and random stream, so results do not depend on the
    number of workers.
    """
    if isinstance(spec, dict):
        spec = ExperimentSpec.from_dict(spec)
    if workers <= 1 or len(spec.seeds) == 1:
        return [run_single(spec, seed) for seed in spec.seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: run_single(spec, s), spec.seeds))
