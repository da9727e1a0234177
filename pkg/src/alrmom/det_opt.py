"""Deterministic first-order methods with Polyak-type adaptive step sizes.

Each ``*_step`` function is pure: it takes the problem and an immutable
state and returns the next state together with the step size used. All of
them accept an optional ``fg=(f(x), grad f(x))`` pair for the current
iterate so a driver that already evaluated the objective does not pay for
it twice.

A step whose optimality gap ``f(x) - f*`` is at or below the convergence
tolerance is treated as converged: the state is returned unchanged with a
zero step size.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import (DivergenceError, InvalidArgument, SingularStepError, as_vector,
                          check_beta, check_positive)

CONVERGENCE_TOL = 0.0


def convergence_threshold(fstar, tol=None):
    tol = CONVERGENCE_TOL if tol is None else tol
    return tol * max(1.0, abs(fstar))


def _fstar(problem):
    fstar = problem.meta.fstar
    if fstar is None:
        raise InvalidArgument("this step size needs the optimal value fstar")
    return fstar


def _eval(problem, x, fg):
    return problem.value_and_grad(x) if fg is None else fg


@dataclass(frozen=True)
class HBState:
    x: np.ndarray
    x_prev: np.ndarray
    k: int = 1
    truncated: bool = False

    @classmethod
    def start(cls, x0):
        x0 = as_vector(x0, name="x0")
        return cls(x0, x0.copy(), 1)


@dataclass(frozen=True)
class MAGState:
    x: np.ndarray
    d: np.ndarray
    k: int = 1

    @classmethod
    def start(cls, x0):
        x0 = as_vector(x0, name="x0")
        return cls(x0, np.zeros_like(x0), 1)


@dataclass(frozen=True)
class NAGState:
    x: np.ndarray
    v: np.ndarray
    k: int = 1

    @classmethod
    def start(cls, x0):
        x0 = as_vector(x0, name="x0")
        return cls(x0, np.zeros_like(x0), 1)


@dataclass(frozen=True)
class DetConfig:
    beta: float = 0.0
    variant: str = "v1"
    truncate: bool = False
    lipschitz: float = None
    alpha: float = 0.15
    eta_const: float = None
    guard: bool = False
    tol: float = None

    def __post_init__(self):
        check_beta(self.beta)
        if self.variant not in ("v1", "v2"):
            raise InvalidArgument(f"variant must be 'v1' or 'v2', got {self.variant!r}")
        if (self.variant == "v2" or self.truncate) and self.lipschitz is None:
            raise InvalidArgument("variant v2 and truncation need the Lipschitz constant")
        if self.lipschitz is not None:
            check_positive(self.lipschitz, "lipschitz")
        check_positive(self.alpha, "alpha")


def polyak_gd_step(problem, x, fg=None, tol=None):
    """Gradient descent with the Polyak step ``(f(x) - f*) / ||g||^2``."""
    x = as_vector(x, problem.dim)
    fstar = _fstar(problem)
    f, g = _eval(problem, x, fg)
    gap = f - fstar
    if gap <= convergence_threshold(fstar, tol):
        return x, 0.0
    gg = float(g @ g)
    if gg == 0.0:
        raise SingularStepError(f"zero gradient with optimality gap {gap:.3e}")
    eta = gap / gg
    return x - eta * g, eta


def optimal_hb_params(mu, L):
    """Optimal heavy-ball momentum and step size for ``mu``-strongly convex, ``L``-smooth f."""
    mu = check_positive(mu, "mu")
    L = check_positive(L, "L")
    if mu > L:
        raise InvalidArgument("mu must not exceed L")
    rk = math.sqrt(L / mu)
    beta = ((rk - 1.0) / (rk + 1.0)) ** 2
    eta = (1.0 + math.sqrt(beta)) ** 2 / L
    return beta, eta


def optimal_nag_params(mu, L):
    """Nesterov's constant parameters ``beta = (sqrt(k)-1)/(sqrt(k)+1)``, ``eta = 1/L``."""
    mu = check_positive(mu, "mu")
    L = check_positive(L, "L")
    rk = math.sqrt(L / mu)
    return (rk - 1.0) / (rk + 1.0), 1.0 / L


def hb_step(problem, state, eta, beta, fg=None):
    """Heavy-ball step ``x - eta g + beta (x - x_prev)`` with a fixed step size."""
    check_positive(eta, "eta")
    _, g = _eval(problem, state.x, fg)
    x_next = state.x - eta * g + beta * (state.x - state.x_prev)
    return HBState(x_next, state.x, state.k + 1)


def alr_hb_step(problem, state, cfg, fg=None):
    """Heavy-ball step with the adaptive (v1 / v2) step size, optionally truncated.

    Writing the step as ``floor + eta_tilde`` with
    ``eta_tilde = gap/||g||^2 + beta <g, x - x_prev>/||g||^2 - (1-beta)/(2L)``,
    truncation sets ``eta_tilde = 0`` whenever ``<g, x - x_prev> < -gap``.
    The floor is ``(2-beta)/(2L)`` for v2 and ``(1-beta)/(2L)`` for v1.
    Returns ``(state, eta)``; ``state.truncated`` records the event.
    """
    fstar = _fstar(problem)
    f, g = _eval(problem, state.x, fg)
    gap = f - fstar
    if gap <= convergence_threshold(fstar, cfg.tol):
        return state, 0.0
    gg = float(g @ g)
    if gg == 0.0:
        raise SingularStepError(f"zero gradient with optimality gap {gap:.3e}", state.k)
    beta = cfg.beta
    step = state.x - state.x_prev
    inner = float(g @ step)
    eta = gap / gg + beta * inner / gg
    if cfg.variant == "v2":
        eta += 1.0 / (2.0 * cfg.lipschitz)
    truncated = False
    if cfg.truncate and inner < -gap:
        if cfg.variant == "v2":
            eta = (2.0 - beta) / (2.0 * cfg.lipschitz)
        else:
            eta = (1.0 - beta) / (2.0 * cfg.lipschitz)
        truncated = True
    x_next = state.x - eta * g + beta * step
    return HBState(x_next, state.x, state.k + 1, truncated), eta


def mag_step(problem, state, eta, beta, fg=None):
    """Moving-averaged-gradient step ``d = g + beta d; x -= eta d`` with fixed ``eta``."""
    check_positive(eta, "eta")
    _, g = _eval(problem, state.x, fg)
    d = beta * state.d + g
    return MAGState(state.x - eta * d, d, state.k + 1)


def alr_mag_step(problem, state, beta, fg=None, tol=None):
    """MAG step with ``eta = (f(x) - f*) / ||d||^2``."""
    fstar = _fstar(problem)
    f, g = _eval(problem, state.x, fg)
    gap = f - fstar
    if gap <= convergence_threshold(fstar, tol):
        return state, 0.0
    d = beta * state.d + g
    dd = float(d @ d)
    if dd == 0.0:
        raise SingularStepError(f"zero direction with optimality gap {gap:.3e}", state.k)
    eta = gap / dd
    return MAGState(state.x - eta * d, d, state.k + 1), eta


def nag_step(problem, state, eta, beta, fg_y=None):
    """Nesterov step with fixed parameters, gradient taken at ``x + beta v``.

    ``fg_y`` optionally supplies ``(f(y), grad f(y))`` at the look-ahead point.
    """
    check_positive(eta, "eta")
    y = state.x + beta * state.v
    _, g = _eval(problem, y, fg_y)
    v = beta * state.v - eta * g
    return NAGState(state.x + v, v, state.k + 1)


def alr_nag_step(problem, state, beta, tol=None, fg_y=None):
    """Nesterov step with the Polyak step taken at the look-ahead point.

    If the look-ahead point is already optimal the step size is 0 and the
    iterate moves there.
    """
    fstar = _fstar(problem)
    y = state.x + beta * state.v
    f, g = _eval(problem, y, fg_y)
    gap = f - fstar
    if gap <= convergence_threshold(fstar, tol):
        eta = 0.0
    else:
        gg = float(g @ g)
        if gg == 0.0:
            raise SingularStepError(f"zero look-ahead gradient with gap {gap:.3e}", state.k)
        eta = gap / gg
    v = beta * state.v - eta * g
    return NAGState(state.x + v, v, state.k + 1), eta


def l4mom_step(problem, state, beta, alpha, guard=False, fg=None, tol=None):
    """Simplified L4 momentum: ``eta = alpha (f - f*) / <g, d>`` along ``d = g + beta d``.

    No safeguard: ``<g, d>`` may be negative, giving a negative step. With
    ``guard=True`` a non-positive step raises :class:`DivergenceError`.
    """
    fstar = _fstar(problem)
    f, g = _eval(problem, state.x, fg)
    gap = f - fstar
    if gap <= convergence_threshold(fstar, tol):
        return state, 0.0
    d = beta * state.d + g
    denom = float(g @ d)
    if denom == 0.0:
        raise SingularStepError("<g, d> vanished", state.k)
    eta = alpha * gap / denom
    if guard and eta <= 0.0:
        raise DivergenceError(f"non-positive step {eta:.3e}", state.k)
    return MAGState(state.x - eta * d, d, state.k + 1), eta


# -- driver ----------------------------------------------------------------------

ALGORITHMS = ("gd", "gd-polyak", "hb", "hb-optimal", "alr-hb-v1", "alr-hb-v2", "mag",
              "alr-mag", "nag", "nag-optimal", "alr-nag", "l4mom")


@dataclass
class History:
    """In-memory record of a deterministic run.

    Row ``i`` of ``f``/``dist`` refers to iterate ``x_{i+1}``; step arrays
    (``eta``, ``dnorm``, ``gnorm``, ``trunc``) have one entry per step taken.
    ``x`` and ``d`` hold the full path when ``keep_path`` was set.
    ``d[i]`` is the direction used at step ``i+1`` (the gradient for
    heavy-ball methods, the look-ahead gradient for NAG).
    """

    algo: str
    f: list = field(default_factory=list)
    dist: list = field(default_factory=list)
    eta: list = field(default_factory=list)
    dnorm: list = field(default_factory=list)
    gnorm: list = field(default_factory=list)
    trunc: list = field(default_factory=list)
    x: list = None
    d: list = None
    g: list = None
    termination: str = "budget"
    message: str = ""
    fstar: float = None

    def finalize(self):
        for name in ("f", "dist", "eta", "dnorm", "gnorm"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        self.trunc = np.asarray(self.trunc, dtype=bool)
        for name in ("x", "d", "g"):
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, np.asarray(value, dtype=np.float64))
        return self

    @property
    def steps(self):
        return len(self.eta)

    @property
    def gap(self):
        """``f(x_k) - f*`` per recorded iterate (``nan`` when f* is unknown)."""
        if self.fstar is None:
            return np.full(len(self.f), np.nan)
        return self.f - self.fstar


def resolve_params(problem, algo, params):
    """Fill in defaults (optimal parameters, Lipschitz constant) for ``algo``."""
    if algo not in ALGORITHMS:
        raise InvalidArgument(f"unknown algorithm {algo!r}")
    p = dict(params)
    meta = problem.meta
    if algo in ("hb-optimal", "nag-optimal"):
        if meta.strong_convexity is None or meta.lipschitz is None:
            raise InvalidArgument(f"{algo} needs mu and L in the problem metadata")
        fn = optimal_hb_params if algo == "hb-optimal" else optimal_nag_params
        beta, eta = fn(meta.strong_convexity, meta.lipschitz)
        p.setdefault("beta", beta)
        p.setdefault("eta", eta)
    if algo in ("alr-hb-v2",) or p.get("truncate"):
        if p.get("lipschitz") is None:
            if meta.lipschitz is None:
                raise InvalidArgument(f"{algo} needs the Lipschitz constant")
            p["lipschitz"] = meta.lipschitz
    if algo == "alr-hb-v2":
        p.setdefault("truncate", True)
    if algo in ("gd", "hb", "mag", "nag") and p.get("eta") is None:
        raise InvalidArgument(f"{algo} needs a constant step size eta")
    p.setdefault("beta", 0.0)
    if algo in ("gd", "gd-polyak"):
        p["beta"] = 0.0
    return p


def run_deterministic(problem, algo, x0, iters, params=None, keep_path=False,
                      callback=None):
    """Run ``iters`` steps of ``algo`` from ``x0`` and return a :class:`History`.

    Singular steps, guarded L4 divergence and non-finite objective values end
    the run early; ``History.termination`` says why (``budget``,
    ``converged``, ``singular``, ``diverged``).
    """
    p = resolve_params(problem, algo, params or {})
    beta = check_beta(p["beta"])
    tol = p.get("tol")
    cfg = None
    if algo.startswith("alr-hb"):
        cfg = DetConfig(beta=beta, variant=algo[-2:], truncate=bool(p.get("truncate", False)),
                        lipschitz=p.get("lipschitz"), tol=tol)
    x0 = as_vector(x0, problem.dim, name="x0")
    if algo in ("alr-mag", "mag", "l4mom"):
        state = MAGState.start(x0)
    elif algo in ("nag", "nag-optimal", "alr-nag"):
        state = NAGState.start(x0)
    else:
        state = HBState.start(x0)

    xstar = problem.meta.minimizer
    fstar = problem.meta.fstar
    hist = History(algo, fstar=fstar)
    if keep_path:
        hist.x, hist.d, hist.g = [], [], []

    def record_point(x, f):
        hist.f.append(f)
        hist.dist.append(float(np.linalg.norm(x - xstar)) if xstar is not None else math.nan)
        if keep_path:
            hist.x.append(x.copy())

    with np.errstate(over="ignore", invalid="ignore"):
        f, g = problem.value_and_grad(state.x)
        record_point(state.x, f)
        for _ in range(iters):
            if not math.isfinite(f) or not np.all(np.isfinite(g)):
                hist.termination = "diverged"
                break
            if fstar is not None and f - fstar <= convergence_threshold(fstar, tol):
                hist.termination = "converged"
                break
            try:
                state, eta, direction, g_used = _advance(problem, algo, state, p, cfg, (f, g))
            except SingularStepError as exc:
                hist.termination, hist.message = "singular", str(exc)
                break
            except DivergenceError as exc:
                hist.termination, hist.message = "diverged", str(exc)
                break
            hist.eta.append(eta)
            hist.dnorm.append(float(np.linalg.norm(direction)))
            hist.gnorm.append(float(np.linalg.norm(g_used)))
            hist.trunc.append(bool(getattr(state, "truncated", False)))
            if keep_path:
                hist.d.append(direction.copy())
                hist.g.append(g_used.copy())
            f, g = problem.value_and_grad(state.x)
            record_point(state.x, f)
            if callback is not None:
                callback(state, eta)
        else:
            if not math.isfinite(f):
                hist.termination = "diverged"
    return hist.finalize()


def _advance(problem, algo, state, p, cfg, fg):
    beta = p["beta"]
    g = fg[1]
    if algo == "gd-polyak":
        x_next, eta = polyak_gd_step(problem, state.x, fg=fg, tol=p.get("tol"))
        return HBState(x_next, state.x, state.k + 1), eta, g, g
    if algo in ("gd", "hb", "hb-optimal"):
        return hb_step(problem, state, p["eta"], beta, fg=fg), p["eta"], g, g
    if cfg is not None:
        new, eta = alr_hb_step(problem, state, cfg, fg=fg)
        return new, eta, g, g
    if algo == "mag":
        new = mag_step(problem, state, p["eta"], beta, fg=fg)
        return new, p["eta"], new.d, g
    if algo == "alr-mag":
        new, eta = alr_mag_step(problem, state, beta, fg=fg, tol=p.get("tol"))
        return new, eta, new.d, g
    if algo == "l4mom":
        new, eta = l4mom_step(problem, state, beta, p.get("alpha", 0.15),
                              guard=bool(p.get("guard", False)), fg=fg, tol=p.get("tol"))
        return new, eta, new.d, g
    fg_y = problem.value_and_grad(state.x + beta * state.v)
    if algo == "alr-nag":
        new, eta = alr_nag_step(problem, state, beta, tol=p.get("tol"), fg_y=fg_y)
    else:
        new, eta = nag_step(problem, state, p["eta"], beta, fg_y=fg_y), p["eta"]
    return new, eta, fg_y[1], fg_y[1]
