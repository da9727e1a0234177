"""Numerical checks of the convergence guarantees on recorded runs.

Every check is a pure function of a run and its parameters and returns a
:class:`CheckReport`. A run may be a deterministic :class:`History`, a
:class:`Trace` (deterministic or stochastic) or plain arrays. Per-step
inequalities use an additive slack of ``1e-9`` on a scale of
``max(1, magnitude)``; geometric bounds use a multiplicative ``1 + 1e-6``.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from ._validation import InvalidArgument, check_beta
from .det_opt import History
from .trace import Trace

STEP_SLACK = 1e-9
GEOMETRIC_SLACK = 1e-6


@dataclass(frozen=True)
class CheckReport:
    check_name: str
    passed: bool
    worst_violation: float
    worst_step: int
    tolerance: float

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class RateFit:
    rho_hat: float
    r_squared: float
    window: tuple


def _report(name, violations, tolerance, first_step=1):
    """Build a report from per-step violations (``v <= tolerance`` is fine)."""
    v = np.asarray(violations, dtype=np.float64)
    if v.size == 0:
        return CheckReport(name, True, 0.0, 0, float(tolerance))
    # nan means the quantity blew up; treat it as the worst possible violation
    v = np.where(np.isnan(v), np.inf, v)
    i = int(np.argmax(v))
    worst = float(v[i])
    return CheckReport(name, bool(worst <= tolerance), worst, i + first_step, float(tolerance))


@dataclass(frozen=True)
class RunSeries:
    """Per-iterate arrays of a run.

    ``dist`` and ``gap`` have one entry per iterate ``x_1 .. x_{K+1}``;
    ``eta``, ``dnorm`` and ``gnorm`` one per step ``1 .. K``.
    """

    dist: np.ndarray
    gap: np.ndarray
    eta: np.ndarray
    dnorm: np.ndarray
    gnorm: np.ndarray = None


def as_series(run):
    if isinstance(run, RunSeries):
        return run
    if isinstance(run, History):
        return RunSeries(run.dist, run.gap, run.eta, run.dnorm, run.gnorm)
    if isinstance(run, Trace):
        gnorm = run.extras.get("gnorm")
        return RunSeries(run["dist"], run["f_gap"], run["eta"][:-1], run["dnorm"][:-1],
                         None if gnorm is None else np.asarray(gnorm))
    dist = np.asarray(run, dtype=np.float64)
    return RunSeries(dist, np.full(dist.shape, np.nan), np.empty(0), np.empty(0))


def check_lemma_inner_product(hist, xstar, tol=STEP_SLACK):
    """``<d_{k-1}, x_k - x*> >= 0`` along a run recorded with ``keep_path``.

    The violation at step ``k`` is ``-<d_{k-1}, x_k - x*>`` divided by
    ``|d_{k-1}| max(1, |x_k|, |x*|)``, the size of the rounding error in
    the product once ``x_k`` is near ``x*``.
    """
    if xstar is None:
        raise InvalidArgument("the inner product check needs the minimizer x*")
    if hist.x is None or hist.d is None:
        raise InvalidArgument("run was not recorded with keep_path=True")
    xstar = np.asarray(xstar, dtype=np.float64)
    steps = len(hist.d)
    violations = [0.0]  # k = 1: d_0 = 0
    for k in range(2, steps + 2):
        d_prev = hist.d[k - 2]
        e = hist.x[k - 1] - xstar
        scale = float(np.linalg.norm(d_prev)) * max(1.0, float(np.linalg.norm(hist.x[k - 1])),
                                                    float(np.linalg.norm(xstar)))
        violations.append(-float(d_prev @ e) / scale if scale > 0 else 0.0)
    return _report("lemma_inner_product", violations, tol)


def check_monotone_distance(run, mode="convex", lipschitz=None, beta=None, slack=STEP_SLACK):
    """Per-step distance decrease of the adaptive MAG step.

    ``mode="convex"``: ``|x_{k+1}-x*|^2 <= |x_k-x*|^2 - eta_k gap_k``.
    ``mode="smooth"``: the decrease is ``(eta_k + (1-beta)/L) gap_k``.
    Violations are measured relative to ``max(1, |x_k-x*|^2)``.
    """
    s = as_series(run)
    if mode == "smooth":
        if lipschitz is None or beta is None:
            raise InvalidArgument("smooth mode needs lipschitz and beta")
        check_beta(beta)
        extra = (1.0 - beta) / lipschitz
    elif mode == "convex":
        extra = 0.0
    else:
        raise InvalidArgument(f"unknown mode {mode!r}")
    k = min(len(s.eta), len(s.dist) - 1)
    d2 = s.dist ** 2
    lhs = d2[1:k + 1]
    rhs = d2[:k] - (s.eta[:k] + extra) * s.gap[:k]
    violations = (lhs - rhs) / np.maximum(1.0, d2[:k])
    return _report(f"monotone_distance_{mode}", violations, slack)


def check_rate_bound(run, rho, rel=GEOMETRIC_SLACK, name="rate_bound"):
    """``|x_k-x*|^2 <= (1-rho)^(k-1) |x_1-x*|^2 (1+rel)`` for every recorded k.

    Compared in the log domain; the violation is
    ``log(|x_k-x*|^2 / bound)`` and the tolerance ``log(1+rel)``.
    """
    if not 0 <= rho <= 1:
        raise InvalidArgument("rho must lie in [0, 1]")
    dist = as_series(run).dist
    if dist.size == 0 or dist[0] == 0:
        return _report(name, [], math.log1p(rel))
    with np.errstate(divide="ignore", invalid="ignore"):
        log_d2 = 2.0 * np.log(dist)
        log_factor = math.log1p(-rho) if rho < 1 else -math.inf
        steps = np.arange(dist.size, dtype=np.float64)
        log_bound = 2.0 * math.log(dist[0]) + (steps * log_factor if rho < 1
                                                else np.where(steps == 0, 0.0, -np.inf))
        violations = np.where(np.isneginf(log_d2), -np.inf, log_d2 - log_bound)
    return _report(name, violations, math.log1p(rel))


def mag_rate(beta, kappa):
    """Contraction constant ``(1-beta)/(2 kappa)`` of the adaptive MAG step."""
    return (1.0 - check_beta(beta)) / (2.0 * kappa)


def truncated_hb_rate(kappa):
    """Rate constant ``(4 - sqrt 15)/(2 (sqrt kappa + 1))`` of truncated ALR-HB(v2)."""
    return (4.0 - math.sqrt(15.0)) / (2.0 * (math.sqrt(kappa) + 1.0))


def polyhedral_rate(beta, G, kappa1):
    """Contraction constant ``(1-beta)^2 kappa1^2 / G^2`` on polyhedral problems."""
    return min(1.0, (1.0 - check_beta(beta)) ** 2 * kappa1 ** 2 / G ** 2)


def check_polyhedral_rate(run, beta, G, kappa1, rel=GEOMETRIC_SLACK):
    """Geometric decrease of ``|x_k - x*|^2`` with factor ``1 - (1-beta)^2 kappa1^2/G^2``."""
    return check_rate_bound(run, polyhedral_rate(beta, G, kappa1), rel, name="polyhedral_rate")


def check_dk_recurrence(run, beta, slack=STEP_SLACK):
    """``|d_k|^2 <= beta |d_{k-1}|^2 + |g_k|^2 / (1-beta)`` with ``d_0 = 0``."""
    check_beta(beta)
    s = as_series(run)
    if s.gnorm is None:
        raise InvalidArgument("run does not carry gradient norms")
    n = min(len(s.dnorm), len(s.gnorm))
    d2 = s.dnorm[:n] ** 2
    g2 = s.gnorm[:n] ** 2
    prev = np.concatenate(([0.0], d2[:-1]))
    rhs = beta * prev + g2 / (1.0 - beta)
    return _report("dk_recurrence", (d2 - rhs) / np.maximum(1.0, rhs), slack)


def truncated_hb_terms(hist, problem, beta, lipschitz):
    """Per-step quantities of the two-step form of truncated ALR-HB(v2) on least squares.

    Returns ``(lhs, contracted, correction_sq, cross)`` with
    ``lhs = |[x_{k+1}-x*; x_k-x*]|^2``,
    ``contracted = |M [x_k-x*; x_{k-1}-x*]|^2`` for the fixed-step matrix
    ``M`` with step ``(2-beta)/(2L)``, ``correction_sq = eta_tilde^2 |g_k|^2``
    and ``cross = 2 eta_tilde (gap_k - |g_k|^2/(2L))``, so that
    ``lhs = contracted - correction_sq - cross`` exactly.
    """
    if hist.x is None:
        raise InvalidArgument("run was not recorded with keep_path=True")
    H = problem.hessian()
    xstar = problem.meta.minimizer
    fstar = problem.meta.fstar
    alpha = (2.0 - beta) / (2.0 * lipschitz)
    xs = hist.x
    out = []
    for k in range(len(hist.eta)):
        e, e_prev = xs[k] - xstar, (xs[k - 1] if k > 0 else xs[0]) - xstar
        e_next = xs[k + 1] - xstar
        g = H @ e
        gg = float(g @ g)
        gap = hist.f[k] - fstar
        inner = float(g @ (e - e_prev))
        eta_t = 0.0 if inner < -gap else gap / gg + beta * inner / gg - (1 - beta) / (2 * lipschitz)
        top = (1.0 + beta) * e - beta * e_prev - alpha * g
        lhs = float(e_next @ e_next + e @ e)
        contracted = float(top @ top + e @ e)
        out.append((lhs, contracted, eta_t ** 2 * gg, 2.0 * eta_t * (gap - gg / (2 * lipschitz))))
    return np.asarray(out).reshape(-1, 4)


def check_truncated_hb_identity(hist, problem, beta, lipschitz, mode="stated", rel=1e-8,
                                floor=1e-16):
    """Check the two-step norm relation of truncated ALR-HB(v2) on least squares.

    ``mode="stated"`` tests ``lhs == contracted - eta_tilde^2 |g|^2``;
    ``mode="inequality"`` tests ``lhs <= contracted - eta_tilde^2 |g|^2``;
    ``mode="exact"`` adds the cross term ``2 eta_tilde (gap - |g|^2/(2L))``.
    Violations are relative to ``lhs`` and only steps with ``lhs`` above
    ``floor`` times its first value are used, since below that rounding
    dominates.
    """
    terms = truncated_hb_terms(hist, problem, beta, lipschitz)
    if terms.shape[0] == 0:
        return _report(f"truncated_hb_identity_{mode}", [], rel)
    lhs, contracted, corr, cross = terms.T
    keep = lhs > floor * lhs[0]
    if mode == "stated":
        v = np.abs(lhs - (contracted - corr)) / lhs
    elif mode == "inequality":
        v = (lhs - (contracted - corr)) / lhs
    elif mode == "exact":
        v = np.abs(lhs - (contracted - corr - cross)) / lhs
    else:
        raise InvalidArgument(f"unknown mode {mode!r}")
    return _report(f"truncated_hb_identity_{mode}", np.where(keep, v, -np.inf), rel)


def finite_diff_gradient(problem, x, h=1e-6):
    """Central-difference gradient of ``problem.value`` at ``x``."""
    if not h > 0:
        raise InvalidArgument("h must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    e = np.zeros_like(x)
    for i in range(x.size):
        e[i] = h
        grad[i] = (problem.value(x + e) - problem.value(x - e)) / (2.0 * h)
        e[i] = 0.0
    return grad


def fit_linear_rate(series, window=None):
    """Least-squares fit of ``log series`` against the index.

    ``rho_hat = 1 - exp(slope)``. ``window`` is a ``(start, stop)`` slice of
    the series; the default uses all of it.
    """
    y = np.asarray(series, dtype=np.float64)
    start, stop = (0, y.size) if window is None else window
    y = y[start:stop]
    if y.size < 2:
        raise InvalidArgument("need at least two points to fit a rate")
    if not np.all(y > 0) or not np.all(np.isfinite(y)):
        raise InvalidArgument("series must be positive and finite over the window")
    t = np.arange(y.size, dtype=np.float64)
    log_y = np.log(y)
    if np.ptp(log_y) == 0:
        return RateFit(0.0, 1.0, (int(start), int(stop)))
    slope, intercept = np.polyfit(t, log_y, 1)
    resid = log_y - (slope * t + intercept)
    ss_tot = float(np.sum((log_y - log_y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot
    return RateFit(float(-math.expm1(slope)), r2, (int(start), int(stop)))


def floor_window(series, floor=1e-16):
    """``(0, stop)`` covering the leading part of ``series`` above ``floor * series[0]``."""
    y = np.asarray(series, dtype=np.float64)
    below = np.nonzero(~(y > floor * y[0]))[0]
    return (0, int(below[0]) if below.size else int(y.size))


def median_trajectory(series_list):
    """Element-wise median of several runs, truncated to the shortest one."""
    if not series_list:
        raise InvalidArgument("need at least one series")
    n = min(len(s) for s in series_list)
    return np.median(np.stack([np.asarray(s, dtype=np.float64)[:n] for s in series_list]),
                     axis=0)
