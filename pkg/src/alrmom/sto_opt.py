"""Stochastic momentum methods with adaptive step sizes, and the epoch loop.

Steps take a mini-batch of sample indices and use the batch mean loss and
gradient. The per-batch optimal value comes from the ``fstar_policy`` of
the config: ``"zero"`` (the default, right for unregularized surrogate
losses) or ``"per_batch_table"`` (looked up on the problem).
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from ._validation import InvalidArgument, as_vector, check_beta, check_positive
from .det_opt import HBState, MAGState
from .schedules import Schedule, eval_schedule
from .trace import Trace

DEFAULT_EPSILON = 1e-5
FULL_LOSS_EVERY_STEP_MAX_N = 10_000


@dataclass(frozen=True)
class StoConfig:
    beta: float = 0.9
    c: float = 1.0
    eta_max: float = math.inf
    epsilon: float = DEFAULT_EPSILON
    weight_decay: float = 0.0
    batch_size: int = 32
    fstar_policy: str = "zero"
    clamp: bool = True

    def __post_init__(self):
        check_beta(self.beta)
        check_positive(self.c, "c")
        check_positive(self.eta_max, "eta_max")
        if self.epsilon < 0:
            raise InvalidArgument("epsilon must be non-negative")
        if self.weight_decay < 0:
            raise InvalidArgument("weight_decay must be non-negative")
        if int(self.batch_size) < 1:
            raise InvalidArgument("batch_size must be positive")
        if self.fstar_policy not in ("zero", "per_batch_table"):
            raise InvalidArgument(f"unknown fstar_policy {self.fstar_policy!r}")

    def require_theory_regime(self):
        """The semi-strongly convex guarantees need ``c > 1``."""
        if not self.c > 1:
            raise InvalidArgument("convergence guarantees require c > 1")


class BatchSampler:
    """Mini-batches without replacement, reshuffled every epoch.

    The last batch of an epoch is smaller when ``batch_size`` does not
    divide ``n``.
    """

    def __init__(self, n, batch_size, seed):
        if n < 1 or batch_size < 1:
            raise InvalidArgument("n and batch_size must be positive")
        self.n = int(n)
        self.batch_size = min(int(batch_size), self.n)
        self.rng = np.random.default_rng(seed)

    def epoch(self):
        order = self.rng.permutation(self.n)
        for start in range(0, self.n, self.batch_size):
            yield order[start:start + self.batch_size]

    @property
    def batches_per_epoch(self):
        return math.ceil(self.n / self.batch_size)


def _batch_fstar(sproblem, batch, cfg):
    if cfg is not None and cfg.fstar_policy == "per_batch_table":
        return sproblem.batch_fstar(batch)
    return 0.0


def sgdm_step(sproblem, state, batch, eta, beta, fg=None):
    """SGD with heavy-ball momentum and a fixed step size."""
    check_positive(eta, "eta")
    _, g = sproblem.batch_value_and_grad(state.x, batch) if fg is None else fg
    x_next = state.x - eta * g + beta * (state.x - state.x_prev)
    return HBState(x_next, state.x, state.k + 1)


def sps_max_step(sproblem, x, batch, c, eta_max, epsilon=DEFAULT_EPSILON, fstar_s=0.0, fg=None):
    """Plain SGD with the capped stochastic Polyak step (the SPS_max baseline)."""
    f, g = sproblem.batch_value_and_grad(x, batch) if fg is None else fg
    eta = min((f - fstar_s) / (c * float(g @ g) + epsilon), eta_max)
    return x - eta * g, eta


def alr_smag_step(sproblem, state, batch, cfg, eta_max_now, c_now=None, fg=None):
    """ALR-SMAG: ``d = beta d + g_S``, ``eta = min((f_S - f*_S)/(c ||d||^2 + eps), eta_max)``."""
    c = cfg.c if c_now is None else c_now
    f, g = sproblem.batch_value_and_grad(state.x, batch) if fg is None else fg
    d = cfg.beta * state.d + g
    eta = min((f - _batch_fstar(sproblem, batch, cfg)) / (c * float(d @ d) + cfg.epsilon),
              eta_max_now)
    return MAGState(state.x - eta * d, d, state.k + 1), eta


def alr_shb_step(sproblem, state, batch, cfg, eta_max_now, c_now=None, fg=None):
    """ALR-SHB: stochastic heavy ball with the momentum-corrected Polyak step.

    The raw step can be negative; with ``cfg.clamp`` it is clamped at 0 and
    ``state.truncated`` is set on the returned state.
    """
    c = cfg.c if c_now is None else c_now
    f, g = sproblem.batch_value_and_grad(state.x, batch) if fg is None else fg
    gg = float(g @ g)
    step = state.x - state.x_prev
    eta = ((f - _batch_fstar(sproblem, batch, cfg)) / (c * gg + cfg.epsilon)
           + cfg.beta * float(g @ step) / (gg + cfg.epsilon))
    truncated = False
    if cfg.clamp and eta < 0.0:
        eta, truncated = 0.0, True
    eta = min(eta, eta_max_now)
    x_next = state.x - eta * g + cfg.beta * step
    return HBState(x_next, state.x, state.k + 1, truncated), eta


def alr_smag_wd_step(sproblem, state, batch, cfg, c_now, eta_max_now, fg=None):
    """ALR-SMAG with decoupled weight decay: moves along ``d + lambda x``.

    The step uses the raw batch loss (``f*_S = 0``) so the decay term never
    enters the optimal-value estimate.
    """
    f, g = sproblem.batch_value_and_grad(state.x, batch) if fg is None else fg
    d = cfg.beta * state.d + g
    eta = min(eta_max_now, f / (c_now * float(d @ d) + cfg.epsilon))
    x_next = state.x - eta * (d + cfg.weight_decay * state.x)
    return MAGState(x_next, d, state.k + 1), eta


STO_ALGORITHMS = ("sgd", "sgdm", "sps-max", "alr-smag", "alr-shb", "alr-smag-wd")


@dataclass(frozen=True)
class StoOptimizer:
    """Algorithm choice for :func:`run_epochs`; ``eta`` is the SGD(M) step size."""

    name: str
    cfg: StoConfig = StoConfig()
    eta: float = None

    def __post_init__(self):
        if self.name not in STO_ALGORITHMS:
            raise InvalidArgument(f"unknown stochastic algorithm {self.name!r}")
        if self.name in ("sgd", "sgdm") and self.eta is None:
            raise InvalidArgument(f"{self.name} needs a step size eta")


def _schedule_value(schedules, key, k, default):
    s = schedules.get(key) if schedules else None
    if s is None:
        return default
    if isinstance(s, Schedule):
        return eval_schedule(s, k)
    return float(s)


def run_epochs(sproblem, optimizer, schedules=None, epochs=1, seed=0, x0=None,
               record_time=False):
    """Run ``epochs`` passes over the data and return a :class:`Trace`.

    ``schedules`` may map ``"eta_max"``, ``"c"`` and ``"eta"`` to a
    :class:`Schedule` (or a constant); they are evaluated at the global step
    ``k`` starting from 1. One row is recorded per step plus a final row for
    the last iterate. ``f`` is the batch loss; ``f_gap`` is the full loss
    minus ``fstar`` (0 when unknown), evaluated every step for
    ``n <= 10_000`` and otherwise only at epoch boundaries.
    ``trace.extras["epoch_loss"]`` holds the full loss at the start and after
    every epoch.
    """
    if epochs < 1:
        raise InvalidArgument("epochs must be at least 1")
    cfg = optimizer.cfg
    name = optimizer.name
    x = np.zeros(sproblem.dim) if x0 is None else as_vector(x0, sproblem.dim, name="x0")
    hb_like = name in ("sgd", "sgdm", "alr-shb", "sps-max")
    state = HBState.start(x) if hb_like else MAGState.start(x)
    beta = 0.0 if name == "sgd" else cfg.beta
    sampler = BatchSampler(sproblem.n_samples, cfg.batch_size, seed)
    fstar = sproblem.meta.fstar if sproblem.meta.fstar is not None else 0.0
    xstar = sproblem.meta.minimizer
    every_step = sproblem.n_samples <= FULL_LOSS_EVERY_STEP_MAX_N

    trace = Trace(meta={"algo": name, "termination": "budget"})
    epoch_loss = [sproblem.value(state.x)]
    gnorms = []
    k = 1
    clock = time.perf_counter()
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, epochs + 1):
            for i, batch in enumerate(sampler.epoch()):
                f_s, g = sproblem.batch_value_and_grad(state.x, batch)
                if every_step or i == 0:
                    full = epoch_loss[-1] if i == 0 else sproblem.value(state.x)
                    gap = full - fstar
                else:
                    gap = math.nan
                eta_max_now = _schedule_value(schedules, "eta_max", k, cfg.eta_max)
                c_now = _schedule_value(schedules, "c", k, cfg.c)
                fg = (f_s, g)
                dist = float(np.linalg.norm(state.x - xstar)) if xstar is not None else math.nan
                try:
                    state, eta, direction = _sto_advance(
                        sproblem, name, state, batch, cfg, optimizer, schedules, k,
                        eta_max_now, c_now, beta, fg)
                except Exception as exc:
                    exc.args = (f"step {k}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
                    raise
                gnorms.append(float(np.linalg.norm(g)))
                wall = (time.perf_counter() - clock) * 1e3 if record_time else 0.0
                trace.append(k, epoch, f_s, gap, eta, float(np.linalg.norm(direction)), dist,
                             getattr(state, "truncated", False), wall)
                k += 1
                if not np.all(np.isfinite(state.x)):
                    trace.meta["termination"] = "diverged"
                    break
            if trace.meta["termination"] == "diverged":
                break
            epoch_loss.append(sproblem.value(state.x))
    final_full = sproblem.value(state.x) if trace.meta["termination"] != "diverged" else math.inf
    dist = float(np.linalg.norm(state.x - xstar)) if xstar is not None else math.nan
    trace.append(k, epoch, math.nan, final_full - fstar, math.nan, math.nan, dist, False,
                 (time.perf_counter() - clock) * 1e3 if record_time else 0.0)
    trace.extras["epoch_loss"] = np.asarray(epoch_loss)
    trace.extras["gnorm"] = np.asarray(gnorms)
    trace.extras["final_x"] = state.x
    return trace.finalize()


def _sto_advance(sproblem, name, state, batch, cfg, optimizer, schedules, k, eta_max_now,
                 c_now, beta, fg):
    g = fg[1]
    if name in ("sgd", "sgdm"):
        eta = _schedule_value(schedules, "eta", k, optimizer.eta)
        return sgdm_step(sproblem, state, batch, eta, beta, fg=fg), eta, g
    if name == "sps-max":
        x_next, eta = sps_max_step(sproblem, state.x, batch, c_now, eta_max_now, cfg.epsilon,
                                   _batch_fstar(sproblem, batch, cfg), fg=fg)
        return HBState(x_next, state.x, state.k + 1), eta, g
    if name == "alr-shb":
        new, eta = alr_shb_step(sproblem, state, batch, cfg, eta_max_now, c_now, fg=fg)
        return new, eta, g
    if name == "alr-smag":
        new, eta = alr_smag_step(sproblem, state, batch, cfg, eta_max_now, c_now, fg=fg)
        return new, eta, new.d
    new, eta = alr_smag_wd_step(sproblem, state, batch, cfg, c_now, eta_max_now, fg=fg)
    return new, eta, new.d
