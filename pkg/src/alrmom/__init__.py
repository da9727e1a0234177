"""Adaptive Polyak-type step sizes for momentum methods.

Deterministic and stochastic heavy-ball, moving-averaged-gradient and
Nesterov variants whose step size is chosen from the optimality gap, plus
test problems, schedules, numerical checks of their convergence guarantees
and an experiment harness with a CLI.
"""

from ._validation import (ConfigError, DivergenceError, InvalidArgument, ParseError,
                          SingularStepError)
from .det_opt import (ALGORITHMS, DetConfig, HBState, History, MAGState, NAGState,
                      alr_hb_step, alr_mag_step, alr_nag_step, hb_step, l4mom_step, mag_step,
                      nag_step, optimal_hb_params, optimal_nag_params, polyak_gd_step,
                      run_deterministic)
from .problems import (LogisticProblem, PolyhedralProblem, ProblemMeta, QuadraticProblem,
                       gen_least_squares, gen_logistic_overlap, gen_logistic_synthetic,
                       gen_two_dim_quadratic, make_problem, parse_libsvm, serialize_libsvm)
from .schedules import Schedule, eval_schedule
from .sto_opt import (BatchSampler, StoConfig, StoOptimizer, alr_shb_step, alr_smag_step,
                      alr_smag_wd_step, run_epochs, sgdm_step, sps_max_step)
from .trace import Trace, read_trace, write_trace

__version__ = "0.1.0"
