"""Time-varying hyperparameters: step decay, cosine decay, eta_max warmup and
the exponential fine-tuning ramp for ``c``.

Schedules are plain values; :func:`eval_schedule` is a pure function of the
step index.
"""

import math
from dataclasses import asdict, dataclass

from ._validation import InvalidArgument

KINDS = ("constant", "step_decay", "cosine", "warmup_etamax", "finetune_c")


@dataclass(frozen=True)
class Schedule:
    kind: str
    base: float
    total: int = None
    interval: int = None
    mid: int = None
    c_max: float = None
    slope: float = 1e-4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown schedule kind {self.kind!r}")
        if not self.base > 0:
            raise InvalidArgument("schedule base value must be positive")
        if self.kind in ("cosine", "finetune_c") and (self.total is None or self.total < 1):
            raise InvalidArgument(f"{self.kind} needs the total number of steps")
        if self.kind == "step_decay":
            if self.interval is None:
                if self.total is None:
                    raise InvalidArgument("step_decay needs an interval or the total steps")
                object.__setattr__(self, "interval", math.ceil(self.total / 3))
            if self.interval < 1:
                raise InvalidArgument("decay interval must be positive")
        if self.kind == "finetune_c":
            if self.mid is None:
                object.__setattr__(self, "mid", int(0.8 * self.total))
            if self.c_max is None:
                object.__setattr__(self, "c_max", 100.0 * self.base)
            if not 0 <= self.mid < self.total:
                raise InvalidArgument("finetune_c needs 0 <= mid < total")
        if self.kind == "warmup_etamax" and not self.slope > 0:
            raise InvalidArgument("warmup slope must be positive")

    def __call__(self, k):
        return eval_schedule(self, k)

    def to_dict(self):
        return {key: value for key, value in asdict(self).items() if value is not None}

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def constant(value):
    return Schedule("constant", value)


def eval_schedule(s, k):
    """Value of schedule ``s`` at step ``k``."""
    if k < 0:
        raise InvalidArgument("step index must be non-negative")
    if s.kind == "constant":
        return s.base
    if s.kind == "step_decay":
        # underflows to 0 rather than overflowing for absurdly many decays
        return s.base * 10.0 ** -(k // s.interval)
    if s.kind == "warmup_etamax":
        return s.base * min(s.slope * k, 1.0)
    if k > s.total:
        raise InvalidArgument(f"step {k} is past the schedule horizon {s.total}")
    if s.kind == "cosine":
        return 0.5 * s.base * (math.cos(k * math.pi / s.total) + 1.0)
    # finetune_c
    if k <= s.mid:
        return s.base
    frac = (k - s.mid) / (s.total - s.mid)
    return s.base * math.exp(frac * math.log(s.c_max / s.base))
