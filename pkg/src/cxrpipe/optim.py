"""SGD with momentum and cosine annealing with warm restarts."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import Parameter
from .errors import DivergenceError, ValidationError


@dataclass
class SgdmState:
    """Velocity buffers keyed by parameter name.

    Update rule, per parameter::

        g = grad + weight_decay * p
        v = momentum * v + g
        p = p - lr * v
    """

    momentum: float = 0.9
    weight_decay: float = 0.0
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValidationError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValidationError(f"weight_decay must be non-negative, got {self.weight_decay}")

    def reset(self) -> None:
        self.velocity.clear()


def sgdm_step(params: Sequence[Parameter], state: SgdmState, lr: float) -> None:
    """Apply one SGDM update in place, then zero the gradients."""
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise DivergenceError(f"non-finite gradient in parameter {p.name!r}", parameter=p.name)
    for p in params:
        g = p.grad + state.weight_decay * p.data if state.weight_decay else p.grad
        v = state.velocity.get(p.name)
        if v is None:
            v = state.velocity[p.name] = np.zeros_like(p.data)
        v *= state.momentum
        v += g
        p.data -= lr * v
        p.grad[...] = 0.0


@dataclass(frozen=True)
class SgdrSchedule:
    """Cosine annealing between ``eta_max`` and ``eta_min`` with warm restarts.

    Cycle ``i`` lasts ``t0 * t_mult**i`` steps; at the end of a cycle the
    learning rate jumps back to ``eta_max``.
    """

    eta_max: float
    eta_min: float = 0.0
    t0: int = 1
    t_mult: int = 2
    cycle_index: int = 0
    step_in_cycle: int = 0

    def __post_init__(self):
        if not (self.eta_min >= 0 and self.eta_max > self.eta_min):
            raise ValidationError(f"need 0 <= eta_min < eta_max, got {self.eta_min}, {self.eta_max}")
        if self.t0 < 1 or self.t_mult < 1:
            raise ValidationError(f"t0 and t_mult must be positive, got {self.t0}, {self.t_mult}")

    @property
    def cycle_length(self) -> int:
        return self.t0 * self.t_mult ** self.cycle_index

    def lr(self) -> float:
        frac = self.step_in_cycle / self.cycle_length
        return self.eta_min + 0.5 * (self.eta_max - self.eta_min) * (1.0 + math.cos(math.pi * frac))

    def advance(self) -> "SgdrSchedule":
        step = self.step_in_cycle + 1
        if step >= self.cycle_length:
            return replace(self, cycle_index=self.cycle_index + 1, step_in_cycle=0)
        return replace(self, step_in_cycle=step)

    def state(self) -> dict:
        return {"kind": "sgdr", "eta_max": self.eta_max, "eta_min": self.eta_min, "t0": self.t0,
                "t_mult": self.t_mult, "cycle_index": self.cycle_index,
                "step_in_cycle": self.step_in_cycle}


@dataclass(frozen=True)
class ConstantSchedule:
    """Fixed learning rate; used by the no-annealing ablation variants."""

    eta: float
    steps: int = 0

    def lr(self) -> float:
        return self.eta

    def advance(self) -> "ConstantSchedule":
        return replace(self, steps=self.steps + 1)

    def state(self) -> dict:
        return {"kind": "constant", "eta": self.eta, "steps": self.steps}


Schedule = SgdrSchedule | ConstantSchedule


def schedule_from_state(state: dict) -> Schedule:
    state = dict(state)
    kind = state.pop("kind")
    if kind == "sgdr":
        return SgdrSchedule(**state)
    if kind == "constant":
        return ConstantSchedule(**state)
    raise ValidationError(f"unknown schedule kind {kind!r}")


def lr_at(schedule: Schedule) -> float:
    return schedule.lr()


def advance(schedule: Schedule) -> Schedule:
    return schedule.advance()


def lr_trace(schedule: Schedule, n_steps: int) -> list[float]:
    out = []
    for _ in range(n_steps):
        out.append(schedule.lr())
        schedule = schedule.advance()
    return out


def restart_steps(schedule: SgdrSchedule, n_steps: int) -> list[int]:
    """Global step indices (1-based count of advances) at which a restart happens."""
    out = []
    for step in range(1, n_steps + 1):
        nxt = schedule.advance()
        if nxt.cycle_index != schedule.cycle_index:
            out.append(step)
        schedule = nxt
    return out


def write_schedule_csv(schedule: Schedule, n_steps: int, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("global_step", "lr"))
        for i, lr in enumerate(lr_trace(schedule, n_steps)):
            w.writerow((i, repr(lr)))
