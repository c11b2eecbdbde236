"""Learning-rate range test.

A throwaway copy of the model is trained for one mini-batch per learning rate
while the rate grows geometrically from ``lr_start`` to ``lr_end``.  The
bias-corrected exponential average of the loss is recorded, and the sweep
stops early once that average blows up.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable

import numpy as np

from . import autodiff as ad
from .errors import NoDescentError, ValidationError
from .optim import SgdmState, sgdm_step

LossFn = Callable[[Any, Any], ad.Tensor]

MIN_POINTS = 10
MIN_DESCENDING = 5


class StopReason(str, Enum):
    COMPLETED = "Completed"
    DIVERGED = "Diverged"


class Rule(str, Enum):
    STEEPEST = "Steepest"
    MIN_OVER_TEN = "MinOverTen"


@dataclass
class SweepPoint:
    iteration: int
    lr: float
    raw_loss: float
    smoothed_loss: float


@dataclass
class SweepRecord:
    points: list[SweepPoint] = field(default_factory=list)
    stop_reason: StopReason = StopReason.COMPLETED

    @property
    def lrs(self) -> np.ndarray:
        return np.array([p.lr for p in self.points])

    @property
    def smoothed(self) -> np.ndarray:
        return np.array([p.smoothed_loss for p in self.points])

    @property
    def raw(self) -> np.ndarray:
        return np.array([p.raw_loss for p in self.points])

    def to_csv(self) -> str:
        lines = ["iteration,lr,raw_loss,smoothed_loss"]
        lines += [f"{p.iteration},{p.lr!r},{p.raw_loss!r},{p.smoothed_loss!r}" for p in self.points]
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def sweep_lrs(lr_start: float, lr_end: float, num_iters: int) -> np.ndarray:
    i = np.arange(num_iters)
    return lr_start * (lr_end / lr_start) ** (i / (num_iters - 1))


def lr_range_test(model, data_stream: Iterable, loss_fn: LossFn, lr_start: float = 1e-5,
                  lr_end: float = 10.0, num_iters: int = 200, beta: float = 0.98,
                  divergence_factor: float = 4.0, momentum: float = 0.9,
                  weight_decay: float = 0.0) -> SweepRecord:
    """Sweep learning rates on a deep copy of ``model``.

    ``loss_fn(model, batch)`` must return a scalar tensor built from the
    model's parameters; ``model.parameters()`` must list them.  The caller's
    model is never touched.
    """
    if not 0 < lr_start < lr_end:
        raise ValidationError(f"need 0 < lr_start < lr_end, got {lr_start}, {lr_end}")
    if num_iters < MIN_POINTS:
        raise ValidationError(f"num_iters must be at least {MIN_POINTS}, got {num_iters}")
    if not 0 <= beta < 1:
        raise ValidationError(f"beta must be in [0, 1), got {beta}")
    if divergence_factor <= 1:
        raise ValidationError(f"divergence_factor must exceed 1, got {divergence_factor}")

    trainee = copy.deepcopy(model)
    params = trainee.parameters()
    for p in params:
        p.zero_grad()
    state = SgdmState(momentum, weight_decay)
    record = SweepRecord()
    avg = 0.0
    best = math.inf
    stream = iter(data_stream)
    for i, lr in enumerate(sweep_lrs(lr_start, lr_end, num_iters)):
        try:
            batch = next(stream)
        except StopIteration:
            if i == 0:
                raise ValidationError("data stream is empty") from None
            break
        loss = loss_fn(trainee, batch)
        raw = loss.item()
        avg = beta * avg + (1.0 - beta) * raw
        smoothed = avg / (1.0 - beta ** (i + 1))
        record.points.append(SweepPoint(i, float(lr), raw, smoothed))
        if not math.isfinite(smoothed) or smoothed > divergence_factor * best:
            record.stop_reason = StopReason.DIVERGED
            break
        best = min(best, smoothed)
        ad.backward(loss)
        if not all(np.all(np.isfinite(p.grad)) for p in params):
            record.stop_reason = StopReason.DIVERGED
            break
        sgdm_step(params, state, float(lr))
    return record


def select_lr(sweep: SweepRecord, rule: Rule | str = Rule.STEEPEST) -> float:
    """Pick a training learning rate from a sweep.

    ``Steepest`` returns the rate where the smoothed loss falls fastest per
    unit of log learning rate (first differences); it falls back to
    ``MinOverTen`` when fewer than five steps descend.  ``MinOverTen`` returns
    the rate at the smoothed-loss minimum divided by ten.  The diverged final
    point, if any, is ignored.
    """
    rule = Rule(rule)
    pts = sweep.points[:-1] if sweep.stop_reason is StopReason.DIVERGED else list(sweep.points)
    if len(pts) < MIN_POINTS:
        raise ValidationError(f"need at least {MIN_POINTS} pre-divergence points, got {len(pts)}")
    lrs = np.array([p.lr for p in pts])
    smooth = np.array([p.smoothed_loss for p in pts])
    slopes = np.diff(smooth) / np.diff(np.log(lrs))
    descending = int((slopes < 0).sum())
    if descending == 0:
        raise NoDescentError("smoothed loss never decreased during the sweep")
    if rule is Rule.STEEPEST and descending >= MIN_DESCENDING:
        return float(lrs[int(np.argmin(slopes))])
    return float(lrs[int(np.argmin(smooth))] / 10.0)
