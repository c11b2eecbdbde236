"""Training pipeline: LR range test, then progressive-resizing fine-tuning.

Each stage trains the same weights at a larger image side.  Optimizer
velocities and the learning-rate schedule restart at every stage boundary,
while batch-norm running statistics carry over.

Ablation variants:

* ``Proposed`` - every size in ``sizes``, cosine annealing with warm restarts
* ``V1``       - only the largest size, cosine annealing with warm restarts
* ``V2``       - every size, constant learning rate
* ``V3``       - only the largest size, constant learning rate

Single-size variants train ``len(sizes) * epochs_per_stage`` epochs so every
variant sees the same number of epochs.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import load_checkpoint, save_checkpoint
from .data.loader import ImageDataset, batches, num_batches
from .data.splits import TEST, TRAIN, VAL, SplitAssignment
from .errors import DivergenceError, ValidationError
from .lrfinder import Rule, SweepRecord, lr_range_test, select_lr
from .metrics import AucResult, evaluate, format_table, format_table_csv, write_metrics_json
from .model import ModelConfig, ResNet, build_model
from .optim import ConstantSchedule, SgdmState, SgdrSchedule, sgdm_step
from .plots import line_plot_svg

logger = logging.getLogger(__name__)

VARIANTS = ("Proposed", "V1", "V2", "V3")
FULL_SCALE_SIZES = (64, 128, 256, 340)
DESK_SCALE_SIZES = (16, 32, 64)


@dataclass
class PipelineConfig:
    variant: str = "Proposed"
    sizes: list[int] = field(default_factory=lambda: list(DESK_SCALE_SIZES))
    epochs_per_stage: int = 2
    batch_size: int = 50
    seed: int = 0
    momentum: float = 0.9
    weight_decay: float = 0.0
    eta_min: float = 0.0
    t0: int | None = None
    t_mult: int = 2
    lr: float | str = "auto"
    finder_lr_start: float = 1e-5
    finder_lr_end: float = 10.0
    finder_iters: int = 200
    finder_beta: float = 0.98
    finder_divergence: float = 4.0
    finder_rule: str = "Steepest"
    stem_channels: int = 8
    stage_widths: list[int] = field(default_factory=lambda: [8, 16, 32])
    blocks_per_stage: int = 2
    checkpoint_every: int = 0

    def __post_init__(self):
        self.sizes = [int(s) for s in self.sizes]
        self.stage_widths = [int(w) for w in self.stage_widths]
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not self.sizes or any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValidationError(f"sizes must be non-empty and strictly increasing, got {self.sizes}")
        if self.sizes[0] < 16:
            raise ValidationError(f"sizes must be at least 16, got {self.sizes}")
        if self.epochs_per_stage < 1 or self.batch_size < 1:
            raise ValidationError("epochs_per_stage and batch_size must be positive")
        if isinstance(self.lr, str):
            if self.lr != "auto":
                raise ValidationError(f"lr must be 'auto' or a positive number, got {self.lr!r}")
        elif not self.lr > 0:
            raise ValidationError(f"lr must be positive, got {self.lr}")
        if self.t0 is not None and self.t0 < 1:
            raise ValidationError(f"t0 must be positive, got {self.t0}")
        try:
            Rule(self.finder_rule)
        except ValueError:
            raise ValidationError(f"finder_rule must be one of {[r.value for r in Rule]}, "
                                  f"got {self.finder_rule!r}") from None

    @property
    def single_size(self) -> bool:
        return self.variant in ("V1", "V3")

    @property
    def annealed(self) -> bool:
        return self.variant in ("Proposed", "V1")

    def stage_sizes(self) -> list[int]:
        return [max(self.sizes)] if self.single_size else list(self.sizes)

    def stage_epochs(self) -> int:
        return self.epochs_per_stage * (len(self.sizes) if self.single_size else 1)

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.stem_channels, tuple(self.stage_widths), self.blocks_per_stage,
                           seed=self.seed)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {unknown}")
        return cls(**doc)

    def with_variant(self, variant: str) -> "PipelineConfig":
        return PipelineConfig.from_dict({**self.to_dict(), "variant": variant})


@dataclass
class RunReport:
    config: dict
    stages: list[int]
    selected_lr: float
    trace: list[tuple[int, float, float]]
    stage_val: list[dict]
    test: AucResult | None
    wall_time: float = 0.0
    sweep: SweepRecord | None = None
    interrupted: bool = False

    def trace_csv(self) -> str:
        lines = ["step,lr,train_loss"] + [f"{s},{lr!r},{loss!r}" for s, lr, loss in self.trace]
        return "\n".join(lines) + "\n"


@dataclass
class AblationReport:
    reports: dict[str, RunReport | None]
    errors: dict[str, str]

    def results(self) -> list[AucResult]:
        out = []
        for v in VARIANTS:
            rep = self.reports.get(v)
            out.append(rep.test if rep is not None and rep.test is not None else _undefined_result())
        return out

    def table(self) -> str:
        return format_table(self.results(), list(VARIANTS))

    def table_csv(self) -> str:
        return format_table_csv(self.results(), list(VARIANTS))


def _undefined_result() -> AucResult:
    from .labels import NUM_CLASSES

    return AucResult([None] * NUM_CLASSES, [0] * NUM_CLASSES, [0] * NUM_CLASSES)


def training_loss(model: ResNet, batch: tuple[np.ndarray, np.ndarray]) -> ad.Tensor:
    x, y = batch
    return ad.bce_loss(ad.sigmoid(model.forward(x, train=True)), y)


def find_lr(model: ResNet, dataset: ImageDataset, splits: SplitAssignment,
            config: PipelineConfig, side: int) -> tuple[float, SweepRecord]:
    """Range test over at most one training epoch at ``side``."""
    n_train = len(splits.records(dataset.records, TRAIN))
    iters = min(config.finder_iters, num_batches(n_train, config.batch_size))
    stream = batches(dataset, splits, TRAIN, side, config.batch_size, seed=config.seed,
                     epoch=0, purpose="lr_find")
    sweep = lr_range_test(model, stream, training_loss, config.finder_lr_start,
                          config.finder_lr_end, iters, config.finder_beta,
                          config.finder_divergence, config.momentum, config.weight_decay)
    return select_lr(sweep, config.finder_rule), sweep


def _make_schedule(config: PipelineConfig, lr: float, steps_per_epoch: int):
    if config.annealed:
        return SgdrSchedule(lr, config.eta_min, config.t0 or steps_per_epoch, config.t_mult)
    return ConstantSchedule(lr)


def evaluate_split(model: ResNet, dataset: ImageDataset, splits: SplitAssignment, split: str,
                   side: int, batch_size: int) -> AucResult:
    return evaluate(model, batches(dataset, splits, split, side, batch_size, shuffle=False))


def run_training(config: PipelineConfig, dataset: ImageDataset, splits: SplitAssignment,
                 run_dir=None, resume_from=None, stop_after_step: int | None = None,
                 config_echo: dict | None = None) -> tuple[ResNet, RunReport]:
    """Run one variant end to end.

    ``stop_after_step`` simulates an interruption: after that many optimizer
    steps an ``interrupt.ckpt`` is written and a partial report returned.
    ``resume_from`` continues from such a checkpoint.  ``config_echo``
    replaces the plain config dump written to ``config.json``.
    """
    start_time = time.perf_counter()
    run_dir = Path(run_dir) if run_dir is not None else None
    if stop_after_step is not None and run_dir is None:
        raise ValidationError("stop_after_step needs a run_dir to write the interrupt checkpoint")
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        echo = config_echo if config_echo is not None else config.to_dict()
        (run_dir / "config.json").write_text(json.dumps(echo, indent=2) + "\n")

    stages = config.stage_sizes()
    n_train = len(splits.records(dataset.records, TRAIN))
    if n_train == 0:
        raise ValidationError("training split is empty")
    steps_per_epoch = num_batches(n_train, config.batch_size)

    sweep = None
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from, build_model(config.model_config()))
        model, opt, schedule = ckpt.model, ckpt.optimizer, ckpt.schedule
        progress = ckpt.extra
        if progress.get("config") != config.to_dict():
            raise ValidationError("checkpoint was written by a run with a different config")
        selected_lr = progress["selected_lr"]
        trace = [tuple(t) for t in progress["trace"]]
        stage_val = progress["stage_val"]
        stage_idx, epoch_in_stage, batch_idx = progress["position"]
    else:
        model = build_model(config.model_config())
        opt = schedule = None
        if config.lr == "auto":
            selected_lr, sweep = find_lr(model, dataset, splits, config, stages[0])
            logger.info("lr range test selected %.6g (%s)", selected_lr, sweep.stop_reason.value)
            if run_dir is not None:
                write_sweep(run_dir, sweep, selected_lr)
        else:
            selected_lr = float(config.lr)
        trace = []
        stage_val = []
        stage_idx, epoch_in_stage, batch_idx = 0, 0, 0

    epochs = config.stage_epochs()
    global_step = len(trace)
    for s in range(stage_idx, len(stages)):
        side = stages[s]
        if resume_from is None or s != stage_idx:
            opt = SgdmState(config.momentum, config.weight_decay)
            schedule = _make_schedule(config, selected_lr, steps_per_epoch)
        logger.info("stage %d/%d: side %d, %d epochs", s + 1, len(stages), side, epochs)
        first_epoch = epoch_in_stage if s == stage_idx else 0
        for e in range(first_epoch, epochs):
            global_epoch = s * epochs + e
            skip = batch_idx if (s == stage_idx and e == first_epoch) else 0
            for b, batch in enumerate(batches(dataset, splits, TRAIN, side, config.batch_size,
                                              seed=config.seed, epoch=global_epoch, purpose="train")):
                if b < skip:
                    continue
                lr = schedule.lr()
                loss = training_loss(model, batch)
                value = loss.item()
                if not math.isfinite(value):
                    raise DivergenceError(f"non-finite training loss at step {global_step}", trace=trace)
                ad.backward(loss)
                try:
                    sgdm_step(model.parameters(), opt, lr)
                except DivergenceError as exc:
                    raise DivergenceError(str(exc), parameter=exc.parameter, trace=trace) from None
                schedule = schedule.advance()
                trace.append((global_step, lr, value))
                global_step += 1
                position = _next_position(s, e, b, steps_per_epoch, epochs)
                due = config.checkpoint_every and global_step % config.checkpoint_every == 0
                if run_dir is not None and due:
                    _save_progress(run_dir / "last.ckpt", model, opt, schedule, config, selected_lr,
                                   trace, stage_val, position)
                if stop_after_step is not None and global_step >= stop_after_step:
                    _save_progress(run_dir / "interrupt.ckpt", model, opt, schedule, config, selected_lr, trace,
                                   stage_val, position)
                    report = RunReport(config.to_dict(), stages, selected_lr, trace, stage_val, None,
                                       time.perf_counter() - start_time, sweep, interrupted=True)
                    return model, report
        val = evaluate_split(model, dataset, splits, VAL, side, config.batch_size)
        stage_val.append({"stage": s, "side": side, "macro_auc": val.macro, "auc": val.by_class()})
        logger.info("stage %d val macro AUC %s", s + 1, val.macro)
        if run_dir is not None:
            save_checkpoint(run_dir / f"stage{s + 1}_{side}.ckpt", model, opt, schedule,
                            {"stage": s, "side": side})

    test = evaluate_split(model, dataset, splits, TEST, stages[-1], config.batch_size)
    report = RunReport(config.to_dict(), stages, selected_lr, trace, stage_val, test,
                       time.perf_counter() - start_time, sweep)
    if run_dir is not None:
        write_run_dir(run_dir, model, opt, schedule, report)
    return model, report


def _next_position(stage: int, epoch: int, batch: int, steps_per_epoch: int, epochs: int):
    batch += 1
    if batch == steps_per_epoch:
        batch, epoch = 0, epoch + 1
    return [stage, epoch, batch]


def _save_progress(path, model, opt, schedule, config, selected_lr, trace, stage_val, position):
    save_checkpoint(path, model, opt, schedule, {
        "config": config.to_dict(),
        "selected_lr": selected_lr,
        "trace": [list(t) for t in trace],
        "stage_val": stage_val,
        "position": position,
    })


def write_sweep(run_dir: Path, sweep: SweepRecord, selected: float) -> None:
    sweep.write_csv(run_dir / "sweep.csv")
    if sweep.points:
        svg = line_plot_svg([math.log(p.lr) for p in sweep.points], [p.smoothed_loss for p in sweep.points],
                            title=f"LR range test (selected {selected:.4g})", xlabel="ln(lr)",
                            ylabel="smoothed loss", marker_x=math.log(selected))
        (run_dir / "sweep.svg").write_text(svg)


def write_run_dir(run_dir: Path, model, opt, schedule, report: RunReport) -> None:
    (run_dir / "trace.csv").write_text(report.trace_csv())
    write_metrics_json(report.test, run_dir / "metrics.json")
    (run_dir / "stages.json").write_text(json.dumps(
        {"stages": report.stages, "selected_lr": report.selected_lr, "validation": report.stage_val},
        indent=2) + "\n")
    (run_dir / "timing.json").write_text(json.dumps({"wall_time_seconds": report.wall_time}) + "\n")
    save_checkpoint(run_dir / "final.ckpt", model, opt, schedule, {"stages": report.stages})
    if report.trace:
        svg = line_plot_svg([t[0] for t in report.trace], [t[1] for t in report.trace],
                            title=f"Learning rate ({report.config['variant']})", xlabel="step",
                            ylabel="lr")
        (run_dir / "schedule.svg").write_text(svg)


def run_ablation(base_config: PipelineConfig, dataset: ImageDataset, splits: SplitAssignment,
                 out_dir=None, config_echo=None) -> AblationReport:
    """Train all four variants on the same data, split and seed.

    A failing variant is recorded in ``errors`` and rendered as undefined; the
    remaining variants still run.  ``config_echo(cfg, run_dir)``, if given,
    builds each variant's ``config.json``.
    """
    if base_config.variant != "Proposed":
        raise ValidationError("ablation expects the Proposed variant as its base config")
    out_dir = Path(out_dir) if out_dir is not None else None
    reports: dict[str, RunReport | None] = {}
    errors: dict[str, str] = {}
    for variant in VARIANTS:
        cfg = base_config.with_variant(variant)
        run_dir = out_dir / variant if out_dir is not None else None
        try:
            echo = config_echo(cfg, run_dir) if (config_echo and run_dir is not None) else None
            _, reports[variant] = run_training(cfg, dataset, splits, run_dir, config_echo=echo)
        except (DivergenceError, ValidationError) as exc:
            logger.error("variant %s failed: %s", variant, exc)
            reports[variant] = None
            errors[variant] = f"{type(exc).__name__}: {exc}"
    report = AblationReport(reports, errors)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "ablation_table.csv").write_text(report.table_csv())
        (out_dir / "ablation_table.txt").write_text(report.table())
        if errors:
            (out_dir / "errors.json").write_text(json.dumps(errors, indent=2) + "\n")
    return report


def load_config(path) -> PipelineConfig:
    return PipelineConfig.from_dict(json.loads(Path(path).read_text()))
