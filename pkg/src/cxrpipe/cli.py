"""Command-line entry point.

Exit codes: 0 success, 1 validation/usage error, 2 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .data.loader import ImageDataset
from .data.manifest import read_manifest
from .data.splits import DEFAULT_FRACTIONS, group_split, read_splits
from .data.synthetic import DEFAULT_PRIOR, SyntheticSpec, write_synthetic
from .errors import CxrError, DivergenceError
from .labels import PATHOLOGIES
from .metrics import format_table, format_table_csv, read_metrics_json, write_metrics_json
from .pipeline import (VARIANTS, PipelineConfig, write_sweep, evaluate_split, find_lr,
                       run_ablation, run_training)

logger = logging.getLogger("cxrpipe")

OUTPUT_ROOT_ENV = "CXRPIPE_OUTPUT_ROOT"
DATASET_KEYS = ("manifest", "images", "splits", "out_dir")

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2


class UsageError(CxrError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _load_run_config(path, seed: int | None = None, variant: str | None = None) -> tuple[PipelineConfig, dict]:
    """Split a run config file into pipeline settings and dataset paths.

    Relative dataset paths resolve against the config file's directory.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    paths = {k: doc.pop(k) for k in DATASET_KEYS if k in doc}
    if "manifest" not in paths or "splits" not in paths:
        raise UsageError("config must name 'manifest' and 'splits'")
    for k, v in list(paths.items()):
        if v is not None and k != "out_dir":
            p = Path(v)
            paths[k] = str(p if p.is_absolute() else (path.parent / p))
    if seed is not None:
        doc["seed"] = seed
    if variant is not None:
        doc["variant"] = variant
    return PipelineConfig.from_dict(doc), paths


def _echo(config: PipelineConfig, paths: dict, out_dir: Path) -> dict:
    return {**config.to_dict(), "manifest": str(Path(paths["manifest"]).resolve()),
            "images": str(Path(paths["images"]).resolve()) if paths.get("images") else None,
            "splits": str(Path(paths["splits"]).resolve()), "out_dir": str(out_dir)}


def _dataset(paths: dict):
    dataset = ImageDataset.from_manifest(paths["manifest"], paths.get("images"))
    return dataset, read_splits(paths["splits"])


def _out_dir(flag: str | None, paths: dict, default_name: str) -> Path:
    if flag:
        return Path(flag)
    if paths.get("out_dir"):
        return Path(paths["out_dir"])
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / default_name


def cmd_synth(args) -> int:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise UsageError(f"{out} exists and is not empty (use --force to overwrite)")
    if args.force and (out / "images").is_dir():
        for stale in (out / "images").glob("*.pgm"):
            stale.unlink()
    priors = [float(p) for p in args.priors.split(",")]
    if len(priors) == 1:
        priors = priors * len(PATHOLOGIES)
    try:
        spec = SyntheticSpec(args.n, args.side, args.noise, tuple(priors))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    records = write_synthetic(out, spec, args.seed)
    print(f"wrote {len(records)} images and manifest.csv to {out}")
    return EXIT_OK


def cmd_split(args) -> int:
    records = read_manifest(args.manifest)
    assignment = group_split(records, DEFAULT_FRACTIONS, args.seed)
    assignment.write(args.out)
    counts = {s: len(assignment.patients(s)) for s in ("train", "val", "test")}
    print(f"wrote {args.out}: " + ", ".join(f"{k}={v}" for k, v in counts.items()) + " patients")
    return EXIT_OK


def cmd_lr_find(args) -> int:
    config, paths = _load_run_config(args.config, args.seed, args.variant)
    dataset, splits = _dataset(paths)
    out = _out_dir(args.out, paths, f"lr-find-seed{config.seed}")
    out.mkdir(parents=True, exist_ok=True)
    from .model import build_model

    side = config.stage_sizes()[0]
    lr, sweep = find_lr(build_model(config.model_config()), dataset, splits, config, side)
    write_sweep(out, sweep, lr)
    print(f"selected lr {lr!r} ({sweep.stop_reason.value} after {len(sweep.points)} iterations, side {side})")
    return EXIT_OK


def cmd_train(args) -> int:
    config, paths = _load_run_config(args.config, args.seed, args.variant)
    dataset, splits = _dataset(paths)
    out = _out_dir(args.out, paths, f"train-{config.variant}-seed{config.seed}")
    _, report = run_training(config, dataset, splits, out, resume_from=args.resume,
                             stop_after_step=args.stop_after,
                             config_echo=_echo(config, paths, out))
    if report.interrupted:
        print(f"interrupted after {len(report.trace)} steps; resume with --resume {out / 'interrupt.ckpt'}")
        return EXIT_OK
    print(f"stages {report.stages}, lr {report.selected_lr!r}, "
          f"test macro AUC {report.test.macro} -> {out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    config, paths = _load_run_config(args.config, args.seed, "Proposed")
    dataset, splits = _dataset(paths)
    out = _out_dir(args.out, paths, f"ablate-seed{config.seed}")
    report = run_ablation(config, dataset, splits, out,
                          config_echo=lambda cfg, d: _echo(cfg, paths, d))
    print(report.table(), end="")
    if report.errors:
        for variant, msg in report.errors.items():
            print(f"{variant} failed: {msg}", file=sys.stderr)
        diverged = any(msg.startswith("DivergenceError") for msg in report.errors.values())
        return EXIT_DIVERGED if diverged else EXIT_INVALID
    return EXIT_OK


def cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint

    config, paths = _load_run_config(args.config, args.seed, args.variant)
    dataset, splits = _dataset(paths)
    ckpt = load_checkpoint(args.checkpoint)
    result = evaluate_split(ckpt.model, dataset, splits, "test", config.stage_sizes()[-1],
                            config.batch_size)
    out = _out_dir(args.out, paths, f"eval-{config.variant}-seed{config.seed}")
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_json(result, out / "metrics.json")
    print(f"test macro AUC {result.macro} -> {out / 'metrics.json'}")
    return EXIT_OK


def cmd_report(args) -> int:
    results = [read_metrics_json(p) for p in args.metrics]
    names = args.names or [Path(p).resolve().parent.name for p in args.metrics]
    if len(names) != len(results):
        raise UsageError("--names must give one name per metrics file")
    print((format_table_csv if args.csv else format_table)(results, names), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cxrpipe", description="Progressive-resizing SGDR training pipeline")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic glyph dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--side", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--priors", default=str(DEFAULT_PRIOR),
                   help="one prior for every class, or 14 comma-separated priors")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="patient-grouped 70/10/20 split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    for name, func, help_ in (("lr-find", cmd_lr_find, "learning-rate range test"),
                              ("train", cmd_train, "train one variant"),
                              ("ablate", cmd_ablate, "train all four variants"),
                              ("eval", cmd_eval, "test-split AUC of a checkpoint")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        if name != "ablate":
            p.add_argument("--variant", choices=VARIANTS)
        if name == "train":
            p.add_argument("--resume", help="interrupt/last checkpoint to continue from")
            p.add_argument("--stop-after", type=int, help="stop after this many optimizer steps")
        if name == "eval":
            p.add_argument("--checkpoint", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="render metrics files as a results table")
    p.add_argument("metrics", nargs="+")
    p.add_argument("--names", nargs="+")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except CxrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
