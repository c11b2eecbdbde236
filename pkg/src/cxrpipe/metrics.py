"""Tie-aware ROC AUC and results-table rendering."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .labels import CLASS_INDEX, CLASS_NAMES, TABLE_ROW_ORDER

UNDEFINED_MARK = "-"


def midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks, tied values sharing the mean of the ranks they span."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    n = len(values)
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])
    ends = np.r_[starts[1:], n]
    run_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(n)
    ranks[order] = np.repeat(run_rank, ends - starts)
    return ranks


def auc(scores, labels) -> float | None:
    """Mann-Whitney AUC with midranks; ``None`` when a class has no positives or negatives."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1 or scores.size < 1:
        raise ValueError(f"scores and labels must be equal-length 1-d, got {scores.shape}, {labels.shape}")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        return None
    r_pos = midranks(scores)[pos].sum()
    return float((r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class AucResult:
    values: list[float | None]
    positives: list[int]
    negatives: list[int]

    @property
    def macro(self) -> float | None:
        """Unweighted mean over classes whose AUC is defined."""
        defined = [v for v in self.values if v is not None]
        return float(np.mean(defined)) if defined else None

    @property
    def undefined_classes(self) -> list[str]:
        return [CLASS_NAMES[i] for i, v in enumerate(self.values) if v is None]

    def by_class(self) -> dict[str, float | None]:
        return dict(zip(CLASS_NAMES, self.values))

    def to_json(self) -> dict:
        return {
            "auc": self.by_class(),
            "positives": dict(zip(CLASS_NAMES, self.positives)),
            "negatives": dict(zip(CLASS_NAMES, self.negatives)),
            "macro_auc_defined_classes": self.macro,
            "undefined_classes": self.undefined_classes,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "AucResult":
        return cls([doc["auc"][c] for c in CLASS_NAMES],
                   [doc["positives"][c] for c in CLASS_NAMES],
                   [doc["negatives"][c] for c in CLASS_NAMES])


def auc_per_class(scores: np.ndarray, targets: np.ndarray) -> AucResult:
    scores = np.asarray(scores)
    targets = np.asarray(targets)
    values = [auc(scores[:, c], targets[:, c]) for c in range(targets.shape[1])]
    pos = [int(targets[:, c].sum()) for c in range(targets.shape[1])]
    return AucResult(values, pos, [len(targets) - p for p in pos])


def evaluate(model, batch_iter: Iterable[tuple[np.ndarray, np.ndarray]]) -> AucResult:
    """One-vs-rest AUC of every class's sigmoid score over all batches (Eval mode)."""
    from .model import predict_probs

    scores, targets = [], []
    for x, y in batch_iter:
        scores.append(predict_probs(model, x))
        targets.append(y)
    return auc_per_class(np.concatenate(scores), np.concatenate(targets))


def write_metrics_json(result: AucResult, path) -> None:
    Path(path).write_text(json.dumps(result.to_json(), indent=2) + "\n", encoding="utf-8")


def read_metrics_json(path) -> AucResult:
    return AucResult.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _cell(v: float | None) -> str:
    return UNDEFINED_MARK if v is None else f"{v:.4f}"


def table_rows(results: Sequence[AucResult]) -> list[list[str]]:
    return [[name] + [_cell(r.values[CLASS_INDEX[name]]) for r in results] for name in TABLE_ROW_ORDER]


def format_table_csv(results: Sequence[AucResult], names: Sequence[str]) -> str:
    if not results or len(results) != len(names):
        raise ValueError("need one name per result set and at least one result set")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["Pathology", *names])
    w.writerows(table_rows(results))
    return buf.getvalue()


def format_table(results: Sequence[AucResult], names: Sequence[str]) -> str:
    """Aligned plain-text table: one row per class, one column per result set."""
    if not results or len(results) != len(names):
        raise ValueError("need one name per result set and at least one result set")
    rows = [["Pathology", *names]] + table_rows(results)
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for row in rows:
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"
