"""Patient-grouped train/val/test assignment."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import ValidationError
from .manifest import ManifestRecord

TRAIN, VAL, TEST = "train", "val", "test"
SPLITS = (TRAIN, VAL, TEST)
DEFAULT_FRACTIONS = (0.7, 0.1, 0.2)


@dataclass(frozen=True)
class SplitAssignment:
    patient_split: dict[str, str]
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS
    seed: int = 0

    def split_of(self, patient_id: str) -> str:
        try:
            return self.patient_split[patient_id]
        except KeyError:
            raise ValidationError(f"patient {patient_id!r} has no split assignment") from None

    def patients(self, split: str) -> list[str]:
        return sorted(p for p, s in self.patient_split.items() if s == split)

    def records(self, records: Iterable[ManifestRecord], split: str) -> list[ManifestRecord]:
        """Records whose patient belongs to ``split``, in manifest order."""
        return [r for r in records if self.split_of(r.patient_id) == split]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("patient_id", "split"))
        for patient in sorted(self.patient_split):
            w.writerow((patient, self.patient_split[patient]))
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def largest_remainder(total: int, fractions: Sequence[float]) -> list[int]:
    """Integer counts summing to ``total`` that track ``fractions`` as closely as possible."""
    quotas = [f * total for f in fractions]
    counts = [math.floor(q) for q in quotas]
    short = total - sum(counts)
    # ties go to the earlier split
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts


def group_split(records: Sequence[ManifestRecord], fractions: Sequence[float] = DEFAULT_FRACTIONS,
                seed: int = 0) -> SplitAssignment:
    """Assign whole patients to splits so no patient's images straddle two splits."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    patients = sorted({r.patient_id for r in records})
    if len(patients) < 3:
        raise ValidationError(f"need at least 3 patients to split, got {len(patients)}")
    order = np.random.default_rng(seed).permutation(len(patients))
    counts = largest_remainder(len(patients), fractions)
    assignment: dict[str, str] = {}
    start = 0
    for split, count in zip(SPLITS, counts):
        for idx in order[start:start + count]:
            assignment[patients[idx]] = split
        start += count
    return SplitAssignment(assignment, fractions, seed)


def parse_splits(text: str) -> SplitAssignment:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(c.strip() for c in rows[0]) != ("patient_id", "split"):
        raise ValidationError("split file must start with header 'patient_id,split'", line=1)
    mapping: dict[str, str] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2 or row[1].strip() not in SPLITS:
            raise ValidationError(f"bad split row {row!r}", line=lineno)
        patient = row[0].strip()
        if patient in mapping:
            raise ValidationError(f"patient {patient!r} listed twice", line=lineno)
        mapping[patient] = row[1].strip()
    return SplitAssignment(mapping)


def read_splits(path) -> SplitAssignment:
    return parse_splits(Path(path).read_text(encoding="utf-8"))
