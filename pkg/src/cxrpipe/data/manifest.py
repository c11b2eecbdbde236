"""Manifest CSV: ``image_id,patient_id,labels`` with pipe-separated labels."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from ..errors import ValidationError
from ..labels import sorted_labels, validate_label_set

HEADER = ("image_id", "patient_id", "labels")


@dataclass(frozen=True)
class ManifestRecord:
    image_id: str
    patient_id: str
    labels: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "labels", validate_label_set(self.labels))


def parse_manifest(text: str) -> list[ManifestRecord]:
    rows = csv.reader(io.StringIO(text))
    records: list[ManifestRecord] = []
    seen: dict[str, int] = {}
    header_seen = False
    for lineno, row in enumerate(rows, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if not header_seen:
            if tuple(cell.strip() for cell in row) != HEADER:
                raise ValidationError(f"expected header {','.join(HEADER)!r}, got {row!r}", line=lineno)
            header_seen = True
            continue
        if len(row) != 3:
            raise ValidationError(f"expected 3 fields, got {len(row)}", line=lineno)
        image_id, patient_id, label_field = (cell.strip() for cell in row)
        if not image_id or not patient_id:
            raise ValidationError("image_id and patient_id must be non-empty", line=lineno)
        if image_id in seen:
            raise ValidationError(f"duplicate image_id {image_id!r} (first on line {seen[image_id]})",
                                  line=lineno)
        seen[image_id] = lineno
        try:
            labels = validate_label_set(label_field.split("|"))
        except ValidationError as exc:
            raise ValidationError(str(exc), line=lineno) from None
        records.append(ManifestRecord(image_id, patient_id, labels))
    if not header_seen:
        raise ValidationError("manifest is empty", line=1)
    return records


def format_manifest(records: Iterable[ManifestRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for r in records:
        writer.writerow((r.image_id, r.patient_id, "|".join(sorted_labels(r.labels))))
    return buf.getvalue()


def read_manifest(path) -> list[ManifestRecord]:
    return parse_manifest(Path(path).read_text(encoding="utf-8"))


def write_manifest(records: Iterable[ManifestRecord], path) -> None:
    Path(path).write_text(format_manifest(records), encoding="utf-8")
