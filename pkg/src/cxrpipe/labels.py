"""Class index table and k-hot encoding.

The 14 pathologies occupy indices 0-13 in alphabetical order; index 14 is the
explicit "No Finding" class.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .errors import ValidationError

PATHOLOGIES = (
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Effusion",
    "Emphysema",
    "Fibrosis",
    "Hernia",
    "Infiltration",
    "Mass",
    "Nodule",
    "Pleural Thickening",
    "Pneumonia",
    "Pneumothorax",
)
NO_FINDING = "No Finding"
CLASS_NAMES = PATHOLOGIES + (NO_FINDING,)
NUM_CLASSES = len(CLASS_NAMES)
NO_FINDING_INDEX = NUM_CLASSES - 1
CLASS_INDEX = {name: i for i, name in enumerate(CLASS_NAMES)}

# Row order of the published results table: plain alphabetical, so "No Finding"
# sits between Mass and Nodule.
TABLE_ROW_ORDER = tuple(sorted(CLASS_NAMES))

# ChestX-ray14 csv files spell multi-word labels with underscores.
_ALIASES = {"Pleural_Thickening": "Pleural Thickening", "No_Finding": NO_FINDING}


def canonical_name(name: str) -> str:
    name = name.strip()
    name = _ALIASES.get(name, name)
    if name not in CLASS_INDEX:
        raise ValidationError(f"unknown class name {name!r}")
    return name


def validate_label_set(labels: Iterable[str]) -> frozenset[str]:
    labels = frozenset(canonical_name(n) for n in labels)
    if not labels:
        raise ValidationError("label set is empty")
    if NO_FINDING in labels and len(labels) > 1:
        others = sorted(labels - {NO_FINDING})
        raise ValidationError(f"'{NO_FINDING}' cannot be combined with {others}")
    return labels


def encode_khot(labels: Iterable[str]) -> np.ndarray:
    """15-entry 0/1 vector with a one at every named class."""
    vec = np.zeros(NUM_CLASSES)
    for name in validate_label_set(labels):
        vec[CLASS_INDEX[name]] = 1.0
    return vec


def decode_khot(vec) -> frozenset[str]:
    vec = np.asarray(vec)
    if vec.shape != (NUM_CLASSES,) or not np.all((vec == 0) | (vec == 1)):
        raise ValidationError(f"not a {NUM_CLASSES}-entry binary vector: {vec!r}")
    return validate_label_set(CLASS_NAMES[i] for i in np.flatnonzero(vec))


def sorted_labels(labels: Iterable[str]) -> list[str]:
    return sorted(labels, key=CLASS_INDEX.__getitem__)
