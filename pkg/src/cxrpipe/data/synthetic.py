"""Synthetic multi-label dataset: one geometric glyph per pathology class.

The image is tiled into a 4x4 grid; class ``c`` always draws its own glyph in
cell ``c`` (cells 14 and 15 stay empty), so glyphs never overlap.  An image
carrying no glyph is labelled "No Finding".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..labels import NO_FINDING, PATHOLOGIES
from .images import ImageBuffer, write_pgm
from .manifest import ManifestRecord, write_manifest

GRID = 4
IMAGES_PER_PATIENT = 5
DEFAULT_PRIOR = 0.1
MIN_SIDE = 32


def _box(u, v, lo=0.12, hi=0.88):
    return (u > lo) & (u < hi) & (v > lo) & (v < hi)


def _radius(u, v):
    return np.hypot(u - 0.5, v - 0.5)


# masks over normalised cell coordinates (u to the right, v downwards)
_GLYPHS: tuple[Callable[[np.ndarray, np.ndarray], np.ndarray], ...] = (
    lambda u, v: _box(u, v) & (np.abs(v - 0.5) < 0.14),                      # horizontal bar
    lambda u, v: _box(u, v) & (np.abs(u - 0.5) < 0.14),                      # vertical bar
    lambda u, v: _box(u, v) & (np.abs(u - v) < 0.14),                        # falling diagonal
    lambda u, v: _box(u, v) & (np.abs(u + v - 1.0) < 0.14),                  # rising diagonal
    lambda u, v: _radius(u, v) < 0.36,                                        # disc
    lambda u, v: (_radius(u, v) > 0.22) & (_radius(u, v) < 0.40),            # ring
    lambda u, v: _box(u, v) & ((np.abs(v - 0.5) < 0.1) | (np.abs(u - 0.5) < 0.1)),  # plus
    lambda u, v: _box(u, v) & ((np.abs(u - v) < 0.1) | (np.abs(u + v - 1.0) < 0.1)),  # cross
    lambda u, v: _box(u, v, 0.1, 0.9) & ~_box(u, v, 0.28, 0.72),             # hollow square
    lambda u, v: _box(u, v, 0.25, 0.75),                                      # small filled square
    lambda u, v: (v > 0.15) & (v < 0.85) & (np.abs(u - 0.5) < 0.5 * (v - 0.15) + 0.02),  # triangle
    lambda u, v: _box(u, v, 0.1, 0.9) & ((u < 0.5) ^ (v < 0.5)),             # checker
    lambda u, v: _box(u, v) & ((np.abs(v - 0.3) < 0.09) | (np.abs(v - 0.7) < 0.09)),  # double bar
    lambda u, v: _box(u, v) & ((u < 0.32) | (v > 0.68)),                      # corner
)


@dataclass(frozen=True)
class SyntheticSpec:
    n_images: int
    side: int = 64
    noise_std: float = 0.1
    class_priors: tuple[float, ...] = field(default=(DEFAULT_PRIOR,) * len(PATHOLOGIES))

    def __post_init__(self):
        priors = tuple(float(p) for p in self.class_priors)
        if len(priors) == 1:
            priors = priors * len(PATHOLOGIES)
        object.__setattr__(self, "class_priors", priors)
        if len(priors) != len(PATHOLOGIES) or any(not 0.0 <= p <= 1.0 for p in priors):
            raise ValueError(f"need {len(PATHOLOGIES)} priors in [0, 1], got {priors}")
        if self.side < MIN_SIDE:
            raise ValueError(f"side must be at least {MIN_SIDE}, got {self.side}")
        if self.n_images < 1 or self.noise_std < 0:
            raise ValueError("n_images must be positive and noise_std non-negative")


def glyph_template(cls: int, side: int) -> np.ndarray:
    """``side x side`` image containing only the glyph of pathology ``cls``."""
    img = np.zeros((side, side))
    cell = side / GRID
    row, col = divmod(cls, GRID)
    y0, y1 = int(round(row * cell)), int(round((row + 1) * cell))
    x0, x1 = int(round(col * cell)), int(round((col + 1) * cell))
    v = ((np.arange(y0, y1) + 0.5 - y0) / (y1 - y0))[:, None]
    u = ((np.arange(x0, x1) + 0.5 - x0) / (x1 - x0))[None, :]
    img[y0:y1, x0:x1] = _GLYPHS[cls](u, v).astype(np.float64)
    return img


def patient_for(index: int) -> str:
    return f"{index // IMAGES_PER_PATIENT + 1:05d}"


def image_id_for(index: int) -> str:
    return f"{index // IMAGES_PER_PATIENT + 1:08d}_{index % IMAGES_PER_PATIENT:03d}"


def generate_synthetic(spec: SyntheticSpec, seed: int = 0) -> tuple[list[ManifestRecord], dict[str, np.ndarray]]:
    rng = np.random.default_rng(seed)
    templates = [glyph_template(c, spec.side) for c in range(len(PATHOLOGIES))]
    priors = np.array(spec.class_priors)
    records: list[ManifestRecord] = []
    images: dict[str, np.ndarray] = {}
    for i in range(spec.n_images):
        present = np.flatnonzero(rng.random(len(PATHOLOGIES)) < priors)
        img = np.zeros((spec.side, spec.side))
        for c in present:
            img += templates[c]
        if spec.noise_std > 0:
            img += rng.standard_normal(img.shape) * spec.noise_std
        img = np.clip(img, 0.0, 1.0)
        labels = frozenset(PATHOLOGIES[c] for c in present) or frozenset({NO_FINDING})
        image_id = image_id_for(i)
        records.append(ManifestRecord(image_id, patient_for(i), labels))
        images[image_id] = img
    return records, images


def write_synthetic(out_dir, spec: SyntheticSpec, seed: int = 0) -> list[ManifestRecord]:
    """Write ``manifest.csv`` and ``images/<image_id>.pgm`` under ``out_dir``."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    records, images = generate_synthetic(spec, seed)
    for image_id, img in images.items():
        write_pgm(ImageBuffer(img), out / "images" / f"{image_id}.pgm")
    write_manifest(records, out / "manifest.csv")
    return records
