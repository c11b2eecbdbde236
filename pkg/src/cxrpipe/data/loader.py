"""Image access, normalization and mini-batching."""

from __future__ import annotations

from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from ..errors import ValidationError
from ..labels import encode_khot
from .images import read_pgm, resize_array
from .manifest import ManifestRecord, read_manifest
from .splits import TRAIN, SplitAssignment

DEFAULT_BATCH_SIZE = 50


class ImageDataset:
    """Records plus their pixels, loaded lazily from ``image_dir`` or held in memory.

    Every image handed out for a batch or for normalization statistics is
    appended to :attr:`access_log` as ``(purpose, image_id)``, which lets
    callers audit that held-out images never reach training.
    """

    def __init__(self, records: Sequence[ManifestRecord], image_dir=None,
                 images: dict[str, np.ndarray] | None = None):
        self.records = list(records)
        self.image_dir = Path(image_dir) if image_dir is not None else None
        self._native: dict[str, np.ndarray] = dict(images or {})
        self._resized: dict[tuple[str, int], np.ndarray] = {}
        self._norm: dict[tuple, tuple[float, float]] = {}
        self._labels = {r.image_id: encode_khot(r.labels) for r in self.records}
        self.access_log: list[tuple[str, str]] = []

    @classmethod
    def from_manifest(cls, manifest_path, image_dir=None) -> "ImageDataset":
        manifest_path = Path(manifest_path)
        if image_dir is None:
            image_dir = manifest_path.parent / "images"
        return cls(read_manifest(manifest_path), image_dir)

    def image(self, image_id: str) -> np.ndarray:
        if image_id not in self._native:
            if self.image_dir is None:
                raise ValidationError(f"no pixels available for image {image_id!r}")
            path = self.image_dir / f"{image_id}.pgm"
            if not path.is_file():
                raise ValidationError(f"image file for {image_id!r} not found at {path}")
            self._native[image_id] = read_pgm(path).pixels
        return self._native[image_id]

    def resized(self, image_id: str, side: int) -> np.ndarray:
        key = (image_id, side)
        if key not in self._resized:
            self._resized[key] = resize_array(self.image(image_id), side)
        return self._resized[key]

    def label(self, image_id: str) -> np.ndarray:
        return self._labels[image_id]

    def norm_stats(self, assignment: SplitAssignment, side: int) -> tuple[float, float]:
        """Global pixel mean and std over the training split at ``side``."""
        train = assignment.records(self.records, TRAIN)
        key = (tuple(r.image_id for r in train), side)
        if key not in self._norm:
            if not train:
                raise ValidationError("training split is empty")
            total = 0.0
            total_sq = 0.0
            for r in train:
                self.access_log.append(("norm", r.image_id))
                px = self.resized(r.image_id, side)
                total += px.sum()
                total_sq += (px * px).sum()
            n = len(train) * side * side
            mean = total / n
            std = float(np.sqrt(max(total_sq / n - mean * mean, 0.0)))
            self._norm[key] = (float(mean), std if std > 1e-12 else 1.0)
        return self._norm[key]


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def batches(dataset: ImageDataset, assignment: SplitAssignment, split: str, side: int,
            batch_size: int = DEFAULT_BATCH_SIZE, seed: int = 0, epoch: int = 0,
            shuffle: bool | None = None, purpose: str | None = None
            ) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(images[B,1,side,side], targets[B,15])`` for one pass over ``split``.

    Training batches are shuffled by a generator seeded from ``(seed, epoch)``;
    other splits keep manifest order unless ``shuffle`` says otherwise.  The
    last batch may be short.
    """
    records = assignment.records(dataset.records, split)
    if not records:
        raise ValidationError(f"split {split!r} is empty")
    if batch_size < 1:
        raise ValidationError(f"batch_size must be positive, got {batch_size}")
    shuffle = (split == TRAIN) if shuffle is None else shuffle
    purpose = purpose or split
    mean, std = dataset.norm_stats(assignment, side)
    order = epoch_order(len(records), seed, epoch) if shuffle else np.arange(len(records))
    for start in range(0, len(records), batch_size):
        chosen = [records[i] for i in order[start:start + batch_size]]
        x = np.empty((len(chosen), 1, side, side))
        y = np.empty((len(chosen), len(dataset.label(chosen[0].image_id))))
        for k, r in enumerate(chosen):
            dataset.access_log.append((purpose, r.image_id))
            x[k, 0] = (dataset.resized(r.image_id, side) - mean) / std
            y[k] = dataset.label(r.image_id)
        yield x, y


def num_batches(n: int, batch_size: int) -> int:
    return -(-n // batch_size)
