"""Manifests, patient-grouped splits, PGM images, batching and the synthetic generator."""

from .images import ImageBuffer, decode_pgm, encode_pgm, read_pgm, resize, resize_array, write_pgm
from .loader import ImageDataset, batches, num_batches
from .manifest import ManifestRecord, format_manifest, parse_manifest, read_manifest, write_manifest
from .splits import (TEST, TRAIN, VAL, SplitAssignment, group_split, largest_remainder, parse_splits,
                     read_splits)
from .synthetic import SyntheticSpec, generate_synthetic, glyph_template, write_synthetic

__all__ = [
    "ImageBuffer", "decode_pgm", "encode_pgm", "read_pgm", "write_pgm", "resize", "resize_array",
    "ImageDataset", "batches", "num_batches",
    "ManifestRecord", "parse_manifest", "format_manifest", "read_manifest", "write_manifest",
    "SplitAssignment", "group_split", "largest_remainder", "parse_splits", "read_splits",
    "TRAIN", "VAL", "TEST",
    "SyntheticSpec", "generate_synthetic", "glyph_template", "write_synthetic",
]
