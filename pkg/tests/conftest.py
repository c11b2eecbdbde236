from __future__ import annotations

import pytest

from cxrpipe.data import ImageDataset, SyntheticSpec, generate_synthetic, group_split
from cxrpipe.pipeline import PipelineConfig


@pytest.fixture(scope="session")
def tiny_data():
    """60 synthetic images (12 patients) at 32 px, with a fixed split."""
    records, images = generate_synthetic(SyntheticSpec(60, 32, 0.1, (0.3,)), seed=0)
    return records, images, group_split(records, seed=0)


@pytest.fixture
def tiny_dataset(tiny_data):
    records, images, splits = tiny_data
    return ImageDataset(records, images=images), splits


def tiny_config(**overrides) -> PipelineConfig:
    base = dict(sizes=[16, 24], epochs_per_stage=2, batch_size=10, lr=0.05, stem_channels=4,
                stage_widths=[4, 6], blocks_per_stage=1, seed=3)
    return PipelineConfig(**{**base, **overrides})


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
