"""Harvesting and sampling the pre-knowledge mask-pair distribution.

Each aligned real pair contributes its (reference, target) valid-region
masks; pseudo-sample synthesis later draws uniformly from the collection.
Masks are stored at full canvas resolution since their bounding boxes drive
the misalignment ranges.
"""

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyDistribution, EmptyMask, IoError
from .geometry import AlignedPair
from .imageio import load_binary_mask, save_binary_mask


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle, inclusive-exclusive on both axes."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise EmptyMask("rectangle has empty extent")


@dataclass
class MaskPair:
    m_wr: np.ndarray
    m_wt: np.ndarray
    source_id: str

    def __post_init__(self):
        if self.m_wr.shape != self.m_wt.shape:
            raise EmptyMask(
                f"mask shapes differ: {self.m_wr.shape} vs {self.m_wt.shape}"
            )
        if not self.m_wr.any() or not self.m_wt.any():
            raise EmptyMask(f"mask pair {self.source_id!r} has empty support")

    @property
    def shape(self):
        return self.m_wr.shape


@dataclass
class MaskDistribution:
    pairs: list

    def __post_init__(self):
        if len(self.pairs) < 1:
            raise EmptyDistribution("distribution needs at least one mask pair")

    @property
    def n(self) -> int:
        return len(self.pairs)


def collect_mask_pair(pair: AlignedPair, source_id: str | None = None) -> MaskPair:
    """Extract the (m_wr, m_wt) masks of an aligned pair, unchanged."""
    sid = pair.source_id if source_id is None else source_id
    return MaskPair(
        m_wr=pair.m_wr.astype(np.uint8),
        m_wt=pair.m_wt.astype(np.uint8),
        source_id=sid,
    )


def sample_mask_pair(dist: MaskDistribution, rng) -> MaskPair:
    """Uniform draw from the distribution; ``rng`` is a seed or Generator."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return dist.pairs[int(rng.integers(dist.n))]


def bounding_box(mask: np.ndarray) -> Rect:
    """Tightest axis-aligned rectangle containing all set pixels."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise EmptyMask("bounding box of an empty mask")
    return Rect(
        x_min=int(cols[0]),
        y_min=int(rows[0]),
        x_max=int(cols[-1]) + 1,
        y_max=int(rows[-1]) + 1,
    )


def derive_seed(global_seed: int, sample_id: str) -> int:
    """Stable per-sample seed so parallel generation is order-independent."""
    digest = hashlib.sha256(f"{global_seed}|{sample_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def save_distribution(dist: MaskDistribution, directory) -> None:
    """Write ``index.txt`` plus per-pair ``<id>_wr.png`` / ``<id>_wt.png``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for pair in dist.pairs:
        save_binary_mask(directory / f"{pair.source_id}_wr.png", pair.m_wr)
        save_binary_mask(directory / f"{pair.source_id}_wt.png", pair.m_wt)
    index = "".join(f"{pair.source_id}\n" for pair in dist.pairs)
    (directory / "index.txt").write_text(index)


def load_distribution(directory) -> MaskDistribution:
    directory = Path(directory)
    index = directory / "index.txt"
    if not index.is_file():
        raise IoError(f"missing distribution index {index}")
    ids = [line.strip() for line in index.read_text().splitlines() if line.strip()]
    if not ids:
        raise EmptyDistribution(f"{index} lists no mask pairs")
    pairs = [
        MaskPair(
            m_wr=load_binary_mask(directory / f"{sid}_wr.png"),
            m_wt=load_binary_mask(directory / f"{sid}_wt.png"),
            source_id=sid,
        )
        for sid in ids
    ]
    return MaskDistribution(pairs=pairs)
