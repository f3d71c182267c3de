"""Perspective warping of images and masks onto a shared canvas.

A stitching pair is aligned by warping the reference image through its 3x3
homography and the target through the identity, both onto a canvas big enough
to hold the union of their footprints. Canvas offsets are folded into a
translation pre-multiplied onto the homography, so downstream code only ever
sees one matrix per raster.

Coordinate convention: pixel (row i, col j) samples continuous point
(x=j, y=i); the image rectangle spans [0, W] x [0, H] for canvas sizing.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProjection, DimensionMismatch, NonInvertibleHomography
from .kernels import warp_bilinear


@dataclass(frozen=True)
class Homography:
    """3x3 projective transform, normalized so the bottom-right entry is 1."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (3, 3):
            raise NonInvertibleHomography(f"expected 3x3 matrix, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NonInvertibleHomography("matrix contains non-finite entries")
        if abs(np.linalg.det(m)) <= 1e-12:
            raise NonInvertibleHomography("matrix determinant below 1e-12")
        if abs(m[2, 2]) <= 1e-12:
            raise DegenerateProjection("cannot normalize: bottom-right entry is ~0")
        m = m / m[2, 2]
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        return cls(np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]]))

    @classmethod
    def from_file(cls, path) -> "Homography":
        """Read 9 whitespace-separated numbers (row-major) from a text file."""
        values = [float(tok) for tok in open(path).read().split()]
        if len(values) != 9:
            raise NonInvertibleHomography(
                f"{path}: expected 9 numbers, found {len(values)}"
            )
        return cls(np.array(values, dtype=np.float64).reshape(3, 3))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.m))

    def compose(self, other: "Homography") -> "Homography":
        """Return the transform applying ``other`` first, then ``self``."""
        return Homography(self.m @ other.m)


@dataclass(frozen=True)
class CanvasSpec:
    """Shared canvas size and the translation that keeps content non-negative."""

    width: int
    height: int
    offset_x: int = 0
    offset_y: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DegenerateProjection("canvas collapsed to zero size")
        if self.offset_x < 0 or self.offset_y < 0:
            raise DegenerateProjection("canvas offsets must be non-negative")

    def placement(self) -> Homography:
        return Homography.translation(self.offset_x, self.offset_y)


@dataclass
class AlignedPair:
    """Warped reference/target images with their valid-region masks."""

    i_wr: np.ndarray
    i_wt: np.ndarray
    m_wr: np.ndarray
    m_wt: np.ndarray
    canvas: CanvasSpec
    source_id: str = ""

    def __post_init__(self):
        shape = (self.canvas.height, self.canvas.width)
        for name in ("i_wr", "i_wt", "m_wr", "m_wt"):
            raster = getattr(self, name)
            if raster.shape[:2] != shape:
                raise DimensionMismatch(
                    f"{name} shape {raster.shape[:2]} != canvas {shape}"
                )


def _project_corners(h: Homography, size: tuple[int, int]) -> np.ndarray:
    w, ht = size
    corners = np.array(
        [[0.0, 0.0, 1.0], [w, 0.0, 1.0], [0.0, ht, 1.0], [w, ht, 1.0]]
    )
    mapped = corners @ h.m.T
    if np.any(mapped[:, 2] <= 1e-12):
        raise DegenerateProjection("a corner projects behind the camera plane")
    return mapped[:, :2] / mapped[:, 2:3]


def compute_canvas(
    h: Homography, ref_size: tuple[int, int], tgt_size: tuple[int, int]
) -> CanvasSpec:
    """Bounding box of the target rectangle union the warped reference corners.

    Parameters
    ----------
    h : Homography
        Transform applied to the reference image.
    ref_size, tgt_size : (width, height)
        Source sizes in pixels.
    """
    ref_pts = _project_corners(h, ref_size)
    tgt_pts = _project_corners(Homography.identity(), tgt_size)
    pts = np.vstack([ref_pts, tgt_pts])
    min_x, min_y = pts.min(axis=0)
    max_x, max_y = pts.max(axis=0)
    offset_x = int(math.ceil(-min_x - 1e-9)) if min_x < 0 else 0
    offset_y = int(math.ceil(-min_y - 1e-9)) if min_y < 0 else 0
    width = int(math.ceil(max_x - 1e-9)) + offset_x
    height = int(math.ceil(max_y - 1e-9)) + offset_y
    return CanvasSpec(width=width, height=height, offset_x=offset_x, offset_y=offset_y)


def warp_image(img: np.ndarray, h: Homography, canvas: CanvasSpec) -> np.ndarray:
    """Inverse-mapped bilinear warp of ``img`` onto the canvas.

    Output pixels outside the source footprint are exactly 0; an identity
    transform onto a zero-offset same-size canvas reproduces the input
    bit-exactly.
    """
    full = canvas.placement().compose(h)
    inv = np.linalg.inv(full.m)
    return warp_bilinear(img, inv, canvas.height, canvas.width)


def warp_mask(
    h: Homography, src_size: tuple[int, int], canvas: CanvasSpec
) -> np.ndarray:
    """Warp an all-ones raster of ``src_size`` and binarize at 0.5."""
    w, ht = src_size
    ones = np.ones((ht, w), dtype=np.float64)
    warped = warp_image(ones, h, canvas)
    return (warped >= 0.5).astype(np.uint8)


def align_pair(
    i_r: np.ndarray,
    i_t: np.ndarray,
    h: Homography,
    source_id: str = "",
) -> AlignedPair:
    """Warp a raw (reference, target) pair onto their shared canvas."""
    ref_size = (i_r.shape[1], i_r.shape[0])
    tgt_size = (i_t.shape[1], i_t.shape[0])
    canvas = compute_canvas(h, ref_size, tgt_size)
    identity = Homography.identity()
    return AlignedPair(
        i_wr=warp_image(i_r, h, canvas),
        i_wt=warp_image(i_t, identity, canvas),
        m_wr=warp_mask(h, ref_size, canvas),
        m_wt=warp_mask(identity, tgt_size, canvas),
        canvas=canvas,
        source_id=source_id,
    )
