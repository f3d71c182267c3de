"""Coarse-rectangling weak priors and seam gradient masks.

The pseudo pair is first flattened into a single composite (reference wins on
the overlap), then the canvas exterior is filled by fast-marching inpainting
to form a weak full-rectangle prior. Seam masks are dilated then blurred so
the inpainting boundary fades smoothly.
"""

from dataclasses import dataclass

import numpy as np

from .augmentation import PseudoPair
from .errors import AllUnknown, DimensionMismatch
from .kernels import dilate_max_filter, fmm_inpaint, gaussian_taps, separable_blur
from .mask_distribution import MaskPair


@dataclass(frozen=True)
class StructuringElement:
    """Square all-ones dilation element; even sizes anchor at floor(k/2)."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("structuring element size must be >= 1")


@dataclass(frozen=True)
class BlurKernel:
    k: int
    sigma: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("blur kernel size must be >= 1")
        if self.sigma < 0.0:
            raise ValueError("sigma must be positive")
        if self.sigma == 0.0:
            object.__setattr__(
                self, "sigma", 0.3 * ((self.k - 1) * 0.5 - 1.0) + 0.8
            )


@dataclass(frozen=True)
class InpaintRadius:
    r: int

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("inpaint radius must be >= 1")


def _radius(r) -> int:
    return r.r if isinstance(r, InpaintRadius) else int(r)


def _element(k) -> int:
    return k.k if isinstance(k, StructuringElement) else int(k)


def _kernel(k) -> BlurKernel:
    return k if isinstance(k, BlurKernel) else BlurKernel(int(k))


def composite_cf(pp: PseudoPair) -> np.ndarray:
    """Flatten a pseudo pair: reference content wins on the overlap, target
    fills its own non-overlap region."""
    if pp.i_wr_tilde.shape != pp.i_wt_tilde.shape:
        raise DimensionMismatch("pseudo pair images differ in shape")
    keep_target = (1 - (pp.m_wr & pp.m_wt)).astype(np.float64)[:, :, None]
    return np.clip(pp.i_wr_tilde + pp.i_wt_tilde * keep_target, 0.0, 1.0)


def telea_inpaint(img: np.ndarray, known: np.ndarray, r) -> np.ndarray:
    """Fill the complement of ``known``; known pixels come back bit-exact."""
    if img.shape[:2] != known.shape:
        raise DimensionMismatch(
            f"image {img.shape[:2]} vs known mask {known.shape}"
        )
    known = np.asarray(known, dtype=np.uint8)
    if not known.any():
        raise AllUnknown("known mask is empty: nothing to march from")
    return fmm_inpaint(img, known, _radius(r))


def coarse_rectangle(pp: PseudoPair, r) -> np.ndarray:
    """Composite the pair, then inpaint everything outside the union mask."""
    union = (pp.m_wr | pp.m_wt).astype(np.uint8)
    return telea_inpaint(composite_cf(pp), union, r)


def dilate(mask: np.ndarray, se) -> np.ndarray:
    """Morphological dilation by a k x k all-ones element."""
    return dilate_max_filter(mask, _element(se))


def gaussian_blur(mask: np.ndarray, kern) -> np.ndarray:
    """Separable Gaussian blur with symmetric borders and a normalized kernel."""
    kern = _kernel(kern)
    return separable_blur(mask, gaussian_taps(kern.k, kern.sigma))


def gradient_mask(m_wt: np.ndarray, kd, kg) -> np.ndarray:
    """Seam gradient mask: dilation then blur, values stay in [0, 1]."""
    soft = gaussian_blur(dilate(m_wt, kd).astype(np.float64), kg)
    return np.clip(soft, 0.0, 1.0)


def pseudo_fusion(i_sg: np.ndarray, mp: MaskPair) -> np.ndarray:
    """Source image masked by the union support (rectangling-only variant)."""
    if i_sg.shape[:2] != mp.shape:
        raise DimensionMismatch(
            f"source image {i_sg.shape[:2]} vs masks {mp.shape}"
        )
    union = (mp.m_wr | mp.m_wt).astype(np.float64)
    return i_sg * union[:, :, None]
