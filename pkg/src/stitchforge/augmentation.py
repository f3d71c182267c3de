"""Pseudo-stitching pair synthesis and its two augmentations.

A single-view image masked by a harvested (reference, target) mask pair
simulates a stitched pair. Uneven hue is simulated by color jitter on the
reference stream only; large parallax by a random translation of the source
image before the reference mask is applied, with ranges chosen so the mask's
enclosing rectangle never samples outside the image.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyMask, NotThreeChannel
from .geometry import Homography
from .kernels import warp_bilinear
from .mask_distribution import MaskPair, bounding_box


@dataclass(frozen=True)
class ColorJitterConfig:
    """Half-ranges for brightness/contrast/saturation factors and hue turns."""

    e_brightness: float = 0.2
    e_contrast: float = 0.2
    e_saturation: float = 0.2
    e_hue: float = 0.1
    p_apply: float = 0.25

    def __post_init__(self):
        for name in ("e_brightness", "e_contrast", "e_saturation", "e_hue"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.e_hue > 0.5:
            raise ValueError("e_hue is in turns and must be <= 0.5")
        if not 0.0 <= self.p_apply <= 1.0:
            raise ValueError("p_apply must be in [0, 1]")


@dataclass(frozen=True)
class AffineMisalignConfig:
    p_apply: float = 0.25

    def __post_init__(self):
        if not 0.0 <= self.p_apply <= 1.0:
            raise ValueError("p_apply must be in [0, 1]")


@dataclass(frozen=True)
class JitterFactors:
    order: tuple
    brightness: float
    contrast: float
    saturation: float
    hue_shift: float

    def to_dict(self) -> dict:
        return {
            "order": list(self.order),
            "brightness": self.brightness,
            "contrast": self.contrast,
            "saturation": self.saturation,
            "hue_shift": self.hue_shift,
        }


@dataclass
class PseudoPair:
    """Masked reference/target crops of one source image, plus what was applied."""

    i_wr_tilde: np.ndarray
    i_wt_tilde: np.ndarray
    m_wr: np.ndarray
    m_wt: np.ndarray
    source_image_id: str = ""
    mask_pair_id: str = ""
    applied_jitter: JitterFactors | None = None
    applied_translation: tuple | None = None

    def __post_init__(self):
        shape = self.m_wr.shape
        for name in ("i_wr_tilde", "i_wt_tilde", "m_wt"):
            if getattr(self, name).shape[:2] != shape:
                raise DimensionMismatch(f"{name} does not match mask shape {shape}")


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.max(rgb, axis=-1)
    minc = np.min(rgb, axis=-1)
    delta = maxc - minc
    safe = np.where(delta == 0, 1.0, delta)
    h = np.zeros_like(maxc)
    h = np.where(maxc == r, ((g - b) / safe) % 6.0, h)
    h = np.where((maxc == g) & (maxc != r), (b - r) / safe + 2.0, h)
    h = np.where((maxc == b) & (maxc != r) & (maxc != g), (r - g) / safe + 4.0, h)
    h = np.where(delta == 0, 0.0, h) / 6.0
    s = np.where(maxc == 0, 0.0, delta / np.where(maxc == 0, 1.0, maxc))
    return np.stack([h, s, maxc], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def _grayscale(img: np.ndarray) -> np.ndarray:
    return 0.2989 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def _blend(img: np.ndarray, other: np.ndarray, factor: float) -> np.ndarray:
    return np.clip(factor * img + (1.0 - factor) * other, 0.0, 1.0)


def _apply_one(img: np.ndarray, op: str, factors: JitterFactors) -> np.ndarray:
    if op == "brightness":
        return _blend(img, np.zeros_like(img), factors.brightness)
    if op == "contrast":
        mean = np.full_like(img, _grayscale(img).mean())
        return _blend(img, mean, factors.contrast)
    if op == "saturation":
        gray = np.repeat(_grayscale(img)[..., None], 3, axis=-1)
        return _blend(img, gray, factors.saturation)
    if op == "hue":
        if factors.hue_shift == 0.0:
            return img
        hsv = rgb_to_hsv(np.clip(img, 0.0, 1.0))
        hsv[..., 0] = (hsv[..., 0] + factors.hue_shift) % 1.0
        return np.clip(hsv_to_rgb(hsv), 0.0, 1.0)
    raise ValueError(f"unknown jitter op {op!r}")


_OPS = ("brightness", "contrast", "saturation", "hue")


def draw_jitter(cfg: ColorJitterConfig, rng: np.random.Generator) -> JitterFactors | None:
    """Sample the jitter decision and factors; None when the draw skips it.

    Always consumes the same rng stream regardless of outcome, so downstream
    draws stay aligned across configurations.
    """
    apply = rng.random() < cfg.p_apply
    brightness = rng.uniform(max(0.0, 1.0 - cfg.e_brightness), 1.0 + cfg.e_brightness)
    contrast = rng.uniform(max(0.0, 1.0 - cfg.e_contrast), 1.0 + cfg.e_contrast)
    saturation = rng.uniform(max(0.0, 1.0 - cfg.e_saturation), 1.0 + cfg.e_saturation)
    hue_shift = rng.uniform(-cfg.e_hue, cfg.e_hue)
    order = tuple(_OPS[k] for k in rng.permutation(4))
    if not apply:
        return None
    return JitterFactors(
        order=order,
        brightness=brightness,
        contrast=contrast,
        saturation=saturation,
        hue_shift=hue_shift,
    )


def apply_jitter(img: np.ndarray, factors: JitterFactors) -> np.ndarray:
    if img.ndim != 3 or img.shape[2] != 3:
        raise NotThreeChannel(f"color jitter needs (H, W, 3), got {img.shape}")
    out = img
    for op in factors.order:
        out = _apply_one(out, op, factors)
    return out


def color_jitter(img: np.ndarray, cfg: ColorJitterConfig, rng) -> np.ndarray:
    """With probability ``p_apply``, jitter brightness/contrast/saturation/hue
    in random order; otherwise return the input unchanged."""
    if img.ndim != 3 or img.shape[2] != 3:
        raise NotThreeChannel(f"color jitter needs (H, W, 3), got {img.shape}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    factors = draw_jitter(cfg, rng)
    if factors is None:
        return img
    return apply_jitter(img, factors)


def translation_ranges(m_wr: np.ndarray) -> tuple:
    """Valid (t_x, t_y) intervals so the mask's enclosing rectangle never
    samples outside the image: t_x in [-(W-x_max), x_min], likewise for y."""
    box = bounding_box(m_wr)
    h, w = m_wr.shape
    return ((-(w - box.x_max), box.x_min), (-(h - box.y_max), box.y_min))


def translate_image(img: np.ndarray, tx: float, ty: float) -> np.ndarray:
    """Shift content by (+tx, +ty) with bilinear resampling, zero fill."""
    inv = np.linalg.inv(Homography.translation(tx, ty).m)
    return warp_bilinear(img, inv, img.shape[0], img.shape[1])


def affine_misalign(
    i_sg: np.ndarray,
    m_wr: np.ndarray,
    cfg: AffineMisalignConfig,
    rng,
) -> tuple:
    """Eq.-style misalignment branch: returns (reference stream, translation).

    With probability ``p_apply`` the source image is translated by a draw from
    the mask-safe ranges and then masked; otherwise the plain masked source is
    returned and the translation is None.
    """
    if i_sg.shape[:2] != m_wr.shape:
        raise DimensionMismatch(
            f"image {i_sg.shape[:2]} vs mask {m_wr.shape}"
        )
    if not m_wr.any():
        raise EmptyMask("misalignment needs a non-empty reference mask")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    mask = m_wr.astype(np.float64)[:, :, None]
    if rng.random() >= cfg.p_apply:
        return i_sg * mask, None
    (tx_lo, tx_hi), (ty_lo, ty_hi) = translation_ranges(m_wr)
    tx = rng.uniform(tx_lo, tx_hi)
    ty = rng.uniform(ty_lo, ty_hi)
    return translate_image(i_sg, tx, ty) * mask, (tx, ty)


def make_pseudo_pair(i_sg: np.ndarray, mp: MaskPair) -> PseudoPair:
    """Mask one source image into a pseudo reference/target pair."""
    if i_sg.shape[:2] != mp.shape:
        raise DimensionMismatch(
            f"source image {i_sg.shape[:2]} vs masks {mp.shape}"
        )
    return PseudoPair(
        i_wr_tilde=i_sg * mp.m_wr.astype(np.float64)[:, :, None],
        i_wt_tilde=i_sg * mp.m_wt.astype(np.float64)[:, :, None],
        m_wr=mp.m_wr,
        m_wt=mp.m_wt,
        mask_pair_id=mp.source_id,
    )


def synthesize_pseudo_pair(
    i_sg: np.ndarray,
    mp: MaskPair,
    cj_cfg: ColorJitterConfig,
    at_cfg: AffineMisalignConfig,
    rng,
    source_image_id: str = "",
) -> PseudoPair:
    """Full synthesis: misalignment branch, then jitter on the masked
    reference stream (re-masked so the background stays exactly zero)."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    ref, translation = affine_misalign(i_sg, mp.m_wr, at_cfg, rng)
    factors = draw_jitter(cj_cfg, rng)
    if factors is not None:
        ref = apply_jitter(ref, factors) * mp.m_wr.astype(np.float64)[:, :, None]
    return PseudoPair(
        i_wr_tilde=ref,
        i_wt_tilde=i_sg * mp.m_wt.astype(np.float64)[:, :, None],
        m_wr=mp.m_wr,
        m_wt=mp.m_wt,
        source_image_id=source_image_id,
        mask_pair_id=mp.source_id,
        applied_jitter=factors,
        applied_translation=translation,
    )
