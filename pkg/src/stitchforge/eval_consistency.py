"""Content-consistency metrics between stitched results.

PSNR and SSIM operate on [0, 1] data; the masked variants multiply both
images by the overlap mask before the standard metric call (the spatial
average still runs over the full frame, which biases values near the mask
boundary -- documented behavior, not corrected).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, TooSmall

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def _check_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for [0,1] data, capped at 100 dB."""
    _check_shapes(a, b)
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, -10.0 * np.log10(mse))


def _ssim_window() -> np.ndarray:
    x = np.arange(SSIM_WINDOW, dtype=np.float64) - (SSIM_WINDOW - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
    w = np.outer(g, g)
    return w / w.sum()


def _filter_valid(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable 'valid'-mode correlation of a 2-D array with 1-D taps."""
    k = taps.shape[0]
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=1) @ taps
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=0) @ taps


def _ssim_channel(x: np.ndarray, y: np.ndarray, taps: np.ndarray) -> float:
    mu_x = _filter_valid(x, taps)
    mu_y = _filter_valid(y, taps)
    sigma_x = _filter_valid(x * x, taps) - mu_x * mu_x
    sigma_y = _filter_valid(y * y, taps) - mu_y * mu_y
    sigma_xy = _filter_valid(x * y, taps) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * sigma_xy + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (sigma_x + sigma_y + SSIM_C2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), channel-averaged."""
    _check_shapes(a, b)
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise TooSmall(
            f"image {a.shape[:2]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    x = np.arange(SSIM_WINDOW, dtype=np.float64) - (SSIM_WINDOW - 1) / 2.0
    taps = np.exp(-(x * x) / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
    taps /= taps.sum()
    scores = [_ssim_channel(a[:, :, c], b[:, :, c], taps) for c in range(a.shape[2])]
    return float(np.mean(scores))


def overlap_mask(m_wr: np.ndarray, m_wt: np.ndarray) -> np.ndarray:
    """Complement of the masks' bitwise AND: 1 outside the overlap region."""
    _check_shapes(m_wr, m_wt)
    return (1 - (m_wr.astype(np.uint8) & m_wt.astype(np.uint8))).astype(np.uint8)


def _apply_mask(img: np.ndarray, m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if img.ndim == 3 and m.ndim == 2:
        m = m[:, :, None]
    if img.shape[:2] != m.shape[:2]:
        raise DimensionMismatch(f"image {img.shape[:2]} vs mask {m.shape[:2]}")
    return np.asarray(img, dtype=np.float64) * m


def masked_psnr(a: np.ndarray, b: np.ndarray, m_o: np.ndarray) -> float:
    return psnr(_apply_mask(a, m_o), _apply_mask(b, m_o))


def masked_ssim(a: np.ndarray, b: np.ndarray, m_o: np.ndarray) -> float:
    return ssim(_apply_mask(a, m_o), _apply_mask(b, m_o))


@dataclass
class ConsistencyReport:
    """Per-sample metrics plus subset means over D_S / D_L / D_F."""

    per_sample: dict = field(default_factory=dict)
    subsets: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add(self, sample_id: str, metrics: dict) -> None:
        self.per_sample[sample_id] = metrics

    def finalize(self, subset_tags: dict | None = None) -> None:
        """Compute subset means; D_F always covers every evaluated sample."""
        subset_tags = subset_tags or {}
        groups = {"D_F": list(self.per_sample)}
        for sid, tag in subset_tags.items():
            if sid in self.per_sample:
                groups.setdefault(f"D_{tag}", []).append(sid)
        metric_names = set()
        for metrics in self.per_sample.values():
            metric_names.update(metrics)
        self.subsets = {}
        for group, ids in sorted(groups.items()):
            means = {}
            for name in sorted(metric_names):
                values = [
                    self.per_sample[sid][name]
                    for sid in ids
                    if name in self.per_sample[sid]
                    and np.isfinite(self.per_sample[sid][name])
                ]
                means[name] = float(np.mean(values)) if values else None
            self.subsets[group] = {"count": len(ids), "means": means}

    def to_dict(self) -> dict:
        return {
            "per_sample": self.per_sample,
            "subsets": self.subsets,
            "meta": self.meta,
        }


def evaluate_pair(
    img1: np.ndarray,
    img2: np.ndarray,
    m_wr: np.ndarray | None = None,
    m_wt: np.ndarray | None = None,
    crop_to_union: bool = True,
) -> dict:
    """All consistency metrics for one pair of stitched results.

    When masks are given, metrics run on the union-support bounding-box crop
    (the fusion region) and the masked variants use the overlap mask.
    """
    _check_shapes(img1, img2)
    metrics = {}
    if m_wr is not None and m_wt is not None:
        from .mask_distribution import bounding_box

        union = (m_wr.astype(np.uint8) | m_wt.astype(np.uint8)).astype(np.uint8)
        m_o = overlap_mask(m_wr, m_wt)
        if crop_to_union:
            box = bounding_box(union)
            sl = (slice(box.y_min, box.y_max), slice(box.x_min, box.x_max))
            img1, img2, m_o = img1[sl], img2[sl], m_o[sl]
        metrics["mpsnr"] = masked_psnr(img1, img2, m_o)
        metrics["mssim"] = masked_ssim(img1, img2, m_o)
    metrics["psnr"] = psnr(img1, img2)
    metrics["ssim"] = ssim(img1, img2)
    return metrics
