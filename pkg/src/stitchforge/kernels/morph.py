"""Square-element dilation and separable Gaussian blur (vectorized NumPy).

Both operators use a k x k window anchored at floor(k/2); the dilation pads
with zeros (outside the canvas counts as background) while the blur pads
symmetrically so constant rasters are fixed points.
"""

import numpy as np


def gaussian_taps(k: int, sigma: float | None = None) -> np.ndarray:
    """1-D normalized Gaussian taps of length ``k``.

    ``sigma`` defaults to 0.3*((k-1)*0.5 - 1) + 0.8. The last tap is adjusted
    so the taps sum to exactly 1.0 under left-to-right accumulation, which
    keeps constant inputs bit-exact through the blur.
    """
    if k < 1:
        raise ValueError("kernel size must be >= 1")
    if sigma is None:
        sigma = 0.3 * ((k - 1) * 0.5 - 1.0) + 0.8
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x = np.arange(k, dtype=np.float64) - (k - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g /= g.sum()
    if k > 1:
        partial = 0.0
        for v in g[:-1]:
            partial += v
        g[-1] = 1.0 - partial
    return g


def _corr1d(a: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    k = taps.shape[0]
    anchor = k // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (anchor, k - 1 - anchor)
    ap = np.pad(a, pad, mode="symmetric")
    out = np.zeros_like(a)
    n = a.shape[axis]
    for u in range(k):
        sl = [slice(None), slice(None)]
        sl[axis] = slice(u, u + n)
        out += taps[u] * ap[tuple(sl)]
    return out


def separable_blur(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Correlate a 2-D raster with ``taps`` along rows then columns."""
    a = np.asarray(img, dtype=np.float64)
    return _corr1d(_corr1d(a, taps, axis=1), taps, axis=0)


def dilate_max_filter(mask: np.ndarray, k: int) -> np.ndarray:
    """Binary dilation by a k x k all-ones element (max filter, zero padding)."""
    m = np.asarray(mask, dtype=np.uint8)
    if k == 1:
        return m.copy()
    anchor = k // 2
    out = m
    for axis in (0, 1):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (anchor, k - 1 - anchor)
        ap = np.pad(out, pad, mode="constant")
        n = out.shape[axis]
        acc = np.zeros_like(out)
        for u in range(k):
            sl = [slice(None), slice(None)]
            sl[axis] = slice(u, u + n)
            np.maximum(acc, ap[tuple(sl)], out=acc)
        out = acc
    return out
