"""Inverse-mapped bilinear resampling under a 3x3 projective transform.

Convention: pixel (row i, col j) samples the continuous point (x=j, y=i).
``inv`` maps destination coordinates to source coordinates. Destination
pixels whose source point falls outside [0, W-1] x [0, H-1], or whose
projective w-coordinate is non-positive, are exactly 0.
"""

import numpy as np

from . import USE_NUMBA

if USE_NUMBA:
    from numba import njit
else:  # pragma: no cover - exercised via STITCHFORGE_NUMBA=0 runs
    def njit(*args, **kwargs):
        def wrap(func):
            return func
        return wrap(args[0]) if args and callable(args[0]) else wrap


@njit(cache=True)
def _warp_loop(src, inv, out):
    h, w, c = src.shape
    oh, ow = out.shape[0], out.shape[1]
    for i in range(oh):
        for j in range(ow):
            ww = inv[2, 0] * j + inv[2, 1] * i + inv[2, 2]
            if ww <= 1e-12:
                continue
            sx = (inv[0, 0] * j + inv[0, 1] * i + inv[0, 2]) / ww
            sy = (inv[1, 0] * j + inv[1, 1] * i + inv[1, 2]) / ww
            if sx < 0.0 or sx > w - 1 or sy < 0.0 or sy > h - 1:
                continue
            x0 = int(np.floor(sx))
            y0 = int(np.floor(sy))
            dx = sx - x0
            dy = sy - y0
            x1 = x0 + 1 if x0 + 1 <= w - 1 else x0
            y1 = y0 + 1 if y0 + 1 <= h - 1 else y0
            w00 = (1.0 - dx) * (1.0 - dy)
            w01 = dx * (1.0 - dy)
            w10 = (1.0 - dx) * dy
            w11 = dx * dy
            for k in range(c):
                out[i, j, k] = (
                    w00 * src[y0, x0, k]
                    + w01 * src[y0, x1, k]
                    + w10 * src[y1, x0, k]
                    + w11 * src[y1, x1, k]
                )


def _warp_vec(src, inv, out):
    h, w, _ = src.shape
    oh, ow = out.shape[0], out.shape[1]
    jj, ii = np.meshgrid(np.arange(ow, dtype=np.float64),
                         np.arange(oh, dtype=np.float64))
    ww = inv[2, 0] * jj + inv[2, 1] * ii + inv[2, 2]
    valid = ww > 1e-12
    ww_safe = np.where(valid, ww, 1.0)
    sx = (inv[0, 0] * jj + inv[0, 1] * ii + inv[0, 2]) / ww_safe
    sy = (inv[1, 0] * jj + inv[1, 1] * ii + inv[1, 2]) / ww_safe
    valid &= (sx >= 0.0) & (sx <= w - 1) & (sy >= 0.0) & (sy <= h - 1)
    sx = np.where(valid, sx, 0.0)
    sy = np.where(valid, sy, 0.0)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    dx = sx - x0
    dy = sy - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    w00 = (1.0 - dx) * (1.0 - dy)
    w01 = dx * (1.0 - dy)
    w10 = (1.0 - dx) * dy
    w11 = dx * dy
    sampled = (
        w00[..., None] * src[y0, x0]
        + w01[..., None] * src[y0, x1]
        + w10[..., None] * src[y1, x0]
        + w11[..., None] * src[y1, x1]
    )
    out[:] = np.where(valid[..., None], sampled, 0.0)


def warp_bilinear(src: np.ndarray, inv: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample ``src`` onto an (out_h, out_w) grid through ``inv`` (dst -> src).

    ``src`` may be (H, W) or (H, W, C); the output shape mirrors it.
    """
    squeeze = src.ndim == 2
    if squeeze:
        src = src[:, :, None]
    src = np.ascontiguousarray(src, dtype=np.float64)
    inv = np.ascontiguousarray(inv, dtype=np.float64)
    out = np.zeros((out_h, out_w, src.shape[2]), dtype=np.float64)
    if USE_NUMBA:
        _warp_loop(src, inv, out)
    else:
        _warp_vec(src, inv, out)
    return out[:, :, 0] if squeeze else out
