"""Fast-marching inpainting: propagate values from the known region inward.

Hole pixels are filled in increasing arrival-time order (eikonal distance to
the known boundary, ties broken row-major), each as a normalized weighted
average of non-hole pixels within the fill radius. Weights combine a
direction factor (alignment with the marching normal), an inverse-square
distance factor, and a level-set factor. Filled values therefore stay inside
the [min, max] envelope of the known pixels, and known pixels are never
touched.
"""

import heapq

import numpy as np

from . import USE_NUMBA

if USE_NUMBA:
    from numba import njit
else:  # pragma: no cover - exercised via STITCHFORGE_NUMBA=0 runs
    def njit(*args, **kwargs):
        def wrap(func):
            return func
        return wrap(args[0]) if args and callable(args[0]) else wrap

KNOWN = 0
BAND = 1
INSIDE = 2
LARGE = 1.0e6


@njit(cache=True)
def _solve_step(t1, f1, t2, f2):
    if f1 != INSIDE:
        if f2 != INSIDE:
            d = t1 - t2
            if d >= 1.0 or d <= -1.0:
                return 1.0 + min(t1, t2)
            return (t1 + t2 + np.sqrt(2.0 - d * d)) * 0.5
        return 1.0 + t1
    if f2 != INSIDE:
        return 1.0 + t2
    return 1.0 + min(t1, t2)


@njit(cache=True)
def _arrival_time(flags, T, i, j, h, w):
    tv_lo = T[i - 1, j] if i > 0 else LARGE
    fv_lo = flags[i - 1, j] if i > 0 else INSIDE
    tv_hi = T[i + 1, j] if i < h - 1 else LARGE
    fv_hi = flags[i + 1, j] if i < h - 1 else INSIDE
    th_lo = T[i, j - 1] if j > 0 else LARGE
    fh_lo = flags[i, j - 1] if j > 0 else INSIDE
    th_hi = T[i, j + 1] if j < w - 1 else LARGE
    fh_hi = flags[i, j + 1] if j < w - 1 else INSIDE
    t = _solve_step(tv_lo, fv_lo, th_lo, fh_lo)
    t = min(t, _solve_step(tv_lo, fv_lo, th_hi, fh_hi))
    t = min(t, _solve_step(tv_hi, fv_hi, th_lo, fh_lo))
    t = min(t, _solve_step(tv_hi, fv_hi, th_hi, fh_hi))
    return t


@njit(cache=True)
def _fill_pixel(img, flags, T, acc, i, j, radius, h, w, c):
    # marching normal = grad T at (i, j): central differences where both
    # neighbors are outside the hole, one-sided otherwise
    gx = 0.0
    left_ok = j > 0 and flags[i, j - 1] != INSIDE
    right_ok = j < w - 1 and flags[i, j + 1] != INSIDE
    if left_ok and right_ok:
        gx = (T[i, j + 1] - T[i, j - 1]) * 0.5
    elif right_ok:
        gx = T[i, j + 1] - T[i, j]
    elif left_ok:
        gx = T[i, j] - T[i, j - 1]
    gy = 0.0
    up_ok = i > 0 and flags[i - 1, j] != INSIDE
    down_ok = i < h - 1 and flags[i + 1, j] != INSIDE
    if up_ok and down_ok:
        gy = (T[i + 1, j] - T[i - 1, j]) * 0.5
    elif down_ok:
        gy = T[i + 1, j] - T[i, j]
    elif up_ok:
        gy = T[i, j] - T[i - 1, j]

    for ch in range(c):
        acc[ch] = 0.0
    wsum = 0.0
    r2max = radius * radius
    k_lo = i - radius if i - radius > 0 else 0
    k_hi = i + radius if i + radius < h - 1 else h - 1
    l_lo = j - radius if j - radius > 0 else 0
    l_hi = j + radius if j + radius < w - 1 else w - 1
    for k in range(k_lo, k_hi + 1):
        for l in range(l_lo, l_hi + 1):
            if k == i and l == j:
                continue
            if flags[k, l] == INSIDE:
                continue
            rx = float(j - l)
            ry = float(i - k)
            r2 = rx * rx + ry * ry
            if r2 > r2max:
                continue
            rlen = np.sqrt(r2)
            direction = (rx * gx + ry * gy) / rlen
            if direction < 1e-6 and direction > -1e-6:
                direction = 1e-6
            dst = 1.0 / r2
            lev = 1.0 / (1.0 + abs(T[k, l] - T[i, j]))
            wgt = abs(direction * dst * lev)
            for ch in range(c):
                acc[ch] += wgt * img[k, l, ch]
            wsum += wgt
    for ch in range(c):
        img[i, j, ch] = acc[ch] / wsum


@njit(cache=True)
def _march(img, flags, T, radius):
    h, w = flags.shape
    c = img.shape[2]
    acc = np.zeros(c, dtype=np.float64)

    heap = [(0.0, np.int64(-1))]
    heap.pop()
    for i in range(h):
        for j in range(w):
            if flags[i, j] == BAND:
                heap.append((0.0, np.int64(i * w + j)))
    heapq.heapify(heap)

    while len(heap) > 0:
        _, idx = heapq.heappop(heap)
        i = idx // w
        j = idx % w
        if flags[i, j] == KNOWN:
            continue
        flags[i, j] = KNOWN
        for n in range(4):
            if n == 0:
                ni, nj = i - 1, j
            elif n == 1:
                ni, nj = i + 1, j
            elif n == 2:
                ni, nj = i, j - 1
            else:
                ni, nj = i, j + 1
            if ni < 0 or ni >= h or nj < 0 or nj >= w:
                continue
            f = flags[ni, nj]
            if f == KNOWN:
                continue
            tnew = _arrival_time(flags, T, ni, nj, h, w)
            if f == INSIDE:
                T[ni, nj] = tnew
                _fill_pixel(img, flags, T, acc, ni, nj, radius, h, w, c)
                flags[ni, nj] = BAND
                heapq.heappush(heap, (tnew, np.int64(ni * w + nj)))
            elif tnew < T[ni, nj]:
                T[ni, nj] = tnew
                heapq.heappush(heap, (tnew, np.int64(ni * w + nj)))


def fmm_inpaint(img: np.ndarray, known: np.ndarray, radius: int) -> np.ndarray:
    """Fill the complement of ``known`` in ``img``; returns a new array.

    ``img`` may be (H, W) or (H, W, C). ``known`` is a {0,1} mask of pixels
    to keep. Assumes ``known`` has non-empty support (validated by callers).
    """
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    out = np.ascontiguousarray(img, dtype=np.float64).copy()
    known = np.ascontiguousarray(known, dtype=np.uint8)
    if known.all():
        return out[:, :, 0] if squeeze else out

    flags = np.where(known > 0, np.uint8(KNOWN), np.uint8(INSIDE))
    T = np.where(known > 0, 0.0, LARGE)
    inside = flags == INSIDE
    ring = np.zeros_like(inside)
    ring[:-1, :] |= inside[1:, :]
    ring[1:, :] |= inside[:-1, :]
    ring[:, :-1] |= inside[:, 1:]
    ring[:, 1:] |= inside[:, :-1]
    flags[ring & (flags == KNOWN)] = BAND

    _march(out, flags, T, int(radius))
    return out[:, :, 0] if squeeze else out
