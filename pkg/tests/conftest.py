import numpy as np
import pytest

from stitchforge.kernels import fmm_inpaint, warp_bilinear


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Pay any JIT compilation cost before timed tests run."""
    img = np.full((6, 6, 3), 0.5)
    warp_bilinear(img, np.eye(3), 6, 6)
    known = np.ones((6, 6), np.uint8)
    known[2:4, 2:4] = 0
    fmm_inpaint(img, known, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_mask(rng, h, w, fill=0.5):
    """Random binary mask guaranteed non-empty."""
    m = (rng.random((h, w)) < fill).astype(np.uint8)
    if not m.any():
        m[h // 2, w // 2] = 1
    return m
