"""Hot numeric kernels: numba-jitted by default, pure NumPy/Python fallback.

Set ``STITCHFORGE_NUMBA=0`` in the environment to force the fallback path
(useful for debugging and for environments without LLVM). The active path is
reported by :func:`active_backend`. ``benchmarks/bench_kernels.py`` compares
the two.
"""

import os


def _numba_enabled() -> bool:
    flag = os.environ.get("STITCHFORGE_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USE_NUMBA = _numba_enabled()


def active_backend() -> str:
    """Return "numba" or "numpy" depending on which kernel path is live."""
    return "numba" if USE_NUMBA else "numpy"


from .warp import warp_bilinear  # noqa: E402
from .fmm import fmm_inpaint  # noqa: E402
from .morph import dilate_max_filter, separable_blur, gaussian_taps  # noqa: E402

__all__ = [
    "USE_NUMBA",
    "active_backend",
    "warp_bilinear",
    "fmm_inpaint",
    "dilate_max_filter",
    "separable_blur",
    "gaussian_taps",
]
