"""Kernel backend selection.

The compiled Cython extension is used when it was built; otherwise, or when
``CODIFF_PURE_PYTHON=1`` is set, the numpy fallback is used. Both expose the
same functions.
"""
import os

from . import _fallback

if os.environ.get("CODIFF_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

mixture_score = _impl.mixture_score
ddpm_update = _impl.ddpm_update
ssim_mean = _impl.ssim_mean
quantize_codes = _impl.quantize_codes
pack_codes = _impl.pack_codes
unpack_codes = _impl.unpack_codes


def compiled_available() -> bool:
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return False
    return True


def get_backend(name: str):
    """Return the module implementing backend ``name`` ('cython' or 'python')."""
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
