"""Kernel backend selection.

At import time the compiled extension is preferred and the numpy fallback
is used when it is absent.  ``LIQUIFORM_BACKEND`` overrides the choice:
``auto`` (default), ``ext`` (require the extension), ``python`` (force the
fallback).  ``benchmarks/bench_kernels.py`` compares the two.
"""

import os

import numpy as np

from . import _kernels_np

try:
    from . import _kernels as _ext_module
except ImportError:
    _ext_module = None

_ext = None


def ext_available() -> bool:
    """True when the compiled kernel module imported successfully."""
    return _ext_module is not None


def select_backend(choice: str | None = None) -> str:
    """Apply a backend choice and return the resulting name.

    ``choice`` of None reads ``LIQUIFORM_BACKEND`` (default ``auto``).
    ``ext`` raises ImportError when the extension is not built; any value
    outside {auto, ext, python} raises ValueError.
    """
    global _ext
    if choice is None:
        choice = os.environ.get("LIQUIFORM_BACKEND", "auto")
    choice = choice.lower()
    if choice == "python":
        _ext = None
    elif choice == "ext":
        if _ext_module is None:
            raise ImportError(
                "LIQUIFORM_BACKEND=ext but the compiled kernel module is not "
                "built; run pip install -e . --no-build-isolation"
            )
        _ext = _ext_module
    elif choice == "auto":
        _ext = _ext_module
    else:
        raise ValueError(f"LIQUIFORM_BACKEND must be auto, ext or python, got {choice!r}")
    return backend_name()


def backend_name() -> str:
    return "python" if _ext is None else "ext"


select_backend()

conv_out_size = _kernels_np.conv_out_size


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    """Unfold (B,C,H,W) into patch columns (B, C*kh*kw, HO*WO)."""
    if _ext is None:
        return _kernels_np.im2col(x, kh, kw, stride, padding)
    b, c, h, w = x.shape
    ho = conv_out_size(h, kh, stride, padding)
    wo = conv_out_size(w, kw, stride, padding)
    out = np.empty((b, c * kh * kw, ho * wo), dtype=x.dtype)
    _ext.im2col(np.ascontiguousarray(x), kh, kw, stride, padding, out)
    return out


def col2im(
    cols: np.ndarray,
    b: int,
    c: int,
    h: int,
    w: int,
    kh: int,
    kw: int,
    stride: int,
    padding: int,
) -> np.ndarray:
    """Scatter-add patch columns back to (B,C,H,W); adjoint of im2col."""
    if _ext is None:
        return _kernels_np.col2im(cols, b, c, h, w, kh, kw, stride, padding)
    out = np.zeros((b, c, h, w), dtype=cols.dtype)
    _ext.col2im(np.ascontiguousarray(cols), kh, kw, stride, padding, out)
    return out
