"""Pure-numpy packing kernels.

Fallback used when the compiled extension is unavailable.  Both backends
implement the same two primitives:

* ``im2col`` unfolds padded convolution patches into a matrix so the
  contraction itself can run as one BLAS matmul.
* ``col2im`` is its adjoint: scatter-add of patch columns back onto the
  image grid.

Accumulation order in ``col2im`` is fixed (kernel-row-major), so results
are deterministic for identical inputs.
"""

import numpy as np


def conv_out_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    """Unfold (B,C,H,W) into patch columns (B, C*kh*kw, HO*WO)."""
    b, c, h, w = x.shape
    ho = conv_out_size(h, kh, stride, padding)
    wo = conv_out_size(w, kw, stride, padding)
    if padding:
        xp = np.zeros((b, c, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
        xp[:, :, padding:padding + h, padding:padding + w] = x
    else:
        xp = np.ascontiguousarray(x)
    sb, sc, sh, sw = xp.strides
    patches = np.lib.stride_tricks.as_strided(
        xp,
        shape=(b, c, kh, kw, ho, wo),
        strides=(sb, sc, sh, sw, stride * sh, stride * sw),
        writeable=False,
    )
    # reshape cannot be a view here, so this materializes the copy
    return patches.reshape(b, c * kh * kw, ho * wo)


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
    """Scatter-add patch columns (B, C*kh*kw, HO*WO) back to (B,C,H,W)."""
    ho = conv_out_size(h, kh, stride, padding)
    wo = conv_out_size(w, kw, stride, padding)
    hp, wp = h + 2 * padding, w + 2 * padding
    xp = np.zeros((b, c, hp, wp), dtype=cols.dtype)
    cols6 = cols.reshape(b, c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols6[:, :, i, j]
    if padding:
        return np.ascontiguousarray(xp[:, :, padding:padding + h, padding:padding + w])
    return xp
