# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled im2col / col2im packing kernels (float32 and float64).

Semantics match ``_kernels_np`` exactly; see that module for the contract.
Padding is handled in-kernel (no padded copy is allocated); the valid
input window is computed per kernel offset so the interior loops carry
no bounds branches and vectorize at stride 1.
"""

ctypedef fused real:
    float
    double


cdef inline Py_ssize_t _lo(Py_ssize_t k, Py_ssize_t padding,
                           Py_ssize_t stride) noexcept nogil:
    # smallest o with o*stride + k - padding >= 0
    if k >= padding:
        return 0
    return (padding - k + stride - 1) // stride


cdef inline Py_ssize_t _hi(Py_ssize_t k, Py_ssize_t padding, Py_ssize_t stride,
                           Py_ssize_t n, Py_ssize_t n_out) noexcept nogil:
    # one past the largest o with o*stride + k - padding <= n - 1
    cdef Py_ssize_t limit = n - 1 - k + padding
    cdef Py_ssize_t hi
    if limit < 0:
        return 0
    hi = limit // stride + 1
    return n_out if hi > n_out else hi


def im2col(real[:, :, :, ::1] x, int kh, int kw, int stride, int padding,
           real[:, :, ::1] out):
    """Fill preallocated ``out`` (B, C*kh*kw, HO*WO) from ``x`` (B,C,H,W)."""
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = (h + 2 * padding - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * padding - kw) // stride + 1
    cdef Py_ssize_t bi, ci, ki, kj, oi, oj, row, ii, jj0, base
    cdef Py_ssize_t oi_lo, oi_hi, oj_lo, oj_hi

    with nogil:
        for bi in range(b):
            for ci in range(c):
                for ki in range(kh):
                    oi_lo = _lo(ki, padding, stride)
                    oi_hi = _hi(ki, padding, stride, h, ho)
                    for kj in range(kw):
                        row = (ci * kh + ki) * kw + kj
                        oj_lo = _lo(kj, padding, stride)
                        oj_hi = _hi(kj, padding, stride, w, wo)
                        for oi in range(oi_lo):
                            base = oi * wo
                            for oj in range(wo):
                                out[bi, row, base + oj] = 0
                        for oi in range(oi_hi, ho):
                            base = oi * wo
                            for oj in range(wo):
                                out[bi, row, base + oj] = 0
                        jj0 = kj - padding
                        for oi in range(oi_lo, oi_hi):
                            ii = oi * stride + ki - padding
                            base = oi * wo
                            for oj in range(oj_lo):
                                out[bi, row, base + oj] = 0
                            if stride == 1:
                                for oj in range(oj_lo, oj_hi):
                                    out[bi, row, base + oj] = x[bi, ci, ii, oj + jj0]
                            else:
                                for oj in range(oj_lo, oj_hi):
                                    out[bi, row, base + oj] = x[bi, ci, ii,
                                                                oj * stride + jj0]
                            for oj in range(oj_hi, wo):
                                out[bi, row, base + oj] = 0


def col2im(real[:, :, ::1] cols, int kh, int kw, int stride, int padding,
           real[:, :, :, ::1] out):
    """Scatter-add ``cols`` (B, C*kh*kw, HO*WO) into zeroed ``out`` (B,C,H,W)."""
    cdef Py_ssize_t b = out.shape[0], c = out.shape[1]
    cdef Py_ssize_t h = out.shape[2], w = out.shape[3]
    cdef Py_ssize_t ho = (h + 2 * padding - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * padding - kw) // stride + 1
    cdef Py_ssize_t bi, ci, ki, kj, oi, oj, row, ii, jj0, base
    cdef Py_ssize_t oi_lo, oi_hi, oj_lo, oj_hi

    with nogil:
        for bi in range(b):
            for ci in range(c):
                for ki in range(kh):
                    oi_lo = _lo(ki, padding, stride)
                    oi_hi = _hi(ki, padding, stride, h, ho)
                    for kj in range(kw):
                        row = (ci * kh + ki) * kw + kj
                        oj_lo = _lo(kj, padding, stride)
                        oj_hi = _hi(kj, padding, stride, w, wo)
                        jj0 = kj - padding
                        for oi in range(oi_lo, oi_hi):
                            ii = oi * stride + ki - padding
                            base = oi * wo
                            if stride == 1:
                                for oj in range(oj_lo, oj_hi):
                                    out[bi, ci, ii, oj + jj0] += cols[bi, row,
                                                                      base + oj]
                            else:
                                for oj in range(oj_lo, oj_hi):
                                    out[bi, ci, ii, oj * stride + jj0] += cols[
                                        bi, row, base + oj]
