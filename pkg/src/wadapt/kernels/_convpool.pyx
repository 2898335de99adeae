# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled conv2d / maxpool2d kernels (forward and backward).

Signatures mirror ``wadapt.kernels.numpy_ref``; the dispatching package picks
whichever backend is available.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _lo(Py_ssize_t pad, Py_ssize_t k, Py_ssize_t s) noexcept nogil:
    # smallest output index whose input index k - pad + out*s is >= 0
    if pad <= k:
        return 0
    return (pad - k + s - 1) // s


cdef inline Py_ssize_t _hi(Py_ssize_t pad, Py_ssize_t k, Py_ssize_t s,
                           Py_ssize_t n_in, Py_ssize_t n_out) noexcept nogil:
    # one past the largest output index whose input index stays < n_in
    cdef Py_ssize_t hi = (n_in - 1 + pad - k) // s + 1
    return n_out if hi > n_out else hi


# patch sizes at least this large route through im2col + BLAS matmul;
# smaller ones use direct loops (less overhead than building columns)
DEF GEMM_PATCH_THRESHOLD = 32


cdef _im2col_t(double[:, :, :, ::1] xv, Py_ssize_t kh, Py_ssize_t kw,
               Py_ssize_t sh, Py_ssize_t sw, Py_ssize_t ph, Py_ssize_t pw,
               Py_ssize_t ho, Py_ssize_t wo):
    # transposed column buffer [C*kh*kw, N*Ho*Wo]: the ow inner loop writes
    # contiguously
    cdef Py_ssize_t n = xv.shape[0], c = xv.shape[1], h = xv.shape[2], wd = xv.shape[3]
    cdef Py_ssize_t ckk = c * kh * kw
    cols_arr = np.zeros((ckk, n * ho * wo), dtype=np.float64)
    cdef double[:, ::1] cols = cols_arr
    cdef Py_ssize_t bi, ic, i, j, oh, ow, ih, iw0, col, row0
    cdef Py_ssize_t oh_lo, oh_hi, ow_lo, ow_hi
    with nogil:
        for bi in range(n):
            for ic in range(c):
                for i in range(kh):
                    oh_lo = _lo(ph, i, sh)
                    oh_hi = _hi(ph, i, sh, h, ho)
                    for j in range(kw):
                        col = (ic * kh + i) * kw + j
                        ow_lo = _lo(pw, j, sw)
                        ow_hi = _hi(pw, j, sw, wd, wo)
                        iw0 = j - pw
                        for oh in range(oh_lo, oh_hi):
                            ih = oh * sh + i - ph
                            row0 = (bi * ho + oh) * wo
                            for ow in range(ow_lo, ow_hi):
                                cols[col, row0 + ow] = xv[bi, ic, ih, iw0 + ow * sw]
    return cols_arr


cdef _col2im_t(double[:, ::1] gcols, Py_ssize_t n, Py_ssize_t c, Py_ssize_t h, Py_ssize_t wd,
               Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t sh, Py_ssize_t sw,
               Py_ssize_t ph, Py_ssize_t pw, Py_ssize_t ho, Py_ssize_t wo):
    gx_arr = np.zeros((n, c, h, wd), dtype=np.float64)
    cdef double[:, :, :, ::1] gxv = gx_arr
    cdef Py_ssize_t bi, ic, i, j, oh, ow, ih, iw0, col, row0
    cdef Py_ssize_t oh_lo, oh_hi, ow_lo, ow_hi
    with nogil:
        for bi in range(n):
            for ic in range(c):
                for i in range(kh):
                    oh_lo = _lo(ph, i, sh)
                    oh_hi = _hi(ph, i, sh, h, ho)
                    for j in range(kw):
                        col = (ic * kh + i) * kw + j
                        ow_lo = _lo(pw, j, sw)
                        ow_hi = _hi(pw, j, sw, wd, wo)
                        iw0 = j - pw
                        for oh in range(oh_lo, oh_hi):
                            ih = oh * sh + i - ph
                            row0 = (bi * ho + oh) * wo
                            for ow in range(ow_lo, ow_hi):
                                gxv[bi, ic, ih, iw0 + ow * sw] += gcols[col, row0 + ow]
    return gx_arr


def conv2d_forward(x, w, b, stride, padding):
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, :, :, ::1] xv = x
    cdef double[:, :, :, ::1] wv = w
    cdef Py_ssize_t n = xv.shape[0], c = xv.shape[1], h = xv.shape[2], wd = xv.shape[3]
    cdef Py_ssize_t o = wv.shape[0], kh = wv.shape[2], kw = wv.shape[3]
    cdef Py_ssize_t sh = stride[0], sw = stride[1]
    cdef Py_ssize_t ph = padding[0], pw = padding[1]
    cdef Py_ssize_t ho = (h + 2 * ph - kh) // sh + 1
    cdef Py_ssize_t wo = (wd + 2 * pw - kw) // sw + 1

    if c * kh * kw >= GEMM_PATCH_THRESHOLD:
        colsT = _im2col_t(xv, kh, kw, sh, sw, ph, pw, ho, wo)
        out = np.asarray(w).reshape(o, -1) @ colsT  # [o, n*ho*wo]
        if b is not None:
            out += np.asarray(b, dtype=np.float64)[:, None]
        out = np.ascontiguousarray(out.reshape(o, n, ho, wo).transpose(1, 0, 2, 3))
        return out, colsT

    out_arr = np.zeros((n, o, ho, wo), dtype=np.float64)
    cdef double[:, :, :, ::1] outv = out_arr

    cdef Py_ssize_t bi, oc, ic, oh, ow, i, j
    cdef Py_ssize_t oh_lo, oh_hi, ow_lo, ow_hi, ih, iw0
    cdef double wval
    with nogil:
        for bi in range(n):
            for oc in range(o):
                for ic in range(c):
                    for i in range(kh):
                        oh_lo = _lo(ph, i, sh)
                        oh_hi = _hi(ph, i, sh, h, ho)
                        for j in range(kw):
                            wval = wv[oc, ic, i, j]
                            ow_lo = _lo(pw, j, sw)
                            ow_hi = _hi(pw, j, sw, wd, wo)
                            for oh in range(oh_lo, oh_hi):
                                ih = oh * sh + i - ph
                                iw0 = j - pw
                                for ow in range(ow_lo, ow_hi):
                                    outv[bi, oc, oh, ow] += wval * xv[bi, ic, ih, iw0 + ow * sw]
    if b is not None:
        out_arr += np.asarray(b, dtype=np.float64).reshape(1, o, 1, 1)
    return out_arr, None


def conv2d_backward(gout, x, w, stride, padding, cols=None):
    gout = np.ascontiguousarray(gout, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, :, :, ::1] gv = gout
    cdef double[:, :, :, ::1] xv = x
    cdef double[:, :, :, ::1] wv = w
    cdef Py_ssize_t n = xv.shape[0], c = xv.shape[1], h = xv.shape[2], wd = xv.shape[3]
    cdef Py_ssize_t o = wv.shape[0], kh = wv.shape[2], kw = wv.shape[3]
    cdef Py_ssize_t sh = stride[0], sw = stride[1]
    cdef Py_ssize_t ph = padding[0], pw = padding[1]
    cdef Py_ssize_t ho = gv.shape[2], wo = gv.shape[3]

    if c * kh * kw >= GEMM_PATCH_THRESHOLD:
        if cols is None:
            cols = _im2col_t(xv, kh, kw, sh, sw, ph, pw, ho, wo)
        g2 = gout.transpose(1, 0, 2, 3).reshape(o, n * ho * wo)  # [o, n*ho*wo]
        gw = (g2 @ cols.T).reshape(o, c, kh, kw)
        gb = g2.sum(axis=1)
        gcolsT = np.ascontiguousarray(np.asarray(w).reshape(o, -1).T @ g2)
        gx = _col2im_t(gcolsT, n, c, h, wd, kh, kw, sh, sw, ph, pw, ho, wo)
        return gx, gw, gb

    gx_arr = np.zeros((n, c, h, wd), dtype=np.float64)
    gw_arr = np.zeros((o, c, kh, kw), dtype=np.float64)
    cdef double[:, :, :, ::1] gxv = gx_arr
    cdef double[:, :, :, ::1] gwv = gw_arr

    cdef Py_ssize_t bi, oc, ic, oh, ow, i, j
    cdef Py_ssize_t oh_lo, oh_hi, ow_lo, ow_hi, ih, iw0
    cdef double wval, gw_acc, g
    with nogil:
        for bi in range(n):
            for oc in range(o):
                for ic in range(c):
                    for i in range(kh):
                        oh_lo = _lo(ph, i, sh)
                        oh_hi = _hi(ph, i, sh, h, ho)
                        for j in range(kw):
                            wval = wv[oc, ic, i, j]
                            ow_lo = _lo(pw, j, sw)
                            ow_hi = _hi(pw, j, sw, wd, wo)
                            gw_acc = 0.0
                            for oh in range(oh_lo, oh_hi):
                                ih = oh * sh + i - ph
                                iw0 = j - pw
                                for ow in range(ow_lo, ow_hi):
                                    g = gv[bi, oc, oh, ow]
                                    gw_acc += g * xv[bi, ic, ih, iw0 + ow * sw]
                                    gxv[bi, ic, ih, iw0 + ow * sw] += g * wval
                            gwv[oc, ic, i, j] += gw_acc
    gb = gout.sum(axis=(0, 2, 3))
    return gx_arr, gw_arr, gb


def maxpool2d_forward(x, kernel, stride, padding):
    x = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, :, ::1] xv = x
    cdef Py_ssize_t n = xv.shape[0], c = xv.shape[1], h = xv.shape[2], wd = xv.shape[3]
    cdef Py_ssize_t k = kernel
    cdef Py_ssize_t sh = stride[0], sw = stride[1]
    cdef Py_ssize_t ph = padding[0], pw = padding[1]
    cdef Py_ssize_t ho = (h + 2 * ph - k) // sh + 1
    cdef Py_ssize_t wo = (wd + 2 * pw - k) // sw + 1

    out_arr = np.empty((n, c, ho, wo), dtype=np.float64)
    idx_arr = np.zeros((n, c, ho, wo), dtype=np.int64)
    cdef double[:, :, :, ::1] outv = out_arr
    cdef cnp.int64_t[:, :, :, ::1] idxv = idx_arr

    cdef Py_ssize_t bi, ic, oh, ow, i, j, ih, iw, best_idx
    cdef double best, v
    with nogil:
        for bi in range(n):
            for ic in range(c):
                for oh in range(ho):
                    for ow in range(wo):
                        best = -1e308
                        best_idx = 0
                        for i in range(k):
                            ih = oh * sh + i - ph
                            if ih < 0 or ih >= h:
                                continue
                            for j in range(k):
                                iw = ow * sw + j - pw
                                if iw < 0 or iw >= wd:
                                    continue
                                v = xv[bi, ic, ih, iw]
                                if v > best:
                                    best = v
                                    best_idx = i * k + j
                        outv[bi, ic, oh, ow] = best
                        idxv[bi, ic, oh, ow] = best_idx
    return out_arr, idx_arr


def maxpool2d_backward(gout, x_shape, kernel, stride, padding, idx):
    gout = np.ascontiguousarray(gout, dtype=np.float64)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    cdef double[:, :, :, ::1] gv = gout
    cdef cnp.int64_t[:, :, :, ::1] idxv = idx
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], wd = x_shape[3]
    cdef Py_ssize_t k = kernel
    cdef Py_ssize_t sh = stride[0], sw = stride[1]
    cdef Py_ssize_t ph = padding[0], pw = padding[1]
    cdef Py_ssize_t ho = gv.shape[2], wo = gv.shape[3]

    gx_arr = np.zeros((n, c, h, wd), dtype=np.float64)
    cdef double[:, :, :, ::1] gxv = gx_arr

    cdef Py_ssize_t bi, ic, oh, ow, flat, ih, iw
    with nogil:
        for bi in range(n):
            for ic in range(c):
                for oh in range(ho):
                    for ow in range(wo):
                        flat = idxv[bi, ic, oh, ow]
                        ih = oh * sh + flat // k - ph
                        iw = ow * sw + flat % k - pw
                        if 0 <= ih < h and 0 <= iw < wd:
                            gxv[bi, ic, ih, iw] += gv[bi, ic, oh, ow]
    return gx_arr
