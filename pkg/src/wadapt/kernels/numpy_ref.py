"""Pure numpy reference implementation of the hot kernels.

conv2d uses im2col + BLAS matmul; maxpool uses a strided window view. The
compiled extension in ``_convpool`` mirrors these signatures; either backend
can serve all forward/backward calls.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def _windows(xp, kh, kw, sh, sw, ho, wo):
    """Read-only sliding window view [N, C, ho, wo, kh, kw] over a padded input."""
    n, c, _, _ = xp.shape
    sn, sc, srow, scol = xp.strides
    return as_strided(
        xp,
        shape=(n, c, ho, wo, kh, kw),
        strides=(sn, sc, srow * sh, scol * sw, srow, scol),
        writeable=False,
    )


def conv2d_forward(x, w, b, stride, padding):
    """x [N,C,H,W], w [O,C,kh,kw], b [O] or None -> (out [N,O,Ho,Wo], cols cache)."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    sh, sw = stride
    ph, pw = padding
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    win = _windows(xp, kh, kw, sh, sw, ho, wo)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    out = cols @ w.reshape(o, -1).T
    if b is not None:
        out = out + b
    out = np.ascontiguousarray(out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2))
    return out, cols


def conv2d_backward(gout, x, w, stride, padding, cols=None):
    """Gradients (gx, gw, gb) of conv2d_forward given upstream gout [N,O,Ho,Wo]."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    sh, sw = stride
    ph, pw = padding
    ho, wo = gout.shape[2], gout.shape[3]
    if cols is None:
        xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        win = _windows(xp, kh, kw, sh, sw, ho, wo)
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    g2 = gout.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
    gw = (g2.T @ cols).reshape(w.shape)
    gb = g2.sum(axis=0)
    gcols = (g2 @ w.reshape(o, -1)).reshape(n, ho, wo, c, kh, kw)
    gcols = gcols.transpose(0, 3, 4, 5, 1, 2)  # [N, C, kh, kw, Ho, Wo]
    gp = np.zeros((n, c, h + 2 * ph, wd + 2 * pw))
    for i in range(kh):
        for j in range(kw):
            gp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += gcols[:, :, i, j]
    gx = gp[:, :, ph : ph + h, pw : pw + wd]
    return gx, gw, gb


def maxpool2d_forward(x, kernel, stride, padding):
    """x [N,C,H,W] -> (out [N,C,Ho,Wo], argmax flat index per window).

    Padding positions hold -inf so they never win the max; the output is finite
    whenever every window overlaps the real input, which holds for
    padding < kernel.
    """
    n, c, h, w = x.shape
    sh, sw = stride
    ph, pw = padding
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=-np.inf)
    ho = (h + 2 * ph - kernel) // sh + 1
    wo = (w + 2 * pw - kernel) // sw + 1
    win = _windows(xp, kernel, kernel, sh, sw, ho, wo)
    flat = win.reshape(n, c, ho, wo, kernel * kernel)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx.astype(np.int64)


def maxpool2d_backward(gout, x_shape, kernel, stride, padding, idx):
    """Scatter-add gout [N,C,Ho,Wo] back to the argmax positions of each window."""
    n, c, h, w = x_shape
    sh, sw = stride
    ph, pw = padding
    ho, wo = gout.shape[2], gout.shape[3]
    hp, wp = h + 2 * ph, w + 2 * pw
    ki, kj = np.divmod(idx, kernel)
    rows = np.arange(ho)[None, None, :, None] * sh + ki
    colz = np.arange(wo)[None, None, None, :] * sw + kj
    lin = (rows * wp + colz).reshape(n * c, ho * wo)
    gp = np.zeros((n * c, hp * wp))
    np.add.at(gp, (np.arange(n * c)[:, None], lin), gout.reshape(n * c, ho * wo))
    gp = gp.reshape(n, c, hp, wp)
    return gp[:, :, ph : ph + h, pw : pw + w]
