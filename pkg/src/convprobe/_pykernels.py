"""Pure numpy implementations of the convolution/pooling kernels.

Same signatures and semantics as the compiled ``_ckernels`` module. Used when
the extension is not built or when ``CONVPROBE_PURE_PYTHON=1``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv1d_forward(x, w, b):
    K = w.shape[2]
    if w.shape[1] != x.shape[1] or b.shape[0] != w.shape[0] or x.shape[2] - K + 1 < 1:
        raise ValueError("incompatible shapes for conv1d_forward")
    win = sliding_window_view(x, K, axis=2)  # (B, Cin, Tout, K)
    out = np.tensordot(win, w, axes=([1, 3], [1, 2]))  # (B, Tout, Cout)
    out = out.transpose(0, 2, 1) + b[None, :, None]
    return np.ascontiguousarray(out, dtype=x.dtype)


def conv1d_backward_input(go, w, T):
    K = w.shape[2]
    if w.shape[0] != go.shape[1] or go.shape[2] != T - K + 1:
        raise ValueError("incompatible shapes for conv1d_backward_input")
    padded = np.pad(go, ((0, 0), (0, 0), (K - 1, K - 1)))
    win = sliding_window_view(padded, K, axis=2)  # (B, Cout, T, K)
    gx = np.tensordot(win, w[:, :, ::-1], axes=([1, 3], [0, 2]))  # (B, T, Cin)
    return np.ascontiguousarray(gx.transpose(0, 2, 1), dtype=go.dtype)


def conv1d_backward_weight(go, x, K):
    if x.shape[0] != go.shape[0] or go.shape[2] != x.shape[2] - K + 1:
        raise ValueError("incompatible shapes for conv1d_backward_weight")
    win = sliding_window_view(x, K, axis=2)  # (B, Cin, Tout, K)
    gw = np.tensordot(go, win, axes=([0, 2], [0, 2]))  # (Cout, Cin, K)
    gb = go.sum(axis=(0, 2))
    return np.ascontiguousarray(gw, dtype=go.dtype), gb.astype(go.dtype)


def maxpool1d_forward(x, size, stride):
    T = x.shape[2]
    if size < 1 or stride < 1 or T < size:
        raise ValueError("incompatible shapes for maxpool1d_forward")
    win = sliding_window_view(x, size, axis=2)[:, :, ::stride]  # (B, C, P, size)
    local = win.argmax(axis=-1)  # first occurrence on ties
    out = np.take_along_axis(win, local[..., None], axis=-1)[..., 0]
    idx = local + (np.arange(win.shape[2]) * stride)[None, None, :]
    return np.ascontiguousarray(out), np.ascontiguousarray(idx, dtype=np.intp)


def maxpool1d_backward(go, idx, T):
    B, C, P = go.shape
    gx = np.zeros((B, C, T), dtype=go.dtype)
    flat = (np.arange(B * C)[:, None] * T + idx.reshape(B * C, P)).ravel()
    np.add.at(gx.reshape(-1), flat, go.reshape(-1))
    return gx
