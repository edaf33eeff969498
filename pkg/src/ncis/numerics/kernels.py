"""Raw ndarray kernels for the forward and backward passes.

Everything here is dtype-preserving and free of hidden state; the autodiff
layer in :mod:`ncis.numerics.tensor` wraps these, and inference paths call
them through the same ops with gradients disabled, so both paths share one
numerical implementation.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidArgumentError, ShapeMismatchError

PADDING_MODES = ("zero", "reflect")


def as_batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    """Promote C×H×W to 1×C×H×W; report whether promotion happened."""
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeMismatchError(f"expected CxHxW or NxCxHxW, got shape {x.shape}")


def center_mask_array(k: int, dtype) -> np.ndarray:
    m = np.ones((k, k), dtype=dtype)
    m[k // 2, k // 2] = 0
    return m


def pad2d(x: np.ndarray, pad: int, mode: str) -> np.ndarray:
    """Pad the two trailing axes of NxCxHxW."""
    if pad == 0:
        return x
    if mode == "zero":
        return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    if mode == "reflect":
        if x.shape[2] <= pad or x.shape[3] <= pad:
            raise InvalidArgumentError(
                f"reflect padding {pad} needs spatial dims > {pad}, got {x.shape[2:]}"
            )
        return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="reflect")
    raise InvalidArgumentError(f"unknown padding mode {mode!r}")


def window_view(xp: np.ndarray, k: int, dilation: int) -> np.ndarray:
    """Read-only sliding windows (N,C,H,W,k,k) over a padded NxCxHpxWp array."""
    n, c, hp, wp = xp.shape
    span = dilation * (k - 1)
    h, w = hp - span, wp - span
    sn, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, h, w, k, k),
        strides=(sn, sc, sh, sw, sh * dilation, sw * dilation),
        writeable=False,
    )


def conv2d_forward(
    x: np.ndarray,
    w: np.ndarray,
    b: np.ndarray | None,
    padding: str = "zero",
    dilation: int = 1,
    center_mask: bool = False,
    need_cache: bool = True,
):
    """Same-padded masked/dilated cross-correlation.

    Returns ``(out, cols)`` where ``cols`` is the (N*H*W, C*k*k) patch matrix
    needed by the backward pass, or None when ``need_cache`` is false.
    """
    n, c, h, w_dim = x.shape
    o, cw, kh, kw = w.shape
    if kh != kw or kh % 2 == 0:
        raise InvalidArgumentError(f"kernel must be odd and square, got {kh}x{kw}")
    if cw != c:
        raise ShapeMismatchError(f"input has {c} channels, weight expects {cw}")
    if dilation < 1:
        raise InvalidArgumentError(f"dilation must be >= 1, got {dilation}")
    if padding not in PADDING_MODES:
        raise InvalidArgumentError(f"unknown padding mode {padding!r}")
    k = kh
    w_eff = w * center_mask_array(k, w.dtype) if center_mask else w
    pad = dilation * (k - 1) // 2
    xp = pad2d(x, pad, padding)
    win = window_view(xp, k, dilation)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w_dim, c * k * k)
    out = cols @ w_eff.reshape(o, -1).T
    if b is not None:
        out += b
    out = np.ascontiguousarray(out.reshape(n, h, w_dim, o).transpose(0, 3, 1, 2))
    return out, (cols if need_cache else None)


def _fold_reflect_rows(g: np.ndarray, pad: int, h: int) -> np.ndarray:
    """Collapse reflect-padded rows back onto their source rows (axis 2)."""
    for t in range(pad):
        g[:, :, 2 * pad - t, :] += g[:, :, t, :]
        g[:, :, pad + h - 2 - t, :] += g[:, :, pad + h + t, :]
    return g[:, :, pad : pad + h, :]


def conv2d_backward(
    gout: np.ndarray,
    x_shape: tuple[int, ...],
    w: np.ndarray,
    cols: np.ndarray,
    padding: str,
    dilation: int,
    center_mask: bool,
    need_gx: bool = True,
):
    """Gradients of conv2d_forward w.r.t. input, weight and bias."""
    n, c, h, w_dim = x_shape
    o = w.shape[0]
    k = w.shape[-1]
    pad = dilation * (k - 1) // 2
    go = np.ascontiguousarray(gout.transpose(0, 2, 3, 1)).reshape(n * h * w_dim, o)
    gb = go.sum(axis=0)
    gw = (go.T @ cols).reshape(w.shape)
    if center_mask:
        gw *= center_mask_array(k, gw.dtype)
    gx = None
    if need_gx:
        w_eff = w * center_mask_array(k, w.dtype) if center_mask else w
        gcols = go @ w_eff.reshape(o, -1)
        g6 = gcols.reshape(n, h, w_dim, c, k, k).transpose(0, 3, 1, 2, 4, 5)
        hp, wp = h + 2 * pad, w_dim + 2 * pad
        gp = np.zeros((n, c, hp, wp), dtype=gout.dtype)
        for u in range(k):
            for v in range(k):
                gp[:, :, u * dilation : u * dilation + h, v * dilation : v * dilation + w_dim] += g6[
                    :, :, :, :, u, v
                ]
        if padding == "reflect" and pad > 0:
            gp = _fold_reflect_rows(gp, pad, h)
            gp = np.ascontiguousarray(gp.transpose(0, 1, 3, 2))
            gp = _fold_reflect_rows(gp, pad, w_dim)
            gx = np.ascontiguousarray(gp.transpose(0, 1, 3, 2))
        else:
            gx = gp[:, :, pad : pad + h, pad : pad + w_dim].copy()
    return gx, gw, gb


def avgpool2_forward(x: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeMismatchError(f"2x2 average pooling needs even spatial dims, got {h}x{w}")
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def avgpool2_backward(gout: np.ndarray, x_shape: tuple[int, ...]) -> np.ndarray:
    n, c, h, w = x_shape
    g = np.broadcast_to(gout[:, :, :, None, :, None] * gout.dtype.type(0.25), (n, c, h // 2, 2, w // 2, 2))
    return g.reshape(n, c, h, w).copy()


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None) -> np.ndarray:
    if x.shape[-1] != w.shape[1]:
        raise ShapeMismatchError(f"linear input dim {x.shape[-1]} != weight dim {w.shape[1]}")
    out = x @ w.T
    if b is not None:
        out = out + b
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def space_to_depth(x: np.ndarray, m: int) -> np.ndarray:
    """Rearrange (N,C,H,W) -> (N,C*m*m,H/m,W/m); block pixel (dy,dx) of channel
    c lands in output channel c*m*m + dy*m + dx."""
    n, c, h, w = x.shape
    if m < 1:
        raise InvalidArgumentError(f"block factor must be >= 1, got {m}")
    if h % m or w % m:
        raise ShapeMismatchError(f"spatial dims {h}x{w} not divisible by m={m}")
    if m == 1:
        return x.copy()
    r = x.reshape(n, c, h // m, m, w // m, m)
    return np.ascontiguousarray(r.transpose(0, 1, 3, 5, 2, 4)).reshape(n, c * m * m, h // m, w // m)


def depth_to_space(x: np.ndarray, m: int) -> np.ndarray:
    """Exact inverse of :func:`space_to_depth`."""
    n, cm, h, w = x.shape
    if m < 1:
        raise InvalidArgumentError(f"block factor must be >= 1, got {m}")
    if cm % (m * m):
        raise ShapeMismatchError(f"channel count {cm} not divisible by m*m={m * m}")
    if m == 1:
        return x.copy()
    c = cm // (m * m)
    r = x.reshape(n, c, m, m, h, w)
    return np.ascontiguousarray(r.transpose(0, 1, 4, 2, 5, 3)).reshape(n, c, h * m, w * m)


def clamp01(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 1.0)
