"""Minimal dense-tensor engine on numpy arrays.

Provides the primitive neural operators (valid 2D convolution, group
normalization over an explicit axis set, multi-head scaled dot-product
attention, bilinear sampling) together with the explicit backward passes the
toy denoiser needs, plus small helpers (silu, pooling, sinusoidal timestep
embedding) and a raw+JSON tensor file format for golden tests and
checkpoints.

Everything is a pure function of its inputs; float64 is used in test and
oracle paths, float32 is fine in pipelines. No autodiff: each forward has a
hand-written companion backward validated against finite differences.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _as_batched(x: np.ndarray):
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ValueError(f"expected (C,H,W) or (N,C,H,W), got shape {x.shape}")


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(N, C, Hp, Wp) -> (N, C*k*k, H*W) patch matrix for valid conv."""
    n, c, hp, wp = x.shape
    h = hp - (k - 1)
    w = wp - (k - 1)
    s0, s1, s2, s3 = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x, shape=(n, c, k, k, h, w), strides=(s0, s1, s2, s3, s2, s3))
    return windows.reshape(n, c * k * k, h * w)


def conv2d_valid(x: np.ndarray, weights: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Valid cross-correlation, stride 1, no implicit padding.

    x: (C_in, H+k-1, W+k-1) or (N, C_in, H+k-1, W+k-1), already carrying its
    halo. weights: (C_out, C_in, k, k) with k odd. Returns (.., C_out, H, W).
    """
    xb, squeeze = _as_batched(x)
    c_out, c_in, k, k2 = weights.shape
    if k != k2 or k % 2 == 0:
        raise ValueError(f"kernel must be square with odd size, got {k}x{k2}")
    if xb.shape[1] != c_in:
        raise ValueError(f"input channels {xb.shape[1]} != kernel C_in {c_in}")
    if xb.shape[2] < k or xb.shape[3] < k:
        raise ValueError(f"input {xb.shape[2:]} smaller than kernel {k}")
    h = xb.shape[2] - (k - 1)
    w = xb.shape[3] - (k - 1)
    cols = _im2col(xb, k)
    wmat = weights.reshape(c_out, c_in * k * k)
    y = np.matmul(wmat, cols).reshape(xb.shape[0], c_out, h, w)
    if bias is not None:
        y = y + bias.reshape(1, c_out, 1, 1)
    return y[0] if squeeze else y


def conv2d_valid_backward(grad_y: np.ndarray, x: np.ndarray, weights: np.ndarray):
    """Gradients of conv2d_valid: returns (grad_x, grad_w, grad_b).

    grad_x accumulation runs as k*k strided adds in a fixed scan order, so
    the result is deterministic.
    """
    gb, squeeze = _as_batched(grad_y)
    xb, _ = _as_batched(x)
    c_out, c_in, k, _ = weights.shape
    n, _, h, w = gb.shape
    cols = _im2col(xb, k)
    gflat = gb.reshape(n, c_out, h * w)
    # dW = sum_n dY_n cols_n^T
    grad_w = np.einsum("nop,ncp->oc", gflat, cols).reshape(weights.shape)
    grad_b = gb.sum(axis=(0, 2, 3))
    wmat = weights.reshape(c_out, c_in * k * k)
    grad_cols = np.matmul(wmat.T, gflat)
    grad_cols = grad_cols.reshape(n, c_in, k, k, h, w)
    grad_x = np.zeros_like(xb)
    for di in range(k):
        for dj in range(k):
            grad_x[:, :, di:di + h, dj:dj + w] += grad_cols[:, :, di, dj]
    return (grad_x[0] if squeeze else grad_x), grad_w, grad_b


def zero_pad2d(x: np.ndarray, p: int) -> np.ndarray:
    pad = [(0, 0)] * (x.ndim - 2) + [(p, p), (p, p)]
    return np.pad(x, pad)


# ---------------------------------------------------------------------------
# group normalization
# ---------------------------------------------------------------------------

def _gn_axes(x: np.ndarray, reduce_axes):
    if reduce_axes is None:
        reduce_axes = tuple(range(2, x.ndim))
    reduce_axes = tuple(int(a) for a in reduce_axes)
    for a in reduce_axes:
        if a < 2 or a >= x.ndim:
            raise ValueError(f"reduce axis {a} out of range for shape {x.shape}")
    return reduce_axes


def _gn_stats_shape(x: np.ndarray, groups: int):
    n, c = x.shape[0], x.shape[1]
    if c % groups != 0:
        raise ValueError(f"channels {c} not divisible by groups {groups}")
    return x.reshape(n, groups, c // groups, *x.shape[2:])


def group_norm(x: np.ndarray, groups: int, gamma: np.ndarray, beta: np.ndarray,
               eps: float = 1e-5, reduce_axes=None) -> np.ndarray:
    """Group normalization of (N, C, *spatial).

    Statistics use biased variance over the group's channel block plus
    `reduce_axes` (spatial axes, default all of them); axes left out of
    reduce_axes keep independent statistics. y = gamma*(x-mu)/sqrt(var+eps)
    + beta with per-channel gamma, beta.
    """
    reduce_axes = _gn_axes(x, reduce_axes)
    g = _gn_stats_shape(x, groups)
    # channel-chunk axis moved to 2, spatial axes shifted by +1
    stat_axes = (2,) + tuple(a + 1 for a in reduce_axes)
    mu = g.mean(axis=stat_axes, keepdims=True)
    var = ((g - mu) ** 2).mean(axis=stat_axes, keepdims=True)
    xhat = (g - mu) / np.sqrt(var + eps)
    xhat = xhat.reshape(x.shape)
    cshape = (1, x.shape[1]) + (1,) * (x.ndim - 2)
    return gamma.reshape(cshape) * xhat + beta.reshape(cshape)


def group_norm_backward(grad_y: np.ndarray, x: np.ndarray, groups: int,
                        gamma: np.ndarray, eps: float = 1e-5, reduce_axes=None):
    """Gradients of group_norm: (grad_x, grad_gamma, grad_beta)."""
    reduce_axes = _gn_axes(x, reduce_axes)
    g = _gn_stats_shape(x, groups)
    stat_axes = (2,) + tuple(a + 1 for a in reduce_axes)
    mu = g.mean(axis=stat_axes, keepdims=True)
    var = ((g - mu) ** 2).mean(axis=stat_axes, keepdims=True)
    r = 1.0 / np.sqrt(var + eps)
    xhat = (g - mu) * r

    cshape = (1, x.shape[1]) + (1,) * (x.ndim - 2)
    gch = gamma.reshape(cshape)
    sum_axes = (0,) + tuple(range(2, x.ndim))
    grad_gamma = (grad_y * xhat.reshape(x.shape)).sum(axis=sum_axes)
    grad_beta = grad_y.sum(axis=sum_axes)

    dxhat = (grad_y * gch).reshape(g.shape)
    m1 = dxhat.mean(axis=stat_axes, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=stat_axes, keepdims=True)
    grad_x = r * (dxhat - m1 - xhat * m2)
    return grad_x.reshape(x.shape), grad_gamma, grad_beta


# ---------------------------------------------------------------------------
# attention
# ---------------------------------------------------------------------------

def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    b, n, c = x.shape
    if c % heads != 0:
        raise ValueError(f"channels {c} not divisible by heads {heads}")
    return x.reshape(b, n, heads, c // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, n, d = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, n, h * d)


def softmax_lastaxis(s: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax over the last axis."""
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, heads: int,
              return_weights: bool = False):
    """Multi-head scaled dot-product attention on (B, N, C) sequences.

    softmax(Q K^T / sqrt(C/heads)) V per head, heads concatenated.
    """
    if q.shape != k.shape or k.shape != v.shape:
        raise ValueError(f"q/k/v shapes differ: {q.shape} {k.shape} {v.shape}")
    qh = _split_heads(q, heads)
    kh = _split_heads(k, heads)
    vh = _split_heads(v, heads)
    scale = 1.0 / np.sqrt(qh.shape[-1])
    s = np.matmul(qh, kh.transpose(0, 1, 3, 2)) * scale
    p = softmax_lastaxis(s)
    out = _merge_heads(np.matmul(p, vh))
    if return_weights:
        return out, p
    return out


def attention_backward(grad_out: np.ndarray, q: np.ndarray, k: np.ndarray,
                       v: np.ndarray, heads: int):
    """Gradients of attention: (grad_q, grad_k, grad_v). Recomputes the
    softmax instead of caching it."""
    qh = _split_heads(q, heads)
    kh = _split_heads(k, heads)
    vh = _split_heads(v, heads)
    scale = 1.0 / np.sqrt(qh.shape[-1])
    s = np.matmul(qh, kh.transpose(0, 1, 3, 2)) * scale
    p = softmax_lastaxis(s)
    go = _split_heads(grad_out, heads)
    grad_v = np.matmul(p.transpose(0, 1, 3, 2), go)
    grad_p = np.matmul(go, vh.transpose(0, 1, 3, 2))
    grad_s = p * (grad_p - (grad_p * p).sum(axis=-1, keepdims=True))
    grad_q = np.matmul(grad_s, kh) * scale
    grad_k = np.matmul(grad_s.transpose(0, 1, 3, 2), qh) * scale
    return _merge_heads(grad_q), _merge_heads(grad_k), _merge_heads(grad_v)


# ---------------------------------------------------------------------------
# bilinear sampling
# ---------------------------------------------------------------------------

def bilinear_sample(x: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Bilinear sample of (C, H, W) at continuous pixel coords (N, 2) given
    as (px, py) pairs; borders clamped, weights from the unclamped fractional
    parts.

    value = (1-fy)*((1-fx)*v00 + fx*v01) + fy*((1-fx)*v10 + fx*v11)
    """
    c, h, w = x.shape
    px = np.asarray(coords, dtype=float)[:, 0]
    py = np.asarray(coords, dtype=float)[:, 1]
    x0 = np.floor(px)
    y0 = np.floor(py)
    fx = px - x0
    fy = py - y0
    x0i = np.clip(x0.astype(np.int64), 0, w - 1)
    x1i = np.clip(x0i + 1, 0, w - 1)
    y0i = np.clip(y0.astype(np.int64), 0, h - 1)
    y1i = np.clip(y0i + 1, 0, h - 1)
    v00 = x[:, y0i, x0i]
    v01 = x[:, y0i, x1i]
    v10 = x[:, y1i, x0i]
    v11 = x[:, y1i, x1i]
    return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11)


# ---------------------------------------------------------------------------
# small layer helpers
# ---------------------------------------------------------------------------

def silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def silu_backward(grad_y: np.ndarray, x: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-x))
    return grad_y * (s * (1.0 + x * (1.0 - s)))


def avg_pool2(x: np.ndarray) -> np.ndarray:
    """2x2 average pooling over the trailing two axes (even sizes)."""
    h, w = x.shape[-2], x.shape[-1]
    if h % 2 or w % 2:
        raise ValueError(f"pooling needs even spatial dims, got {h}x{w}")
    r = x.reshape(*x.shape[:-2], h // 2, 2, w // 2, 2)
    return r.mean(axis=(-3, -1))


def avg_pool2_backward(grad_y: np.ndarray) -> np.ndarray:
    g = grad_y[..., :, None, :, None] * 0.25
    g = np.broadcast_to(g, g.shape[:-4] + (g.shape[-4], 2, g.shape[-2], 2))
    return g.reshape(*grad_y.shape[:-2], grad_y.shape[-2] * 2, grad_y.shape[-1] * 2)


def upsample_nearest2(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(x, 2, axis=-2), 2, axis=-1)


def upsample_nearest2_backward(grad_y: np.ndarray) -> np.ndarray:
    h, w = grad_y.shape[-2] // 2, grad_y.shape[-1] // 2
    r = grad_y.reshape(*grad_y.shape[:-2], h, 2, w, 2)
    return r.sum(axis=(-3, -1))


def timestep_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal embedding of (possibly batched) integer timesteps, (..., dim)."""
    if dim % 2:
        raise ValueError(f"embedding dim must be even, got {dim}")
    t = np.asarray(t, dtype=float)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = t[..., None] * freqs
    return np.concatenate([np.cos(args), np.sin(args)], axis=-1)


# ---------------------------------------------------------------------------
# tensor file format: one JSON header line, then little-endian raw data
# ---------------------------------------------------------------------------

_DTYPES = {"float64": "<f8", "float32": "<f4", "int64": "<i8", "uint16": "<u2",
           "uint8": "|u1"}


def save_tensor(path, x: np.ndarray) -> None:
    name = x.dtype.name
    if name not in _DTYPES:
        raise ValueError(f"unsupported dtype {name}")
    header = json.dumps({"shape": list(x.shape), "dtype": name}, sort_keys=True)
    with open(path, "wb") as f:
        f.write(header.encode("utf-8") + b"\n")
        f.write(np.ascontiguousarray(x).astype(_DTYPES[name]).tobytes())


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        raw = f.read()
    arr = np.frombuffer(raw, dtype=_DTYPES[header["dtype"]])
    return arr.reshape(header["shape"]).astype(header["dtype"])


def save_tensor_dict(path, tensors: dict) -> None:
    """Checkpoint container: JSON manifest line, then concatenated raw blocks
    in manifest order."""
    entries = []
    blobs = []
    for name in sorted(tensors):
        x = tensors[name]
        dname = x.dtype.name
        if dname not in _DTYPES:
            raise ValueError(f"unsupported dtype {dname} for {name!r}")
        blob = np.ascontiguousarray(x).astype(_DTYPES[dname]).tobytes()
        entries.append({"name": name, "shape": list(x.shape), "dtype": dname,
                        "nbytes": len(blob)})
        blobs.append(blob)
    header = json.dumps({"tensors": entries}, sort_keys=True)
    with open(path, "wb") as f:
        f.write(header.encode("utf-8") + b"\n")
        for blob in blobs:
            f.write(blob)


def load_tensor_dict(path) -> dict:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        out = {}
        for entry in header["tensors"]:
            raw = f.read(entry["nbytes"])
            arr = np.frombuffer(raw, dtype=_DTYPES[entry["dtype"]])
            out[entry["name"]] = arr.reshape(entry["shape"]).astype(entry["dtype"])
    return out
