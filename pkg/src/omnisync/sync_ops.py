"""Multi-plane synchronized operators on cubemap tensors.

A multi-plane tensor is a plain array of shape (B, M, C, H, W) with M = 6
faces in the fixed FRBLUD order. Three operators get "synced" variants that
treat the six faces as one spherical domain:

* convolution: the halo of each face is filled with geometrically projected
  pixels from adjacent faces (cube padding) instead of zeros;
* attention: tokens of all six faces form one joint sequence instead of six
  independent ones;
* group normalization: statistics run over all six faces jointly instead of
  per face.

The unsynced baselines are kept alongside for ablations. Backward passes are
explicit, mirroring numeric_core. The analytic FLOPs model for the three
operator kinds lives here too.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import cube_geometry as cg
from . import numeric_core as nc


def check_multiplane(x: np.ndarray) -> None:
    if x.ndim != 5 or x.shape[1] != 6:
        raise ValueError(f"expected (B, 6, C, H, W), got {x.shape}")
    if x.shape[3] != x.shape[4]:
        raise ValueError(f"faces must be square, got {x.shape[3]}x{x.shape[4]}")


# ---------------------------------------------------------------------------
# cube padding
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _pad_tables(h: int, p: int, filter: str):
    """Precomputed halo gather tables for face size h and halo width p.

    For every halo pixel of every face: extend the face's (u, v) beyond
    [0, 1), take its spherical direction, resolve the hosting face via
    face_of, and record the sample indices/weights on that face. Returns a
    dict of (6, K) arrays, K = (h+2p)^2 - h^2.
    """
    size = h + 2 * p
    ii, jj = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    halo = (ii < p) | (ii >= p + h) | (jj < p) | (jj >= p + h)
    hi = ii[halo]
    hj = jj[halo]
    u = (hj - p + 0.5) / h
    v = (hi - p + 0.5) / h
    tables = {"hi": hi, "hj": hj}
    nf = np.empty((6, hi.size), dtype=np.int64)
    if filter == "bilinear":
        idx = {k: np.empty((6, hi.size), dtype=np.int64)
               for k in ("x0", "x1", "y0", "y1")}
        wx = np.empty((6, hi.size))
        wy = np.empty((6, hi.size))
    else:
        idx = {k: np.empty((6, hi.size), dtype=np.int64) for k in ("xi", "yi")}
    for f in range(6):
        d = cg.direction_of(cg.CubeFace(f), u, v)
        faces, nu, nv = cg.face_of(d)
        assert np.all(faces != f)
        nf[f] = faces
        px = nu * h - 0.5
        py = nv * h - 0.5
        if filter == "bilinear":
            x0 = np.floor(px)
            y0 = np.floor(py)
            wx[f] = px - x0
            wy[f] = py - y0
            idx["x0"][f] = np.clip(x0.astype(np.int64), 0, h - 1)
            idx["x1"][f] = np.clip(idx["x0"][f] + 1, 0, h - 1)
            idx["y0"][f] = np.clip(y0.astype(np.int64), 0, h - 1)
            idx["y1"][f] = np.clip(idx["y0"][f] + 1, 0, h - 1)
        else:
            idx["xi"][f] = np.clip(np.floor(px + 0.5).astype(np.int64), 0, h - 1)
            idx["yi"][f] = np.clip(np.floor(py + 0.5).astype(np.int64), 0, h - 1)
    tables["nf"] = nf
    tables.update(idx)
    if filter == "bilinear":
        tables["wx"] = wx
        tables["wy"] = wy
    return tables


def _check_pad_args(x: np.ndarray, p: int, filter: str) -> None:
    check_multiplane(x)
    if filter not in ("nearest", "bilinear"):
        raise ValueError(f"filter must be 'nearest' or 'bilinear', got {filter!r}")
    h = x.shape[3]
    if p < 1 or p > h // 4:
        raise ValueError(f"halo width must satisfy 1 <= p <= H/4, got p={p}, H={h}")


def cube_pad(x: np.ndarray, p: int, filter: str = "bilinear") -> np.ndarray:
    """Geometric padding: (B, 6, C, H, W) -> (B, 6, C, H+2p, W+2p).

    The interior is a bit-exact copy of the source face; every halo pixel is
    the cubemap sampled at the direction of its extended face coordinates
    (value formula identical to `numeric_core.bilinear_sample` on the
    hosting face).
    """
    _check_pad_args(x, p, filter)
    b, _, c, h, w = x.shape
    t = _pad_tables(h, p, filter)
    out = np.zeros((b, 6, c, h + 2 * p, w + 2 * p), dtype=x.dtype)
    out[:, :, :, p:p + h, p:p + w] = x
    hi, hj = t["hi"], t["hj"]
    for f in range(6):
        nf = t["nf"][f]
        if filter == "bilinear":
            wx = t["wx"][f][:, None, None]
            wy = t["wy"][f][:, None, None]
            v00 = x[:, nf, :, t["y0"][f], t["x0"][f]]
            v01 = x[:, nf, :, t["y0"][f], t["x1"][f]]
            v10 = x[:, nf, :, t["y1"][f], t["x0"][f]]
            v11 = x[:, nf, :, t["y1"][f], t["x1"][f]]
            val = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) \
                + wy * ((1.0 - wx) * v10 + wx * v11)
        else:
            val = x[:, nf, :, t["yi"][f], t["xi"][f]]
        # advanced indexing puts the halo axis first on both sides: (K, B, C)
        out[:, f, :, hi, hj] = val
    return out


def cube_pad_backward(grad_padded: np.ndarray, p: int, filter: str = "bilinear") -> np.ndarray:
    """Transpose of cube_pad: scatter halo gradients back onto their source
    pixels. Deterministic (np.add.at in fixed table order)."""
    b, m, c, hp, wp = grad_padded.shape
    if hp != wp or hp <= 2 * p:
        raise ValueError(f"padded shape {grad_padded.shape} inconsistent with halo {p}")
    h = hp - 2 * p
    t = _pad_tables(h, p, filter)
    grad_x = grad_padded[:, :, :, p:p + h, p:p + h].copy()
    hi, hj = t["hi"], t["hj"]
    acc = np.zeros((6 * h * h, b, c), dtype=grad_padded.dtype)
    for f in range(6):
        gv = grad_padded[:, f, :, hi, hj]  # (K, B, C)
        nf = t["nf"][f]
        if filter == "bilinear":
            wx = t["wx"][f][:, None, None]
            wy = t["wy"][f][:, None, None]
            for xi, yi, wgt in (
                (t["x0"][f], t["y0"][f], (1.0 - wy) * (1.0 - wx)),
                (t["x1"][f], t["y0"][f], (1.0 - wy) * wx),
                (t["x0"][f], t["y1"][f], wy * (1.0 - wx)),
                (t["x1"][f], t["y1"][f], wy * wx),
            ):
                flat = (nf * h + yi) * h + xi
                np.add.at(acc, flat, gv * wgt)
        else:
            flat = (nf * h + t["yi"][f]) * h + t["xi"][f]
            np.add.at(acc, flat, gv)
    grad_x += acc.reshape(6, h, h, b, c).transpose(3, 0, 4, 1, 2)
    return grad_x


# ---------------------------------------------------------------------------
# convolution variants
# ---------------------------------------------------------------------------

def _conv_faces(padded: np.ndarray, weights: np.ndarray, bias):
    b, m, c, hp, wp = padded.shape
    y = nc.conv2d_valid(padded.reshape(b * m, c, hp, wp), weights, bias)
    return y.reshape(b, m, *y.shape[1:])


def synced_conv2d(x: np.ndarray, weights: np.ndarray, bias: np.ndarray | None = None,
                  filter: str = "bilinear") -> np.ndarray:
    """Convolution with cube padding; one kernel shared by all six faces."""
    check_multiplane(x)
    k = weights.shape[2]
    if k == 1:
        return _conv_faces(x, weights, bias)
    return _conv_faces(cube_pad(x, (k - 1) // 2, filter), weights, bias)


def unsynced_conv2d(x: np.ndarray, weights: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Zero-padded per-face convolution (the ablation baseline)."""
    check_multiplane(x)
    k = weights.shape[2]
    if k == 1:
        return _conv_faces(x, weights, bias)
    return _conv_faces(nc.zero_pad2d(x, (k - 1) // 2), weights, bias)


def _conv_faces_backward(grad_y: np.ndarray, padded: np.ndarray, weights: np.ndarray):
    b, m = grad_y.shape[:2]
    gp, gw, gb = nc.conv2d_valid_backward(
        grad_y.reshape(b * m, *grad_y.shape[2:]),
        padded.reshape(b * m, *padded.shape[2:]), weights)
    return gp.reshape(padded.shape), gw, gb


def synced_conv2d_backward(grad_y: np.ndarray, x: np.ndarray, weights: np.ndarray,
                           filter: str = "bilinear"):
    k = weights.shape[2]
    if k == 1:
        gp, gw, gb = _conv_faces_backward(grad_y, x, weights)
        return gp, gw, gb
    p = (k - 1) // 2
    padded = cube_pad(x, p, filter)
    gp, gw, gb = _conv_faces_backward(grad_y, padded, weights)
    return cube_pad_backward(gp, p, filter), gw, gb


def unsynced_conv2d_backward(grad_y: np.ndarray, x: np.ndarray, weights: np.ndarray):
    k = weights.shape[2]
    if k == 1:
        return _conv_faces_backward(grad_y, x, weights)
    p = (k - 1) // 2
    padded = nc.zero_pad2d(x, p)
    gp, gw, gb = _conv_faces_backward(grad_y, padded, weights)
    return gp[:, :, :, p:-p, p:-p], gw, gb


# ---------------------------------------------------------------------------
# attention variants
# ---------------------------------------------------------------------------

def to_tokens(x: np.ndarray) -> np.ndarray:
    """(B, M, C, H, W) -> (B, M*H*W, C), faces concatenated in FRBLUD order."""
    b, m, c, h, w = x.shape
    return x.transpose(0, 1, 3, 4, 2).reshape(b, m * h * w, c)


def from_tokens(t: np.ndarray, h: int, w: int) -> np.ndarray:
    b, n, c = t.shape
    m = n // (h * w)
    return t.reshape(b, m, h, w, c).transpose(0, 1, 4, 2, 3)


def synced_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, heads: int) -> np.ndarray:
    """Joint attention over the concatenated token sequence of all faces."""
    check_multiplane(q)
    h, w = q.shape[3], q.shape[4]
    out = nc.attention(to_tokens(q), to_tokens(k), to_tokens(v), heads)
    return from_tokens(out, h, w)


def unsynced_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, heads: int) -> np.ndarray:
    """Per-face attention baseline: each face attends only to itself."""
    check_multiplane(q)
    b, m, c, h, w = q.shape

    def fold(x):
        return x.transpose(0, 1, 3, 4, 2).reshape(b * m, h * w, c)

    out = nc.attention(fold(q), fold(k), fold(v), heads)
    return out.reshape(b, m, h, w, c).transpose(0, 1, 4, 2, 3)


def synced_attention_backward(grad_out: np.ndarray, q, k, v, heads: int):
    h, w = q.shape[3], q.shape[4]
    gq, gk, gv = nc.attention_backward(to_tokens(grad_out), to_tokens(q),
                                       to_tokens(k), to_tokens(v), heads)
    return from_tokens(gq, h, w), from_tokens(gk, h, w), from_tokens(gv, h, w)


def unsynced_attention_backward(grad_out: np.ndarray, q, k, v, heads: int):
    b, m, c, h, w = q.shape

    def fold(x):
        return x.transpose(0, 1, 3, 4, 2).reshape(b * m, h * w, c)

    def unfold(t):
        return t.reshape(b, m, h, w, c).transpose(0, 1, 4, 2, 3)

    gq, gk, gv = nc.attention_backward(fold(grad_out), fold(q), fold(k), fold(v), heads)
    return unfold(gq), unfold(gk), unfold(gv)


# ---------------------------------------------------------------------------
# group norm variants
# ---------------------------------------------------------------------------

def synced_group_norm(x: np.ndarray, groups: int, gamma: np.ndarray, beta: np.ndarray,
                      eps: float = 1e-5) -> np.ndarray:
    """Group normalization with statistics over all faces jointly."""
    check_multiplane(x)
    y = nc.group_norm(x.transpose(0, 2, 1, 3, 4), groups, gamma, beta, eps)
    return y.transpose(0, 2, 1, 3, 4)


def per_view_group_norm(x: np.ndarray, groups: int, gamma: np.ndarray, beta: np.ndarray,
                        eps: float = 1e-5) -> np.ndarray:
    """Per-face statistics baseline."""
    check_multiplane(x)
    b, m, c, h, w = x.shape
    y = nc.group_norm(x.reshape(b * m, c, h, w), groups, gamma, beta, eps)
    return y.reshape(x.shape)


def synced_group_norm_backward(grad_y: np.ndarray, x: np.ndarray, groups: int,
                               gamma: np.ndarray, eps: float = 1e-5):
    gx, gg, gb = nc.group_norm_backward(grad_y.transpose(0, 2, 1, 3, 4),
                                        x.transpose(0, 2, 1, 3, 4), groups, gamma, eps)
    return gx.transpose(0, 2, 1, 3, 4), gg, gb


def per_view_group_norm_backward(grad_y: np.ndarray, x: np.ndarray, groups: int,
                                 gamma: np.ndarray, eps: float = 1e-5):
    b, m, c, h, w = x.shape
    gx, gg, gb = nc.group_norm_backward(grad_y.reshape(b * m, c, h, w),
                                        x.reshape(b * m, c, h, w), groups, gamma, eps)
    return gx.reshape(x.shape), gg, gb


# ---------------------------------------------------------------------------
# analytic FLOPs model
# ---------------------------------------------------------------------------

# conventions: 1 multiply-accumulate = 2 FLOPs; softmax and normalization
# cost 5 FLOPs per element; bilinear halo fill costs 4 MACs per element.
# All arithmetic on python ints, so counts are exact.

def estimate_flops(arch_spec, H: int, W: int, M: int = 6, batch: int = 1,
                   synced: dict | None = None) -> dict:
    """Analytic FLOP counts for a layer list at one resolution.

    arch_spec: list of layer dicts, kind in {conv, attention, norm}:
      {"kind": "conv", "c_in": int, "c_out": int, "k": int}
      {"kind": "attention", "channels": int, "heads": int}
      {"kind": "norm", "channels": int}
    synced: {"sa": bool, "conv": bool, "gn": bool} (default all True).

    The attention entry reports its token-interaction cost (scores, softmax,
    weighted sum; all quadratic in sequence length) separately from the
    linear q/k/v/out projections. Syncing multiplies the quadratic term by
    exactly M and leaves everything else unchanged. Cube-padding cost is
    reported in the "padding" field and excluded from the headline total.
    """
    synced = dict({"sa": True, "conv": True, "gn": True}, **(synced or {}))
    layers = []
    totals = {"conv": 0, "attention_quadratic": 0, "attention_linear": 0,
              "norm": 0, "padding": 0}
    for spec in arch_spec:
        kind = spec["kind"]
        if kind == "conv":
            k = spec["k"]
            macs = batch * M * H * W * spec["c_out"] * spec["c_in"] * k * k
            flops = 2 * macs + batch * M * H * W * spec["c_out"]
            entry = {"kind": kind, "flops": flops, "padding": 0}
            if synced["conv"] and k > 1:
                p = (k - 1) // 2
                halo = (H + 2 * p) * (W + 2 * p) - H * W
                entry["padding"] = 2 * 4 * batch * M * spec["c_in"] * halo
            totals["conv"] += flops
            totals["padding"] += entry["padding"]
        elif kind == "attention":
            c = spec["channels"]
            heads = spec["heads"]
            n_plane = H * W
            if synced["sa"]:
                n, b_eff = M * n_plane, batch
            else:
                n, b_eff = n_plane, batch * M
            quad = b_eff * n * n * (4 * c + 5 * heads)
            lin = 4 * 2 * batch * M * n_plane * c * c
            entry = {"kind": kind, "flops": quad + lin, "quadratic": quad,
                     "linear": lin}
            totals["attention_quadratic"] += quad
            totals["attention_linear"] += lin
        elif kind == "norm":
            flops = 5 * batch * M * H * W * spec["channels"]
            entry = {"kind": kind, "flops": flops}
            totals["norm"] += flops
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
        layers.append(entry)
    headline = (totals["conv"] + totals["attention_quadratic"]
                + totals["attention_linear"] + totals["norm"])
    return {"layers": layers, "totals": totals, "headline_flops": headline,
            "padding_flops": totals["padding"]}
