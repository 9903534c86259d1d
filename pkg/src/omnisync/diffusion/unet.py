"""Small cubemap denoiser with hand-written forward and backward passes.

Two resolution levels. Residual blocks follow [group norm -> silu -> conv3x3]
twice, with a per-block learned affine of the 64-dim sinusoidal timestep
embedding added between the convolutions. One self-attention block sits at
the lowest resolution. Every spatial operator routes through its synced or
unsynced variant according to the three sync flags; the parameter set is
identical either way.

The final conv starts at a tenth of the usual scale, so an untrained model
predicts values near zero while still passing gradient to every upstream
parameter from the first step.

No autodiff: forward() records the intermediates backward() needs, and
backward() replays the chain in reverse. Gradients are validated against
finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import numeric_core as nc
from .. import sync_ops as so

TEMB_DIM = 64


@dataclass(frozen=True)
class ToyUNetConfig:
    in_channels: int = 12
    out_channels: int = 8
    base_channels: int = 32
    heads: int = 2
    sync_sa: bool = True
    sync_conv: bool = True
    sync_gn: bool = True
    dtype: str = "float64"

    @property
    def groups(self) -> int:
        g = min(8, self.base_channels)
        if self.base_channels % g:
            raise ValueError(f"base_channels {self.base_channels} not divisible by {g}")
        return g


def _conv_mf(x, w, b, sync: bool):
    if w.shape[2] == 1:
        return so._conv_faces(x, w, b)
    return so.synced_conv2d(x, w, b) if sync else so.unsynced_conv2d(x, w, b)


def _conv_mf_backward(gy, x, w, sync: bool):
    if w.shape[2] == 1:
        return so._conv_faces_backward(gy, x, w)
    if sync:
        return so.synced_conv2d_backward(gy, x, w)
    return so.unsynced_conv2d_backward(gy, x, w)


def _gn_mf(x, groups, g, b, sync: bool):
    return (so.synced_group_norm if sync else so.per_view_group_norm)(x, groups, g, b)


def _gn_mf_backward(gy, x, groups, g, sync: bool):
    fn = so.synced_group_norm_backward if sync else so.per_view_group_norm_backward
    return fn(gy, x, groups, g)


def _attn_mf(q, k, v, heads, sync: bool):
    return (so.synced_attention if sync else so.unsynced_attention)(q, k, v, heads)


def _attn_mf_backward(go, q, k, v, heads, sync: bool):
    fn = so.synced_attention_backward if sync else so.unsynced_attention_backward
    return fn(go, q, k, v, heads)


class ToyUNet:
    """Parameter store plus explicit forward/backward for the fixed
    architecture. Channel plan: c0 at full resolution, 2*c0 at half."""

    def __init__(self, config: ToyUNetConfig, seed: int = 0):
        self.config = config
        self.params = self._init_params(np.random.default_rng(seed))

    # -- parameters ---------------------------------------------------------

    def _init_params(self, rng) -> dict:
        c = self.config
        c0 = c.base_channels
        c1 = 2 * c0
        p = {}

        def conv(name, c_out, c_in, k, scale=1.0):
            std = scale * np.sqrt(2.0 / (c_in * k * k))
            p[f"{name}.w"] = rng.normal(0.0, std, size=(c_out, c_in, k, k))
            p[f"{name}.b"] = np.zeros(c_out)

        def gn(name, ch):
            p[f"{name}.g"] = np.ones(ch)
            p[f"{name}.b"] = np.zeros(ch)

        def res(name, c_in, c_out):
            gn(f"{name}.gn1", c_in)
            conv(f"{name}.conv1", c_out, c_in, 3)
            p[f"{name}.temb.w"] = rng.normal(0.0, 1.0 / np.sqrt(TEMB_DIM),
                                             size=(TEMB_DIM, c_out))
            p[f"{name}.temb.b"] = np.zeros(c_out)
            gn(f"{name}.gn2", c_out)
            conv(f"{name}.conv2", c_out, c_out, 3)
            if c_in != c_out:
                conv(f"{name}.skip", c_out, c_in, 1)

        conv("in", c0, c.in_channels, 3)
        res("res0", c0, c0)
        res("res1", c0, c1)
        gn("attn.gn", c1)
        for nm in ("q", "k", "v", "out"):
            conv(f"attn.{nm}", c1, c1, 1)
        res("res2", c1, c1)
        res("res3", c1 + c0, c0)
        gn("out.gn", c0)
        conv("out", c.out_channels, c0, 3, scale=0.1)

        dt = np.dtype(self.config.dtype)
        return {k_: v.astype(dt) for k_, v in p.items()}

    def zero_grads(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    # -- residual block -----------------------------------------------------

    def _res_forward(self, name, x, temb, cache):
        c = self.config
        p = self.params
        a1 = _gn_mf(x, c.groups, p[f"{name}.gn1.g"], p[f"{name}.gn1.b"], c.sync_gn)
        a2 = nc.silu(a1)
        a3 = _conv_mf(a2, p[f"{name}.conv1.w"], p[f"{name}.conv1.b"], c.sync_conv)
        tb = temb @ p[f"{name}.temb.w"] + p[f"{name}.temb.b"]
        a4 = a3 + tb[:, None, :, None, None]
        a5 = _gn_mf(a4, c.groups, p[f"{name}.gn2.g"], p[f"{name}.gn2.b"], c.sync_gn)
        a6 = nc.silu(a5)
        a7 = _conv_mf(a6, p[f"{name}.conv2.w"], p[f"{name}.conv2.b"], c.sync_conv)
        if f"{name}.skip.w" in p:
            sk = _conv_mf(x, p[f"{name}.skip.w"], p[f"{name}.skip.b"], c.sync_conv)
        else:
            sk = x
        cache[name] = (x, a1, a2, a4, a5, a6)
        return sk + a7

    def _res_backward(self, name, gy, cache, grads):
        c = self.config
        p = self.params
        x, a1, a2, a4, a5, a6 = cache[name]
        ga6, gw2, gb2 = _conv_mf_backward(gy, a6, p[f"{name}.conv2.w"], c.sync_conv)
        grads[f"{name}.conv2.w"] += gw2
        grads[f"{name}.conv2.b"] += gb2
        ga5 = nc.silu_backward(ga6, a5)
        ga4, gg2, gbb2 = _gn_mf_backward(ga5, a4, c.groups, p[f"{name}.gn2.g"], c.sync_gn)
        grads[f"{name}.gn2.g"] += gg2
        grads[f"{name}.gn2.b"] += gbb2
        gtb = ga4.sum(axis=(1, 3, 4))
        temb = cache["temb"]
        grads[f"{name}.temb.w"] += temb.T @ gtb
        grads[f"{name}.temb.b"] += gtb.sum(axis=0)
        ga2, gw1, gb1 = _conv_mf_backward(ga4, a2, p[f"{name}.conv1.w"], c.sync_conv)
        grads[f"{name}.conv1.w"] += gw1
        grads[f"{name}.conv1.b"] += gb1
        ga1 = nc.silu_backward(ga2, a1)
        gx, gg1, gbb1 = _gn_mf_backward(ga1, x, c.groups, p[f"{name}.gn1.g"], c.sync_gn)
        grads[f"{name}.gn1.g"] += gg1
        grads[f"{name}.gn1.b"] += gbb1
        if f"{name}.skip.w" in p:
            gxs, gws, gbs = _conv_mf_backward(gy, x, p[f"{name}.skip.w"], c.sync_conv)
            grads[f"{name}.skip.w"] += gws
            grads[f"{name}.skip.b"] += gbs
            gx = gx + gxs
        else:
            gx = gx + gy
        return gx

    # -- attention block ----------------------------------------------------

    def _attn_forward(self, x, cache):
        c = self.config
        p = self.params
        n1 = _gn_mf(x, c.groups, p["attn.gn.g"], p["attn.gn.b"], c.sync_gn)
        q = _conv_mf(n1, p["attn.q.w"], p["attn.q.b"], c.sync_conv)
        k = _conv_mf(n1, p["attn.k.w"], p["attn.k.b"], c.sync_conv)
        v = _conv_mf(n1, p["attn.v.w"], p["attn.v.b"], c.sync_conv)
        att = _attn_mf(q, k, v, c.heads, c.sync_sa)
        o = _conv_mf(att, p["attn.out.w"], p["attn.out.b"], c.sync_conv)
        cache["attn"] = (x, n1, q, k, v, att)
        return x + o

    def _attn_backward(self, gy, cache, grads):
        c = self.config
        p = self.params
        x, n1, q, k, v, att = cache["attn"]
        gatt, gwo, gbo = _conv_mf_backward(gy, att, p["attn.out.w"], c.sync_conv)
        grads["attn.out.w"] += gwo
        grads["attn.out.b"] += gbo
        gq, gk, gv = _attn_mf_backward(gatt, q, k, v, c.heads, c.sync_sa)
        gn1 = np.zeros_like(n1)
        for g, nm in ((gq, "q"), (gk, "k"), (gv, "v")):
            gn_part, gw, gb = _conv_mf_backward(g, n1, p[f"attn.{nm}.w"], c.sync_conv)
            grads[f"attn.{nm}.w"] += gw
            grads[f"attn.{nm}.b"] += gb
            gn1 += gn_part
        gx, gg, gb = _gn_mf_backward(gn1, x, c.groups, p["attn.gn.g"], c.sync_gn)
        grads["attn.gn.g"] += gg
        grads["attn.gn.b"] += gb
        return gx + gy

    # -- full network -------------------------------------------------------

    def forward(self, x: np.ndarray, t: np.ndarray):
        """x: (B, 6, in_channels, H, W), t: (B,) integer timesteps.
        Returns (v, cache) with v: (B, 6, out_channels, H, W)."""
        c = self.config
        p = self.params
        x = x.astype(p["in.w"].dtype, copy=False)
        temb = nc.timestep_embedding(np.asarray(t), TEMB_DIM).astype(x.dtype)
        cache = {"x": x, "temb": temb}
        h0 = _conv_mf(x, p["in.w"], p["in.b"], c.sync_conv)
        h1 = self._res_forward("res0", h0, temb, cache)
        d1 = nc.avg_pool2(h1)
        h2 = self._res_forward("res1", d1, temb, cache)
        h3 = self._attn_forward(h2, cache)
        h4 = self._res_forward("res2", h3, temb, cache)
        u = nc.upsample_nearest2(h4)
        cat = np.concatenate([u, h1], axis=2)
        h5 = self._res_forward("res3", cat, temb, cache)
        og = _gn_mf(h5, c.groups, p["out.gn.g"], p["out.gn.b"], c.sync_gn)
        oa = nc.silu(og)
        out = _conv_mf(oa, p["out.w"], p["out.b"], c.sync_conv)
        cache["head"] = (h5, og, oa)
        return out, cache

    def backward(self, grad_out: np.ndarray, cache) -> dict:
        """Parameter gradients for a given output gradient."""
        c = self.config
        p = self.params
        grads = self.zero_grads()
        h5, og, oa = cache["head"]
        goa, gwo, gbo = _conv_mf_backward(grad_out, oa, p["out.w"], c.sync_conv)
        grads["out.w"] += gwo
        grads["out.b"] += gbo
        gog = nc.silu_backward(goa, og)
        gh5, gg, gb = _gn_mf_backward(gog, h5, c.groups, p["out.gn.g"], c.sync_gn)
        grads["out.gn.g"] += gg
        grads["out.gn.b"] += gb
        gcat = self._res_backward("res3", gh5, cache, grads)
        c0 = self.config.base_channels
        gu = gcat[:, :, :2 * c0]
        gh1_skip = gcat[:, :, 2 * c0:]
        gh4 = nc.upsample_nearest2_backward(gu)
        gh3 = self._res_backward("res2", gh4, cache, grads)
        gh2 = self._attn_backward(gh3, cache, grads)
        gd1 = self._res_backward("res1", gh2, cache, grads)
        gh1 = nc.avg_pool2_backward(gd1) + gh1_skip
        gh0 = self._res_backward("res0", gh1, cache, grads)
        gx, gwi, gbi = _conv_mf_backward(gh0, cache["x"], p["in.w"], c.sync_conv)
        grads["in.w"] += gwi
        grads["in.b"] += gbi
        return grads

    # -- persistence --------------------------------------------------------

    def state_dict(self) -> dict:
        return dict(self.params)

    def load_state_dict(self, state: dict) -> None:
        missing = set(self.params) ^ set(state)
        if missing:
            raise ValueError(f"parameter names mismatch: {sorted(missing)}")
        for k in self.params:
            if self.params[k].shape != state[k].shape:
                raise ValueError(f"shape mismatch for {k}")
            self.params[k] = state[k].astype(self.params[k].dtype)


def unet_layer_specs(config: ToyUNetConfig, face_size: int):
    """Layer lists for analytic FLOPs accounting, one entry per resolution:
    [(arch_spec, spatial_size)].

    Timestep projections, pooling, and upsampling are omitted; their cost is
    linear in pixel count with constants far below any convolution here.
    """
    c0, c1 = config.base_channels, 2 * config.base_channels

    def conv(ci, co, k=3):
        return {"kind": "conv", "c_in": ci, "c_out": co, "k": k}

    def norm(ch):
        return {"kind": "norm", "channels": ch}

    full = [conv(config.in_channels, c0),
            norm(c0), conv(c0, c0), norm(c0), conv(c0, c0),
            norm(c1 + c0), conv(c1 + c0, c0), norm(c0), conv(c0, c0),
            conv(c1 + c0, c0, 1),
            norm(c0), conv(c0, config.out_channels)]
    half = [norm(c0), conv(c0, c1), norm(c1), conv(c1, c1), conv(c0, c1, 1),
            norm(c1), conv(c1, c1, 1), conv(c1, c1, 1), conv(c1, c1, 1),
            {"kind": "attention", "channels": c1, "heads": config.heads},
            conv(c1, c1, 1),
            norm(c1), conv(c1, c1), norm(c1), conv(c1, c1)]
    return [(full, face_size), (half, face_size // 2)]
