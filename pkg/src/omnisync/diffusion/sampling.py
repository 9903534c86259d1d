"""Deterministic DDIM sampling with masked condition faces.

The sampler walks a uniformly spaced descending subsequence of timesteps.
Each update converts the predicted v into (x0_hat, eps_hat) and forms

    z_s = alpha_s * x0_hat + sigma_s * eps_hat      (eta = 0)

on the masked faces; condition faces are re-imposed from the clean input
after every step, so they come out bit-equal. The model only needs a
``forward(x, t) -> (v, cache)`` method.
"""

from __future__ import annotations

import numpy as np

from . import data as ddata
from . import schedule as dsched


def ddim_timesteps(T: int, steps: int) -> list:
    """Descending [T, T-d, ...] with d = T // steps; the sampler steps from
    each entry to the next and from the last entry to 0."""
    if steps < 1 or steps > T:
        raise ValueError(f"steps must be in 1..{T}, got {steps}")
    d = T // steps
    return [T - i * d for i in range(steps)]


def ddim_sample(model, x0_c: np.ndarray, x0_d: np.ndarray, mask: np.ndarray,
                schedule: dsched.NoiseSchedule, steps: int = 50,
                rng: np.random.Generator | None = None):
    """Sample masked faces conditioned on the clean faces.

    x0_c, x0_d: (B, 6, 4, H, W) clean blocks; only the condition faces
    (mask 0) are consulted. Returns (out_c, out_d) with condition faces
    bit-equal to the input and masked faces holding the final x0_hat.
    """
    dsched.check_face_mask(mask)
    if rng is None:
        rng = np.random.default_rng(0)
    dt = model.params["in.w"].dtype if hasattr(model, "params") else np.float64
    x0_c = x0_c.astype(dt, copy=False)
    x0_d = x0_d.astype(dt, copy=False)
    m = mask.astype(dt)
    z_c = np.where(m > 0, ddata.sample_block_noise(rng, x0_c.shape).astype(dt), x0_c)
    z_d = np.where(m > 0, ddata.sample_block_noise(rng, x0_d.shape).astype(dt), x0_d)
    b = x0_c.shape[0]
    ts = ddim_timesteps(schedule.T, steps)
    for t, s in zip(ts, ts[1:] + [0]):
        t_vec = np.full(b, t, dtype=np.int64)
        x = ddata.assemble_input(z_c, z_d, mask).astype(dt)
        v, _ = model.forward(x, t_vec)
        v_c, v_d = ddata.split_output(v)
        x0_hat_c = dsched.reconstruct_x0(z_c, v_c, t, schedule)
        x0_hat_d = dsched.reconstruct_x0(z_d, v_d, t, schedule)
        eps_c = dsched.reconstruct_eps(z_c, v_c, t, schedule)
        eps_d = dsched.reconstruct_eps(z_d, v_d, t, schedule)
        a_s, s_s = schedule.alpha_sigma(s)
        z_c = np.where(m > 0, a_s * x0_hat_c + s_s * eps_c, x0_c)
        z_d = np.where(m > 0, a_s * x0_hat_d + s_s * eps_d, x0_d)
    return z_c, z_d


def decode_sample(out_c: np.ndarray, out_d: np.ndarray, norms):
    """Decode sampled blocks into colors and coded-depth rasters.

    Returns (rgb (B, 6, H, W, 3) in [0, 1], depth values (B, 6, H, W) in
    metric z-depth using each item's normalization).
    """
    rgb = ddata.decode_rgb(np.moveaxis(out_c[:, :, :3], 2, -1))
    coded = ddata.unpack_depth_block(out_d)
    depth = np.stack([norms[i].invert(coded[i]) for i in range(out_c.shape[0])])
    return rgb, depth
