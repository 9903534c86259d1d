"""Noise schedule and v-prediction algebra.

Linear-beta schedule (beta: 1e-4 to 2e-2 over T steps), alpha_bar_t =
prod(1 - beta_i). Signal/noise fractions alpha_t = sqrt(alpha_bar_t),
sigma_t = sqrt(1 - alpha_bar_t) satisfy alpha^2 + sigma^2 = 1 identically.

v-parameterization:

    v      = alpha_t * eps - sigma_t * x0
    x0_hat = alpha_t * z_t - sigma_t * v
    eps_hat = sigma_t * z_t + alpha_t * v

t runs over 1..T; t = 0 denotes the clean endpoint (alpha=1, sigma=0) used
by the final sampler step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BETA_START = 1e-4
BETA_END = 2e-2


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    alpha_bar: np.ndarray  # [T], entry i is alpha_bar at t = i+1

    def alpha_sigma(self, t):
        """(alpha_t, sigma_t) for scalar or array t in 0..T."""
        t = np.asarray(t)
        if np.any(t < 0) or np.any(t > self.T):
            raise ValueError(f"t out of range 0..{self.T}")
        ab = np.where(t == 0, 1.0, self.alpha_bar[np.maximum(t, 1) - 1])
        alpha = np.sqrt(ab)
        sigma = np.sqrt(1.0 - ab)
        if t.ndim == 0:
            return float(alpha), float(sigma)
        return alpha, sigma


def make_schedule(T: int, kind: str = "linear") -> NoiseSchedule:
    if T < 2:
        raise ValueError(f"need T >= 2, got {T}")
    if kind != "linear":
        raise ValueError(f"unknown schedule kind {kind!r}")
    betas = np.linspace(BETA_START, BETA_END, T)
    return NoiseSchedule(T, np.cumprod(1.0 - betas))


def _bcast(val, like: np.ndarray) -> np.ndarray:
    """Broadcast per-item scalars over (B, ...) tensors."""
    val = np.asarray(val, dtype=like.dtype)
    if val.ndim == 0:
        return val
    return val.reshape(val.shape + (1,) * (like.ndim - 1))


def v_target(x0: np.ndarray, eps: np.ndarray, t, schedule: NoiseSchedule) -> np.ndarray:
    alpha, sigma = schedule.alpha_sigma(t)
    return _bcast(alpha, x0) * eps - _bcast(sigma, x0) * x0


def reconstruct_x0(z_t: np.ndarray, v: np.ndarray, t, schedule: NoiseSchedule) -> np.ndarray:
    alpha, sigma = schedule.alpha_sigma(t)
    return _bcast(alpha, z_t) * z_t - _bcast(sigma, z_t) * v


def reconstruct_eps(z_t: np.ndarray, v: np.ndarray, t, schedule: NoiseSchedule) -> np.ndarray:
    alpha, sigma = schedule.alpha_sigma(t)
    return _bcast(sigma, z_t) * z_t + _bcast(alpha, z_t) * v


def check_face_mask(mask: np.ndarray) -> None:
    """mask: (B, 6, 1, H, W) with each face all-0 or all-1."""
    if mask.ndim != 5 or mask.shape[2] != 1:
        raise ValueError(f"mask must be (B, 6, 1, H, W), got {mask.shape}")
    per_face = mask.reshape(mask.shape[0], 6, -1)
    face_min = per_face.min(axis=2)
    face_max = per_face.max(axis=2)
    if not np.array_equal(face_min, face_max):
        raise ValueError("mask must be constant per face")
    if not np.all((face_min == 0) | (face_min == 1)):
        raise ValueError("mask values must be 0 or 1")


def masked_noise_inject(x0_c: np.ndarray, x0_d: np.ndarray, mask: np.ndarray, t,
                        eps_c: np.ndarray, eps_d: np.ndarray,
                        schedule: NoiseSchedule):
    """Forward process restricted to masked faces.

    Masked faces get z = alpha*x0 + sigma*eps; condition faces (mask 0) stay
    bit-equal to x0 at every t.
    """
    check_face_mask(mask)
    alpha, sigma = schedule.alpha_sigma(t)
    a = _bcast(alpha, x0_c)
    s = _bcast(sigma, x0_c)
    z_c = np.where(mask > 0, a * x0_c + s * eps_c, x0_c)
    z_d = np.where(mask > 0, a * x0_d + s * eps_d, x0_d)
    return z_c, z_d
