"""Synthetic RGB-D cubemap scenes and batch assembly.

Scenes are low-order polynomial fields in the direction vector (x, y, z),
evaluated at pixel-center directions. Such fields are smooth functions on
the sphere, so ground truth is seam-continuous by construction and every
raster value has an analytic definition.

Channel packing (fixed): the image block is [R, G, B, 0] with RGB mapped to
[-1, 1] and then scaled by RGB_LATENT_GAIN; the depth block broadcasts the
coded Z-depth to three channels, [Z, Z, Z, 0]. Model input stacks
[image(4) | depth(4) | posenc(3) | mask(1)].

The zero channel of each block is inert padding: it carries no signal and
receives no noise anywhere in the pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .. import cube_geometry as cg
from ..depth_tools import (DepthCubemap, DepthNormalization, ZDEPTH,
                           euclidean_to_z, sample_rescale_s)
from ..omni_encoding import xyz_encoding

FIELD_DEGREE = 2

# Over the synthetic scene family the centered colors 2*rgb - 1 have a
# per-channel variance of about 0.34; this gain brings the coded image
# block to roughly unit variance, the scale the noise schedule assumes.
RGB_LATENT_GAIN = 1.8


@lru_cache(maxsize=8)
def _monomial_basis(face_size: int, degree: int) -> np.ndarray:
    """All monomials x^i y^j z^k with i+j+k <= degree at pixel-center
    directions, shape (n_mono, 6, H, W)."""
    dirs = np.stack([cg.face_direction_grid(cg.CubeFace(f), face_size)
                     for f in range(6)])
    terms = []
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            for k in range(degree + 1 - i - j):
                terms.append(dirs[..., 0] ** i * dirs[..., 1] ** j * dirs[..., 2] ** k)
    return np.stack(terms)


def n_monomials(degree: int) -> int:
    return sum(1 for i in range(degree + 1) for j in range(degree + 1 - i)
               for k in range(degree + 1 - i - j))


def random_smooth_field(rng: np.random.Generator, face_size: int,
                        degree: int = FIELD_DEGREE) -> np.ndarray:
    """One random band-limited field on the cubemap, (6, H, W), standardized
    to zero mean and unit spread."""
    coeffs = rng.normal(size=n_monomials(degree))
    f = np.tensordot(coeffs, _monomial_basis(face_size, degree), axes=1)
    return (f - f.mean()) / (f.std() + 1e-12)


def make_scene(rng: np.random.Generator, face_size: int,
               degree: int = FIELD_DEGREE):
    """Random smooth RGB-D scene: (rgb (6,H,W,3) in [0,1], z-depth cubemap)."""
    rgb = np.stack([0.5 + 0.45 * np.tanh(random_smooth_field(rng, face_size, degree))
                    for _ in range(3)], axis=-1)
    base = rng.uniform(2.0, 4.0)
    e = base * np.exp(0.25 * np.tanh(random_smooth_field(rng, face_size, degree)))
    depth = euclidean_to_z(DepthCubemap.from_values(e, "euclidean"))
    return rgb, depth


def encode_rgb(rgb: np.ndarray) -> np.ndarray:
    """[0,1] colors -> centered, roughly unit-variance code."""
    return (2.0 * rgb - 1.0) * RGB_LATENT_GAIN


def decode_rgb(coded: np.ndarray) -> np.ndarray:
    return np.clip((coded / RGB_LATENT_GAIN + 1.0) * 0.5, 0.0, 1.0)


def sample_block_noise(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normal noise for a 4-channel block, zero on the pad channel."""
    eps = rng.standard_normal(shape)
    eps[..., 3, :, :] = 0.0
    return eps


@dataclass
class SceneBatch:
    x0_c: np.ndarray  # (B, 6, 4, H, W)
    x0_d: np.ndarray  # (B, 6, 4, H, W)
    mask: np.ndarray  # (B, 6, 1, H, W); 1 = generate, 0 = condition
    norms: list = field(default_factory=list)  # per-item DepthNormalization
    rgb: np.ndarray | None = None  # (B, 6, H, W, 3) source colors
    depth: list = field(default_factory=list)  # per-item z-depth cubemaps


def pack_image_block(rgb: np.ndarray) -> np.ndarray:
    """(6, H, W, 3) colors -> (6, 4, H, W) coded image block."""
    coded = np.moveaxis(encode_rgb(rgb), -1, 1)
    zeros = np.zeros_like(coded[:, :1])
    return np.concatenate([coded, zeros], axis=1)


def pack_depth_block(coded_z: np.ndarray) -> np.ndarray:
    """(6, H, W) coded z-depth -> (6, 4, H, W), value broadcast to 3 channels."""
    c = coded_z[:, None]
    zeros = np.zeros_like(c)
    return np.concatenate([c, c, c, zeros], axis=1)


def unpack_depth_block(block: np.ndarray) -> np.ndarray:
    """Inverse of pack_depth_block up to averaging of the broadcast channels."""
    return block[..., :3, :, :].mean(axis=-3)


def encode_scenes(scenes, s_values, condition_face: int = int(cg.CubeFace.FRONT)) -> SceneBatch:
    """Encode (rgb, z-depth) scene pairs into a training batch.

    Depth coding uses per-scene min/max from the condition face mapped to
    [-s, +s].
    """
    x0_c, x0_d, norms, rgbs, depths = [], [], [], [], []
    for (rgb, depth), s_i in zip(scenes, s_values):
        norm = DepthNormalization.from_condition_face(depth, condition_face, s_i)
        x0_c.append(pack_image_block(rgb))
        x0_d.append(pack_depth_block(norm.apply(depth.values)))
        norms.append(norm)
        rgbs.append(rgb)
        depths.append(depth)
    face_size = scenes[0][0].shape[1]
    mask = np.ones((len(scenes), 6, 1, face_size, face_size))
    mask[:, condition_face] = 0.0
    return SceneBatch(np.stack(x0_c), np.stack(x0_d), mask, norms,
                      np.stack(rgbs), depths)


def make_batch(rng: np.random.Generator, batch_size: int, face_size: int,
               condition_face: int = int(cg.CubeFace.FRONT),
               s: float | None = None, degree: int = FIELD_DEGREE) -> SceneBatch:
    """Sample fresh synthetic scenes and encode them; s defaults to a fresh
    training draw per scene."""
    scenes = [make_scene(rng, face_size, degree) for _ in range(batch_size)]
    s_values = [sample_rescale_s(rng) if s is None else s for _ in scenes]
    return encode_scenes(scenes, s_values, condition_face)


def assemble_input(z_c: np.ndarray, z_d: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Fixed channel stack [z_c | z_d | posenc(3) | mask(1)], (B, 6, 12, H, W)."""
    b, m, c, h, w = z_c.shape
    if z_d.shape != z_c.shape:
        raise ValueError(f"image/depth block shapes differ: {z_c.shape} vs {z_d.shape}")
    if mask.shape != (b, m, 1, h, w):
        raise ValueError(f"mask shape {mask.shape} != {(b, m, 1, h, w)}")
    pe = np.broadcast_to(xyz_encoding(h).data[None], (b, 6, 3, h, w))
    return np.concatenate([z_c, z_d, pe, mask], axis=2)


def split_output(v: np.ndarray):
    """(B, 6, 8, H, W) model output -> (v_c, v_d) blocks of 4 channels."""
    if v.shape[2] != 8:
        raise ValueError(f"expected 8 output channels, got {v.shape[2]}")
    return v[:, :, :4], v[:, :, 4:]
