"""Depth conventions on cube faces and the conditional rescaling scheme.

Two depth conventions coexist: Euclidean (straight-line distance from the
viewpoint) and Z-depth (distance along the face normal). For a pixel with
face coordinates (u, v) the unnormalized ray is (2u-1, -(2v-1), 1), so the
two are related by the per-pixel factor n = ||(2u-1, 2v-1, 1)||:

    z = e / n        e = z * n        (n >= 1, equality at face centers)

Z-depth is the representation a planar scene is simplest in: a wall
perpendicular to a face normal has constant Z-depth across that face.

Conditional rescaling maps the condition face's [min, max] onto [-s, +s]
with s in [0.2, 1.0]; other faces use the same affine map and may exceed
+-s. Nothing is clamped, so out-of-range values survive a round trip.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .cube_geometry import CubemapGrid, face_pixel_centers

ZDEPTH = "zdepth"
EUCLIDEAN = "euclidean"

S_INFERENCE = 0.6
S_RANGE = (0.2, 1.0)


@dataclass
class DepthCubemap:
    """Single-channel cubemap of positive depths plus its convention tag."""

    grid: CubemapGrid
    convention: str

    def __post_init__(self):
        if self.convention not in (ZDEPTH, EUCLIDEAN):
            raise ValueError(f"unknown depth convention {self.convention!r}")
        if self.grid.channels != 1:
            raise ValueError(f"depth cubemap needs 1 channel, got {self.grid.channels}")

    @property
    def values(self) -> np.ndarray:
        return self.grid.faces[..., 0]

    @classmethod
    def from_values(cls, values: np.ndarray, convention: str) -> "DepthCubemap":
        return cls(CubemapGrid(np.asarray(values)[..., None]), convention)


@lru_cache(maxsize=32)
def ray_norm_grid(face_size: int) -> np.ndarray:
    """||(2u-1, 2v-1, 1)|| at every pixel center, shape (H, H); identical for
    all six faces."""
    u, v = face_pixel_centers(face_size)
    a = 2.0 * u - 1.0
    b = 2.0 * v - 1.0
    n = np.sqrt(a * a + b * b + 1.0)
    n.setflags(write=False)
    return n


def _check_positive(values: np.ndarray) -> None:
    bad = np.count_nonzero(~(values > 0) | ~np.isfinite(values))
    if bad:
        raise ValueError(f"depth must be positive and finite; {bad} offending pixels")


def euclidean_to_z(d: DepthCubemap) -> DepthCubemap:
    if d.convention != EUCLIDEAN:
        raise ValueError(f"expected euclidean input, got {d.convention}")
    _check_positive(d.values)
    n = ray_norm_grid(d.grid.face_size)
    return DepthCubemap.from_values(d.values / n, ZDEPTH)


def z_to_euclidean(d: DepthCubemap) -> DepthCubemap:
    if d.convention != ZDEPTH:
        raise ValueError(f"expected zdepth input, got {d.convention}")
    _check_positive(d.values)
    n = ray_norm_grid(d.grid.face_size)
    return DepthCubemap.from_values(d.values * n, EUCLIDEAN)


@dataclass(frozen=True)
class DepthNormalization:
    """Affine map sending [d_min, d_max] to [-s, +s]."""

    d_min: float
    d_max: float
    s: float

    def __post_init__(self):
        if not self.d_min < self.d_max:
            raise ValueError(f"need d_min < d_max, got [{self.d_min}, {self.d_max}]")
        if not S_RANGE[0] <= self.s <= S_RANGE[1]:
            raise ValueError(f"s must lie in {S_RANGE}, got {self.s}")

    @classmethod
    def from_condition_face(cls, depth: DepthCubemap, condition_face: int,
                            s: float) -> "DepthNormalization":
        face = depth.values[condition_face]
        return cls(float(face.min()), float(face.max()), s)

    def apply(self, values: np.ndarray) -> np.ndarray:
        mid = 0.5 * (self.d_min + self.d_max)
        half = 0.5 * (self.d_max - self.d_min)
        return (np.asarray(values, dtype=float) - mid) / half * self.s

    def invert(self, coded: np.ndarray) -> np.ndarray:
        mid = 0.5 * (self.d_min + self.d_max)
        half = 0.5 * (self.d_max - self.d_min)
        return np.asarray(coded, dtype=float) / self.s * half + mid


def normalize_depth(d: DepthCubemap, n: DepthNormalization) -> np.ndarray:
    """Coded depth values (6, H, W); condition-face range lands in [-s, +s],
    values outside the range extend linearly beyond it (no clamping)."""
    return n.apply(d.values)


def denormalize_depth(coded: np.ndarray, n: DepthNormalization, convention: str = ZDEPTH) -> DepthCubemap:
    return DepthCubemap.from_values(n.invert(coded), convention)


def sample_rescale_s(rng: np.random.Generator | None = None) -> float:
    """Training draws s ~ U[0.2, 1.0]; without an rng the inference constant
    0.6 is returned."""
    if rng is None:
        return S_INFERENCE
    return float(rng.uniform(*S_RANGE))
