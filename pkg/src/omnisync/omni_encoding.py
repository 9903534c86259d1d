"""Omnidirectional positional encodings for cubemap tensors.

Two variants: the unit-sphere XYZ encoding (each pixel carries the 3D
direction of its center, components in [-1, 1], continuous across seams) and
the per-face UV baseline (2 channels in [0, 1], identical on every face,
discontinuous across seams). Both are input-independent and cached per
resolution.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import cube_geometry as cg


@dataclass(frozen=True)
class PositionalEncoding:
    kind: str  # "xyz" or "uv"
    data: np.ndarray  # (6, C, H, W); C = 3 for xyz, 2 for uv

    @property
    def channels(self) -> int:
        return self.data.shape[1]


@lru_cache(maxsize=32)
def xyz_encoding(face_size: int) -> PositionalEncoding:
    """Unit direction of every pixel center, shape (6, 3, H, H)."""
    if face_size < 1:
        raise ValueError(f"face_size must be >= 1, got {face_size}")
    data = np.empty((6, 3, face_size, face_size))
    for f in range(6):
        d = cg.face_direction_grid(cg.CubeFace(f), face_size)
        data[f] = np.moveaxis(d, -1, 0)
    data.setflags(write=False)
    return PositionalEncoding("xyz", data)


@lru_cache(maxsize=32)
def uv_encoding(face_size: int) -> PositionalEncoding:
    """Per-face (u, v) of every pixel center, identical on all faces."""
    if face_size < 1:
        raise ValueError(f"face_size must be >= 1, got {face_size}")
    u, v = cg.face_pixel_centers(face_size)
    one = np.stack([u, v], axis=0)
    data = np.broadcast_to(one[None], (6, 2, face_size, face_size)).copy()
    data.setflags(write=False)
    return PositionalEncoding("uv", data)


def seam_jump_stats(enc: PositionalEncoding) -> dict:
    """Max Euclidean jump between geometrically adjacent pixels across every
    cube edge, compared with the max within-face neighbor jump."""
    data = enc.data
    size = data.shape[2]
    seam_max = 0.0
    for (face, edge) in cg.FACE_ADJACENCY:
        (r, c), (nr, nc_), nface = cg.adjacent_edge_pixels(face, edge, size)
        a = data[int(face), :, r, c]
        b = data[int(nface), :, nr, nc_]
        seam_max = max(seam_max, float(np.linalg.norm(a - b, axis=-1).max()))
    dh = np.linalg.norm(np.diff(data, axis=3), axis=1)
    dv = np.linalg.norm(np.diff(data, axis=2), axis=1)
    interior_max = float(max(dh.max(), dv.max()))
    return {"seam_max": seam_max, "interior_max": interior_max,
            "ratio": seam_max / interior_max if interior_max > 0 else float("inf")}
