"""Lift RGB-D panoramas to colored point clouds and triangle meshes.

The cubemap lift sends every pixel to P = R_face (2u-1, -(2v-1), 1) * z,
the unnormalized face ray scaled by Z-depth, so a constant-z cubemap lands
on a cube surface rather than a sphere. The mesh triangulates each face
grid, stitches the 12 cube edges through the face adjacency table, and
welds the 8 corners with an averaged vertex so the closed mesh has the
topology of a sphere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import cube_geometry as cg
from .depth_tools import DepthCubemap, ZDEPTH, z_to_euclidean


@dataclass
class ScenePointCloud:
    positions: np.ndarray  # (N, 3)
    colors: np.ndarray     # (N, 3) in [0, 1]

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.colors = np.asarray(self.colors, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError(f"positions must be (N, 3), got {self.positions.shape}")
        if self.colors.shape != self.positions.shape:
            raise ValueError("colors must match positions in shape")
        if not np.isfinite(self.positions).all():
            raise ValueError("non-finite point positions")


@dataclass
class SceneMesh:
    vertices: np.ndarray   # (N, 3)
    colors: np.ndarray     # (N, 3)
    triangles: np.ndarray  # (M, 3) int vertex indices


def _face_rays(face_size: int) -> np.ndarray:
    """Unnormalized pixel-center rays for all faces, (6, H, W, 3)."""
    u, v = cg.face_pixel_centers(face_size)
    a = 2.0 * u - 1.0
    b = -(2.0 * v - 1.0)
    plane = np.stack([a, b, np.ones_like(a)], axis=-1)
    return np.einsum("fxy,hwy->fhwx", cg.FACE_FRAMES, plane)


def _lift_positions(depth: DepthCubemap) -> np.ndarray:
    """(6, H, W, 3) lifted positions, shared by point and mesh lifts."""
    return _face_rays(depth.grid.face_size) * depth.values[..., None]


def _check_lift_inputs(rgb: cg.CubemapGrid, depth: DepthCubemap) -> None:
    if depth.convention != ZDEPTH:
        raise ValueError("lift expects Z-depth input; convert Euclidean depth "
                         "with euclidean_to_z first")
    if rgb.face_size != depth.grid.face_size:
        raise ValueError(f"face size mismatch: rgb {rgb.face_size} vs "
                         f"depth {depth.grid.face_size}")
    if not (np.isfinite(depth.values).all() and (depth.values > 0).all()):
        raise ValueError("depth must be positive and finite")


def lift_cubemap(rgb: cg.CubemapGrid, depth: DepthCubemap) -> ScenePointCloud:
    """Project every cubemap pixel into 3D; colors copied per pixel."""
    _check_lift_inputs(rgb, depth)
    pos = _lift_positions(depth).reshape(-1, 3)
    col = rgb.faces.reshape(-1, rgb.faces.shape[-1])
    if col.shape[1] != 3:
        raise ValueError(f"rgb cubemap must have 3 channels, got {col.shape[1]}")
    return ScenePointCloud(pos, col)


def _grid_triangles(face_size: int) -> np.ndarray:
    """Outward-oriented 2-triangle quads over one face grid, indices local
    to the face (row-major pixel order)."""
    h = face_size
    i, j = np.meshgrid(np.arange(h - 1), np.arange(h - 1), indexing="ij")
    v00 = (i * h + j).ravel()
    v01 = v00 + 1
    v10 = v00 + h
    v11 = v10 + 1
    t1 = np.stack([v00, v10, v11], axis=1)
    t2 = np.stack([v00, v11, v01], axis=1)
    return np.concatenate([t1, t2], axis=0)


# Face triangles traverse bottom/left borders with increasing edge index,
# top/right with decreasing; a stitch strip must traverse the border the
# opposite way to keep the closed mesh consistently oriented.
_BORDER_FORWARD = {"bottom": True, "left": True, "top": False, "right": False}


def _stitch_triangles(face_size: int) -> np.ndarray:
    """Triangle strips closing the 12 cube edges."""
    h = face_size
    tris = []
    seen = set()
    for face in cg.CubeFace:
        for edge in ("top", "bottom", "left", "right"):
            nb_face, nb_edge, _ = cg.FACE_ADJACENCY[(face, edge)]
            key = frozenset([(int(face), edge), (int(nb_face), nb_edge)])
            if key in seen:
                continue
            seen.add(key)
            (r, c), (nr, nc), nf = cg.adjacent_edge_pixels(face, edge, h)
            a = int(face) * h * h + r * h + c
            b = int(nf) * h * h + nr * h + nc
            if _BORDER_FORWARD[edge]:
                for k in range(h - 1):
                    tris.append((a[k + 1], a[k], b[k]))
                    tris.append((a[k + 1], b[k], b[k + 1]))
            else:
                for k in range(h - 1):
                    tris.append((a[k], a[k + 1], b[k + 1]))
                    tris.append((a[k], b[k + 1], b[k]))
    return np.array(tris, dtype=np.int64)


def _cap_corners(triangles: np.ndarray, positions: np.ndarray,
                 z_flat: np.ndarray):
    """Weld each 3-edge boundary hole with an averaged vertex and a fan.

    Returns (fan_triangles, weld_positions, weld_z, weld_member_ids).
    """
    directed = set()
    for p, q, r in triangles:
        directed.update([(p, q), (q, r), (r, p)])
    boundary = [(p, q) for (p, q) in directed if (q, p) not in directed]
    succ = dict(boundary)
    fans, weld_pos, weld_z, members = [], [], [], []
    remaining = set(succ)
    base = positions.shape[0]
    while remaining:
        p0 = next(iter(remaining))
        cycle = []
        p = p0
        while True:
            q = succ[p]
            cycle.append((p, q))
            p = q
            if p == p0:
                break
        ids = [e[0] for e in cycle]
        remaining -= set(ids)
        w = base + len(weld_pos)
        weld_pos.append(positions[ids].mean(axis=0))
        weld_z.append(z_flat[ids].mean())
        members.append(ids)
        for p, q in cycle:
            fans.append((q, p, w))
    return (np.array(fans, dtype=np.int64), np.array(weld_pos),
            np.array(weld_z), members)


def mesh_from_cubemap(rgb: cg.CubemapGrid, depth: DepthCubemap,
                      edge_ratio_tau: float = 1.5) -> SceneMesh:
    """Closed cubemap mesh with occlusion-boundary culling.

    Triangles whose max/min Z-depth ratio exceeds edge_ratio_tau are
    dropped, so depth steps become open boundaries instead of stretched
    faces. The first 6*H*W vertices are exactly lift_cubemap's positions;
    8 averaged corner vertices follow them.
    """
    if not edge_ratio_tau > 1.0:
        raise ValueError(f"edge_ratio_tau must exceed 1, got {edge_ratio_tau}")
    _check_lift_inputs(rgb, depth)
    h = depth.grid.face_size
    pos = _lift_positions(depth).reshape(-1, 3)
    col = rgb.faces.reshape(-1, 3)
    z = depth.values.reshape(-1)

    grid = _grid_triangles(h)
    face_tris = np.concatenate([grid + f * h * h for f in range(6)], axis=0)
    tris = np.concatenate([face_tris, _stitch_triangles(h)], axis=0)
    fans, weld_pos, weld_z, members = _cap_corners(tris, pos, z)
    verts = np.concatenate([pos, weld_pos], axis=0)
    cols = np.concatenate([col, np.stack([col[m].mean(axis=0) for m in members])],
                          axis=0)
    zs = np.concatenate([z, weld_z])
    tris = np.concatenate([tris, fans], axis=0)

    tz = zs[tris]
    keep = tz.max(axis=1) / tz.min(axis=1) <= edge_ratio_tau
    tris = tris[keep]
    # drop degenerate slivers (never produced by well-posed depth, but the
    # contract promises none are emitted)
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    area2 = np.linalg.norm(np.cross(b - a, c - a), axis=1)
    return SceneMesh(verts, cols, tris[area2 > 2e-12])


def lift_erp(rgb: cg.ErpGrid, depth: cg.ErpGrid) -> ScenePointCloud:
    """Lift an equirectangular RGB-D pair; depth holds Euclidean distance."""
    if rgb.data.shape[:2] != depth.data.shape[:2]:
        raise ValueError(f"rgb/depth raster mismatch: {rgb.data.shape[:2]} "
                         f"vs {depth.data.shape[:2]}")
    h, w = rgb.data.shape[:2]
    lon = cg.erp_longitudes(w)
    lat = cg.erp_latitudes(h)
    dirs = cg.lonlat_to_direction(lon[None, :], lat[:, None])
    e = depth.data.reshape(h, w, -1)[..., 0]
    pos = (dirs * e[..., None]).reshape(-1, 3)
    col = rgb.data.reshape(-1, rgb.data.shape[-1])
    return ScenePointCloud(pos, col)


def density_uniformity(pc: ScenePointCloud, k: int, n_bands: int = 18) -> dict:
    """Spread statistics of a lifted point set.

    cv_nn is the coefficient of variation of each point's mean distance to
    its k nearest neighbors; band_profile is points per steradian in
    equal-latitude bands (south to north).
    """
    n = pc.positions.shape[0]
    if n < k + 1:
        raise ValueError(f"need at least k+1={k + 1} points, got {n}")
    spread = np.ptp(pc.positions, axis=0)
    if not (spread > 0).any():
        raise ValueError("all points identical; density is undefined")
    tree = cKDTree(pc.positions)
    dist, _ = tree.query(pc.positions, k=k + 1)
    mean_nn = dist[:, 1:].mean(axis=1)
    cv_nn = float(mean_nn.std() / mean_nn.mean())

    r = np.linalg.norm(pc.positions, axis=1)
    lat = np.arcsin(np.clip(pc.positions[:, 1] / np.maximum(r, 1e-300), -1, 1))
    edges = np.linspace(-np.pi / 2, np.pi / 2, n_bands + 1)
    counts, _ = np.histogram(lat, bins=edges)
    solid = 2.0 * np.pi * np.diff(np.sin(edges))
    return {"cv_nn": cv_nn, "band_profile": (counts / solid).tolist()}
