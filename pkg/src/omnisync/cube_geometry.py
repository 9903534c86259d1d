"""Exact cube-map geometry: face frames, direction <-> (face, u, v) mapping,
edge adjacency, and resampling between equirectangular, cubemap, and
perspective rasters.

Conventions (fixed for the whole package):

* Right-handed world axes, +Y up. Face normals: front +Z, right +X,
  back -Z, left -X, up +Y, down -Y. Face storage order is always
  ``[front, right, back, left, up, down]`` ("FRBLUD").
* Each face has an orthonormal frame with columns (right, up, normal) and
  determinant +1. Viewed from the cube center, u grows rightward and v grows
  downward, hence the sign flip on v in `direction_of`.
* Pixel centers sit at u = (j + 0.5) / W, v = (i + 0.5) / H. In continuous
  pixel coordinates (`px = u * W - 0.5`) centers are integers, so a 90-degree
  view aligned with a face reproduces that face exactly under nearest
  sampling.
* ERP: column j maps to longitude lon = (j + 0.5) * (2*pi / W_e) - pi, row i
  to latitude lat = pi/2 - (i + 0.5) * (pi / H_e); width is twice the height.
  A direction maps to (lon, lat) via lon = atan2(x, z), lat = asin(y), so the
  front face sits at lon = 0.

Sampling algorithms are written as fixed elementwise formulas (documented in
the docstrings) so that an independent scalar reimplementation reproduces
them bit-for-bit; several tests rely on that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

ONE_BELOW_1 = np.nextafter(1.0, 0.0)


class CubeFace(IntEnum):
    FRONT = 0
    RIGHT = 1
    BACK = 2
    LEFT = 3
    UP = 4
    DOWN = 5


FACE_NAMES = ("front", "right", "back", "left", "up", "down")


@dataclass(frozen=True)
class FaceUV:
    """Continuous face coordinates; pixel centers at ((j+0.5)/W, (i+0.5)/H)."""

    face: CubeFace
    u: float
    v: float


def _frame(right, up, normal) -> np.ndarray:
    return np.stack([np.asarray(right, float), np.asarray(up, float),
                     np.asarray(normal, float)], axis=1)


# Columns (right, up, normal); all entries in {0, +-1} so frame products are
# exact in floating point.
FACE_FRAMES = np.stack([
    _frame((1, 0, 0), (0, 1, 0), (0, 0, 1)),     # front
    _frame((0, 0, -1), (0, 1, 0), (1, 0, 0)),    # right
    _frame((-1, 0, 0), (0, 1, 0), (0, 0, -1)),   # back
    _frame((0, 0, 1), (0, 1, 0), (-1, 0, 0)),    # left
    _frame((1, 0, 0), (0, 0, -1), (0, 1, 0)),    # up
    _frame((1, 0, 0), (0, 0, 1), (0, -1, 0)),    # down
])

FACE_NORMALS = FACE_FRAMES[:, :, 2].copy()

EDGE_NAMES = ("top", "bottom", "left", "right")

# (face, edge) -> (neighbor face, neighbor edge, quarter-turn rotation in
# degrees). The rotation r acts on (du, dv) index-space displacements as
# r=90: (du, dv) -> (-dv, du), r=180: -> (-du, -dv), r=270: -> (dv, -du);
# it carries a step along the source edge onto a step along the neighbor
# edge and the outward edge normal onto the neighbor's inward normal.
# Derived once from FACE_FRAMES; verified against the geometry by tests.
FACE_ADJACENCY = {
    (CubeFace.FRONT, "top"): (CubeFace.UP, "bottom", 0),
    (CubeFace.FRONT, "bottom"): (CubeFace.DOWN, "top", 0),
    (CubeFace.FRONT, "left"): (CubeFace.LEFT, "right", 0),
    (CubeFace.FRONT, "right"): (CubeFace.RIGHT, "left", 0),
    (CubeFace.RIGHT, "top"): (CubeFace.UP, "right", 270),
    (CubeFace.RIGHT, "bottom"): (CubeFace.DOWN, "right", 90),
    (CubeFace.RIGHT, "left"): (CubeFace.FRONT, "right", 0),
    (CubeFace.RIGHT, "right"): (CubeFace.BACK, "left", 0),
    (CubeFace.BACK, "top"): (CubeFace.UP, "top", 180),
    (CubeFace.BACK, "bottom"): (CubeFace.DOWN, "bottom", 180),
    (CubeFace.BACK, "left"): (CubeFace.RIGHT, "right", 0),
    (CubeFace.BACK, "right"): (CubeFace.LEFT, "left", 0),
    (CubeFace.LEFT, "top"): (CubeFace.UP, "left", 90),
    (CubeFace.LEFT, "bottom"): (CubeFace.DOWN, "left", 270),
    (CubeFace.LEFT, "left"): (CubeFace.BACK, "right", 0),
    (CubeFace.LEFT, "right"): (CubeFace.FRONT, "left", 0),
    (CubeFace.UP, "top"): (CubeFace.BACK, "top", 180),
    (CubeFace.UP, "bottom"): (CubeFace.FRONT, "top", 0),
    (CubeFace.UP, "left"): (CubeFace.LEFT, "top", 270),
    (CubeFace.UP, "right"): (CubeFace.RIGHT, "top", 90),
    (CubeFace.DOWN, "top"): (CubeFace.FRONT, "bottom", 0),
    (CubeFace.DOWN, "bottom"): (CubeFace.BACK, "bottom", 180),
    (CubeFace.DOWN, "left"): (CubeFace.LEFT, "bottom", 90),
    (CubeFace.DOWN, "right"): (CubeFace.RIGHT, "bottom", 270),
}

_ROT_MATS = {
    0: np.array([[1, 0], [0, 1]]),
    90: np.array([[0, -1], [1, 0]]),
    180: np.array([[-1, 0], [0, -1]]),
    270: np.array([[0, 1], [-1, 0]]),
}

_EDGE_TANGENT = {"top": (1, 0), "bottom": (1, 0), "left": (0, 1), "right": (0, 1)}


def edge_reversed(face: CubeFace, edge: str) -> bool:
    """Whether the canonical edge parameter flips when crossing to the
    neighbor (canonical parameter: j for top/bottom edges, i for left/right).
    """
    _, nedge, rot = FACE_ADJACENCY[(face, edge)]
    mapped = _ROT_MATS[rot] @ np.array(_EDGE_TANGENT[edge])
    return not np.array_equal(mapped, np.array(_EDGE_TANGENT[nedge]))


def edge_pixel_indices(edge: str, k: np.ndarray | int, size: int):
    """(row, col) of the k-th boundary pixel along `edge` of a size x size
    face, k running in the canonical direction."""
    if edge == "top":
        return np.zeros_like(np.asarray(k)), k
    if edge == "bottom":
        return np.full_like(np.asarray(k), size - 1), k
    if edge == "left":
        return k, np.zeros_like(np.asarray(k))
    if edge == "right":
        return k, np.full_like(np.asarray(k), size - 1)
    raise ValueError(f"unknown edge {edge!r}")


def adjacent_edge_pixels(face: CubeFace, edge: str, size: int):
    """Pair each boundary pixel on (face, edge) with its geometric neighbor
    across the seam.

    Returns ((row, col), (nrow, ncol), neighbor_face) where index k of the
    source edge corresponds to index k (or size-1-k when the seam reverses
    orientation) of the neighbor edge.
    """
    nface, nedge, _ = FACE_ADJACENCY[(face, edge)]
    k = np.arange(size)
    nk = k[::-1] if edge_reversed(face, edge) else k
    return edge_pixel_indices(edge, k, size), edge_pixel_indices(nedge, nk, size), nface


# ---------------------------------------------------------------------------
# direction <-> (face, u, v)
# ---------------------------------------------------------------------------

def direction_of(face: CubeFace, u, v) -> np.ndarray:
    """Unit direction of continuous face coordinates (u, v).

    Computes normalize(R_face @ (2u-1, -(2v-1), 1)). u, v may be scalars or
    equally-shaped arrays; values outside [0, 1) are legal and address the
    planar extension of the face (used by cube padding). Returns an array of
    shape (..., 3).

    Fixed formula: a = 2*u - 1; b = -(2*v - 1); (x, y, z) = a*right + b*up
    + normal (exact: frame entries are 0 or +-1); n = sqrt(x*x + y*y + z*z);
    result = (x/n, y/n, z/n).
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    a = 2.0 * u - 1.0
    b = -(2.0 * v - 1.0)
    one = np.ones_like(a)
    R = FACE_FRAMES[int(face)]
    x = R[0, 0] * a + R[0, 1] * b + R[0, 2] * one
    y = R[1, 0] * a + R[1, 1] * b + R[1, 2] * one
    z = R[2, 0] * a + R[2, 1] * b + R[2, 2] * one
    n = np.sqrt(x * x + y * y + z * z)
    return np.stack([x / n, y / n, z / n], axis=-1)


def face_of(d: np.ndarray):
    """Map unit directions to (face, u, v).

    The face is the one whose signed normal component equals the largest
    absolute component, ties broken by the fixed FRBLUD order. u and v follow
    u = (local_x / local_z + 1) * 0.5, v = (-local_y / local_z + 1) * 0.5
    with local = R_face^T d (exact), then are clamped into [0, 1) at the
    upper end so the result is always a representable face coordinate.

    Accepts shape (3,) or (..., 3); returns (face, u, v) as scalars for a
    single direction, else (faces, u, v) arrays.
    """
    d = np.asarray(d, dtype=float)
    single = d.ndim == 1
    pts = d.reshape(-1, 3)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    m = np.maximum(np.abs(x), np.maximum(np.abs(y), np.abs(z)))
    signed = np.stack([z, x, -z, -x, y, -y], axis=0)
    faces = np.argmax(signed == m, axis=0)
    lx = np.empty_like(x)
    ly = np.empty_like(x)
    lz = np.empty_like(x)
    for f in range(6):
        sel = faces == f
        if not np.any(sel):
            continue
        R = FACE_FRAMES[f]
        px, py, pz = x[sel], y[sel], z[sel]
        lx[sel] = R[0, 0] * px + R[1, 0] * py + R[2, 0] * pz
        ly[sel] = R[0, 1] * px + R[1, 1] * py + R[2, 1] * pz
        lz[sel] = R[0, 2] * px + R[1, 2] * py + R[2, 2] * pz
    u = (lx / lz + 1.0) * 0.5
    v = (-ly / lz + 1.0) * 0.5
    u = np.minimum(u, ONE_BELOW_1)
    v = np.minimum(v, ONE_BELOW_1)
    if single:
        return CubeFace(int(faces[0])), float(u[0]), float(v[0])
    shape = d.shape[:-1]
    return faces.reshape(shape), u.reshape(shape), v.reshape(shape)


def face_pixel_centers(face_size: int):
    """(u, v) grids of pixel centers for one face, each (H, H)."""
    c = (np.arange(face_size) + 0.5) / face_size
    u = np.broadcast_to(c[None, :], (face_size, face_size))
    v = np.broadcast_to(c[:, None], (face_size, face_size))
    return u, v


def face_direction_grid(face: CubeFace, face_size: int) -> np.ndarray:
    """Unit directions of all pixel centers of a face, shape (H, H, 3)."""
    u, v = face_pixel_centers(face_size)
    return direction_of(face, u, v)


# ---------------------------------------------------------------------------
# raster containers
# ---------------------------------------------------------------------------

@dataclass
class CubemapGrid:
    """Six square rasters in FRBLUD order, shape (6, H, H, C)."""

    faces: np.ndarray

    def __post_init__(self):
        self.faces = np.asarray(self.faces)
        if self.faces.ndim != 4 or self.faces.shape[0] != 6:
            raise ValueError(f"faces must be (6, H, W, C), got {self.faces.shape}")
        if self.faces.shape[1] != self.faces.shape[2]:
            raise ValueError(f"faces must be square, got {self.faces.shape[1:3]}")
        if self.faces.shape[1] == 0:
            raise ValueError("empty raster")

    @property
    def face_size(self) -> int:
        return self.faces.shape[1]

    @property
    def channels(self) -> int:
        return self.faces.shape[3]

    def face(self, f: CubeFace) -> np.ndarray:
        return self.faces[int(f)]

    @classmethod
    def constant(cls, face_size: int, channels: int, value: float = 0.0) -> "CubemapGrid":
        return cls(np.full((6, face_size, face_size, channels), value, dtype=float))

    def to_planes(self) -> np.ndarray:
        """(6, C, H, W) view used by the neural operators."""
        return np.ascontiguousarray(np.moveaxis(self.faces, 3, 1))

    @classmethod
    def from_planes(cls, planes: np.ndarray) -> "CubemapGrid":
        planes = np.asarray(planes)
        if planes.ndim != 4 or planes.shape[0] != 6:
            raise ValueError(f"planes must be (6, C, H, W), got {planes.shape}")
        return cls(np.ascontiguousarray(np.moveaxis(planes, 1, 3)))


@dataclass
class ErpGrid:
    """Equirectangular raster, shape (H_e, 2*H_e, C)."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError(f"data must be (H, W, C), got {self.data.shape}")
        h, w = self.data.shape[:2]
        if h == 0 or w == 0:
            raise ValueError("empty raster")
        if w != 2 * h:
            raise ValueError(f"ERP width must be twice the height, got {h}x{w}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def erp_longitudes(width: int, j=None) -> np.ndarray:
    j = np.arange(width) if j is None else np.asarray(j, dtype=float)
    return (j + 0.5) * (2.0 * math.pi / width) - math.pi


def erp_latitudes(height: int, i=None) -> np.ndarray:
    i = np.arange(height) if i is None else np.asarray(i, dtype=float)
    return 0.5 * math.pi - (i + 0.5) * (math.pi / height)


def lonlat_to_direction(lon, lat) -> np.ndarray:
    lon, lat = np.broadcast_arrays(np.asarray(lon, dtype=float),
                                   np.asarray(lat, dtype=float))
    cl = np.cos(lat)
    return np.stack([cl * np.sin(lon), np.sin(lat), cl * np.cos(lon)], axis=-1)


def direction_to_lonlat(d: np.ndarray):
    d = np.asarray(d, dtype=float)
    lon = np.arctan2(d[..., 0], d[..., 2])
    lat = np.arcsin(np.clip(d[..., 1], -1.0, 1.0))
    return lon, lat


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _check_filter(filter: str):
    if filter not in ("nearest", "bilinear"):
        raise ValueError(f"filter must be 'nearest' or 'bilinear', got {filter!r}")


def _gather_bilinear_clamped(img: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Bilinear sample of (H, W, C) at continuous pixel coords, borders
    clamped. Weights come from the unclamped fractional parts; only the
    gather indices are clamped.

    value = (1-fy) * ((1-fx)*v00 + fx*v01) + fy * ((1-fx)*v10 + fx*v11)
    """
    h, w = img.shape[:2]
    x0 = np.floor(px)
    y0 = np.floor(py)
    fx = px - x0
    fy = py - y0
    x0i = np.clip(x0.astype(np.int64), 0, w - 1)
    x1i = np.clip(x0i + 1, 0, w - 1)
    y0i = np.clip(y0.astype(np.int64), 0, h - 1)
    y1i = np.clip(y0i + 1, 0, h - 1)
    fx = fx[..., None]
    fy = fy[..., None]
    v00 = img[y0i, x0i]
    v01 = img[y0i, x1i]
    v10 = img[y1i, x0i]
    v11 = img[y1i, x1i]
    return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11)


def _gather_nearest_clamped(img: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    xi = np.clip(np.floor(px + 0.5).astype(np.int64), 0, w - 1)
    yi = np.clip(np.floor(py + 0.5).astype(np.int64), 0, h - 1)
    return img[yi, xi]


def sample_cubemap(cube: CubemapGrid, dirs: np.ndarray, filter: str = "bilinear") -> np.ndarray:
    """Sample a cubemap at unit directions (..., 3) -> (..., C).

    Each direction resolves to a face via `face_of`, then that face is
    sampled at continuous pixel coordinates px = u*W - 0.5, py = v*H - 0.5
    with borders clamped (no cross-face blending).
    """
    _check_filter(filter)
    dirs = np.asarray(dirs, dtype=float)
    shape = dirs.shape[:-1]
    faces, u, v = face_of(dirs.reshape(-1, 3))
    size = cube.face_size
    px = u * size - 0.5
    py = v * size - 0.5
    out = np.empty((u.shape[0], cube.channels), dtype=cube.faces.dtype)
    for f in range(6):
        sel = faces == f
        if not np.any(sel):
            continue
        if filter == "bilinear":
            out[sel] = _gather_bilinear_clamped(cube.faces[f], px[sel], py[sel])
        else:
            out[sel] = _gather_nearest_clamped(cube.faces[f], px[sel], py[sel])
    return out.reshape(shape + (cube.channels,))


def sample_erp(erp: ErpGrid, lon: np.ndarray, lat: np.ndarray, filter: str = "bilinear") -> np.ndarray:
    """Sample an ERP raster at (lon, lat); longitude wraps, latitude clamps.

    Continuous pixel coords: px = (lon + pi) * (W_e / (2*pi)) - 0.5,
    py = (pi/2 - lat) * (H_e / pi) - 0.5.
    """
    _check_filter(filter)
    h, w = erp.height, erp.width
    px = (np.asarray(lon, dtype=float) + math.pi) * (w / (2.0 * math.pi)) - 0.5
    py = (0.5 * math.pi - np.asarray(lat, dtype=float)) * (h / math.pi) - 0.5
    img = erp.data
    if filter == "nearest":
        xi = np.mod(np.floor(px + 0.5).astype(np.int64), w)
        yi = np.clip(np.floor(py + 0.5).astype(np.int64), 0, h - 1)
        return img[yi, xi]
    x0 = np.floor(px)
    y0 = np.floor(py)
    fx = (px - x0)[..., None]
    fy = (py - y0)[..., None]
    x0i = np.mod(x0.astype(np.int64), w)
    x1i = np.mod(x0i + 1, w)
    y0i = np.clip(y0.astype(np.int64), 0, h - 1)
    y1i = np.clip(y0i + 1, 0, h - 1)
    v00 = img[y0i, x0i]
    v01 = img[y0i, x1i]
    v10 = img[y1i, x0i]
    v11 = img[y1i, x1i]
    return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11)


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------

def erp_to_cubemap(erp: ErpGrid, face_size: int, filter: str = "bilinear") -> CubemapGrid:
    """Resample an ERP panorama onto the six cube faces."""
    _check_filter(filter)
    if face_size < 1:
        raise ValueError(f"face_size must be >= 1, got {face_size}")
    faces = np.empty((6, face_size, face_size, erp.channels), dtype=erp.data.dtype)
    for f in range(6):
        dirs = face_direction_grid(CubeFace(f), face_size)
        lon, lat = direction_to_lonlat(dirs)
        faces[f] = sample_erp(erp, lon, lat, filter)
    return CubemapGrid(faces)


def cubemap_to_erp(cube: CubemapGrid, erp_height: int, filter: str = "bilinear") -> ErpGrid:
    """Resample a cubemap onto an ERP grid of the given height."""
    _check_filter(filter)
    if erp_height < 1:
        raise ValueError(f"erp_height must be >= 1, got {erp_height}")
    lon = erp_longitudes(2 * erp_height)
    lat = erp_latitudes(erp_height)
    dirs = lonlat_to_direction(lon[None, :], lat[:, None])
    return ErpGrid(sample_cubemap(cube, dirs, filter))


def _rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def camera_rotation(yaw: float, pitch: float) -> np.ndarray:
    """World-from-camera rotation; yaw spins about +Y (pi/2 faces right),
    positive pitch looks up."""
    return _rot_y(yaw) @ _rot_x(-pitch)


def perspective_view(cube: CubemapGrid, yaw: float, pitch: float, fov: float,
                     out_size: int, filter: str = "nearest") -> np.ndarray:
    """Pinhole projection of the cubemap, returned as (out_size, out_size, C).

    yaw=0, pitch=0, fov=pi/2 with nearest filtering reproduces the front face
    bit-for-bit.
    """
    if not 0.0 < fov < math.pi:
        raise ValueError(f"fov must be in (0, pi), got {fov}")
    _check_filter(filter)
    t = math.tan(0.5 * fov)
    c = (np.arange(out_size) + 0.5) / out_size
    a = (2.0 * c - 1.0) * t
    b = -(2.0 * c - 1.0) * t
    R = camera_rotation(yaw, pitch)
    cam = np.empty((out_size, out_size, 3))
    cam[..., 0] = a[None, :]
    cam[..., 1] = b[:, None]
    cam[..., 2] = 1.0
    dirs = cam @ R.T
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return sample_cubemap(cube, dirs, filter)


def rotate_yaw_90(cube: CubemapGrid) -> CubemapGrid:
    """Rotate the cubemap by a 90-degree yaw (content at RIGHT moves to
    FRONT); UP and DOWN rotate in-plane. A pure index permutation."""
    f = cube.faces
    return CubemapGrid(np.stack([
        f[CubeFace.RIGHT],
        f[CubeFace.BACK],
        f[CubeFace.LEFT],
        f[CubeFace.FRONT],
        np.rot90(f[CubeFace.UP], k=-1, axes=(0, 1)),
        np.rot90(f[CubeFace.DOWN], k=1, axes=(0, 1)),
    ]))
