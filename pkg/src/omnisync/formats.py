"""On-disk formats: FRBLUD strips, per-face directories, 16-bit depth PNGs
with JSON sidecars, binary PLY point clouds, and OBJ meshes with vertex
colors.

In-memory RGB is float in [0, 1]; 8-bit PNGs hold round(v*255). Depth PNGs
hold uint16 codes with metric value = code*scale + offset, the mapping kept
in a sidecar next to the image. Saving what load() returned (passing the
loaded sidecar back in) reproduces the files byte for byte.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .cube_geometry import FACE_NAMES, CubemapGrid
from .depth_tools import DepthCubemap


# ---------------------------------------------------------------------------
# RGB cubemaps
# ---------------------------------------------------------------------------

def strip_from_faces(cube: CubemapGrid) -> np.ndarray:
    """(6, H, H, C) -> (H, 6*H, C) horizontal strip in FRBLUD order."""
    return np.concatenate(list(cube.faces), axis=1)


def faces_from_strip(strip: np.ndarray) -> CubemapGrid:
    if strip.ndim == 2:
        strip = strip[..., None]
    h, w = strip.shape[:2]
    if w != 6 * h:
        raise ValueError(f"strip width must be 6x height, got {h}x{w}")
    return CubemapGrid(np.stack(np.split(strip, 6, axis=1)))


def _to_u8(x: np.ndarray) -> np.ndarray:
    return np.round(np.clip(x, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_rgb_strip(path, cube: CubemapGrid) -> None:
    strip = _to_u8(strip_from_faces(cube))
    if strip.shape[2] == 1:
        strip = strip[..., 0]
    Image.fromarray(strip).save(Path(path), format="PNG")


def load_rgb_strip(path) -> CubemapGrid:
    arr = np.asarray(Image.open(Path(path)).convert("RGB"), dtype=float) / 255.0
    return faces_from_strip(arr)


def save_rgb_dir(dirpath, cube: CubemapGrid) -> None:
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    for f, name in enumerate(FACE_NAMES):
        img = _to_u8(cube.faces[f])
        if img.shape[2] == 1:
            img = img[..., 0]
        Image.fromarray(img).save(d / f"{name}.png", format="PNG")


def load_rgb_dir(dirpath) -> CubemapGrid:
    d = Path(dirpath)
    missing = [name for name in FACE_NAMES if not (d / f"{name}.png").exists()]
    if missing:
        raise FileNotFoundError(f"missing face images in {d}: {missing}")
    faces = [np.asarray(Image.open(d / f"{name}.png").convert("RGB"), dtype=float) / 255.0
             for name in FACE_NAMES]
    return CubemapGrid(np.stack(faces))


def load_rgb_any(path) -> CubemapGrid:
    p = Path(path)
    return load_rgb_dir(p) if p.is_dir() else load_rgb_strip(p)


# ---------------------------------------------------------------------------
# depth
# ---------------------------------------------------------------------------

def save_depth_strip(path, depth: DepthCubemap, scale: float | None = None,
                     offset: float | None = None) -> dict:
    """Write a 16-bit FRBLUD strip PNG and its JSON sidecar.

    metric = code*scale + offset. When scale/offset are omitted they are
    fitted to the value range; pass the sidecar values back in to re-save a
    loaded depth byte-identically. Returns the sidecar dict.
    """
    values = strip_from_faces(depth.grid)[..., 0]
    if offset is None:
        offset = float(values.min())
    if scale is None:
        span = float(values.max()) - offset
        scale = span / 65535.0 if span > 0 else 1.0
    codes = np.round((values - offset) / scale)
    if codes.min() < 0 or codes.max() > 65535:
        raise ValueError("depth values do not fit the given scale/offset")
    p = Path(path)
    Image.fromarray(codes.astype(np.uint16)).save(p, format="PNG")
    sidecar = {"convention": depth.convention, "offset": offset, "scale": scale}
    p.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")
    return sidecar


def load_depth_strip(path) -> tuple[DepthCubemap, dict]:
    p = Path(path)
    sidecar = json.loads(p.with_suffix(".json").read_text())
    img = Image.open(p)
    codes = np.asarray(img, dtype=np.float64)
    values = codes * sidecar["scale"] + sidecar["offset"]
    grid = faces_from_strip(values[..., None])
    return DepthCubemap(grid, sidecar["convention"]), sidecar


# ---------------------------------------------------------------------------
# tensor dictionaries (checkpoints): JSON header line + raw little-endian data
# ---------------------------------------------------------------------------

def save_tensor_dict(path, tensors: dict, meta: dict | None = None) -> None:
    """Write named arrays as one file: a JSON header line describing dtypes,
    shapes, and byte offsets, then the concatenated little-endian buffers.
    `meta` rides along in the header untouched."""
    entries = {}
    buffers = []
    offset = 0
    for name, arr in tensors.items():
        a = np.ascontiguousarray(arr)
        le = a.astype(a.dtype.newbyteorder("<"), copy=False)
        buf = le.tobytes()
        entries[name] = {"dtype": a.dtype.name, "shape": list(a.shape),
                         "offset": offset, "nbytes": len(buf)}
        buffers.append(buf)
        offset += len(buf)
    header = {"tensors": entries, "meta": meta or {}}
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for buf in buffers:
            f.write(buf)


def load_tensor_dict(path) -> tuple[dict, dict]:
    """Read a save_tensor_dict file -> (tensors, meta)."""
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        blob = f.read()
    tensors = {}
    for name, e in header["tensors"].items():
        dt = np.dtype(e["dtype"]).newbyteorder("<")
        raw = blob[e["offset"]:e["offset"] + e["nbytes"]]
        if len(raw) != e["nbytes"]:
            raise ValueError(f"{path}: truncated tensor {name!r}")
        tensors[name] = np.frombuffer(raw, dtype=dt).reshape(e["shape"]).astype(
            np.dtype(e["dtype"]), copy=True)
    return tensors, header.get("meta", {})


# ---------------------------------------------------------------------------
# point clouds (binary little-endian PLY)
# ---------------------------------------------------------------------------

def save_ply(path, positions: np.ndarray, colors: np.ndarray) -> None:
    """positions (N, 3) float, colors (N, 3) in [0, 1]."""
    n = positions.shape[0]
    if colors.shape != (n, 3):
        raise ValueError(f"colors shape {colors.shape} != ({n}, 3)")
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {n}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    )
    rec = np.empty(n, dtype=[("xyz", "<f4", 3), ("rgb", "u1", 3)])
    rec["xyz"] = positions.astype("<f4")
    rec["rgb"] = _to_u8(colors)
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(rec.tobytes())


def load_ply(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as f:
        line = f.readline().strip()
        if line != b"ply":
            raise ValueError(f"{path}: not a PLY file")
        n = None
        while True:
            line = f.readline()
            if not line:
                raise ValueError(f"{path}: truncated header")
            if line.startswith(b"element vertex"):
                n = int(line.split()[-1])
            if line.strip() == b"end_header":
                break
        if n is None:
            raise ValueError(f"{path}: no vertex element")
        rec = np.frombuffer(f.read(n * 15), dtype=[("xyz", "<f4", 3), ("rgb", "u1", 3)])
    return rec["xyz"].astype(np.float64), rec["rgb"].astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# meshes (OBJ with per-vertex color extension)
# ---------------------------------------------------------------------------

def save_obj(path, vertices: np.ndarray, colors: np.ndarray, triangles: np.ndarray) -> None:
    """Vertex lines carry the common 6-number color extension:
    v x y z r g b. Triangle indices are 0-based in memory, 1-based on disk."""
    lines = []
    for (x, y, z), (r, g, b) in zip(np.asarray(vertices, dtype=np.float64).tolist(),
                                    np.asarray(colors, dtype=np.float64).tolist()):
        lines.append(f"v {x!r} {y!r} {z!r} {r!r} {g!r} {b!r}")
    for a, b_, c in np.asarray(triangles).tolist():
        lines.append(f"f {a + 1} {b_ + 1} {c + 1}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_obj(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    verts, cols, tris = [], [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            nums = [float(t) for t in parts[1:]]
            verts.append(nums[:3])
            cols.append(nums[3:6] if len(nums) >= 6 else [1.0, 1.0, 1.0])
        elif parts[0] == "f":
            idx = [int(t.split("/")[0]) - 1 for t in parts[1:4]]
            tris.append(idx)
    return (np.asarray(verts, dtype=np.float64),
            np.asarray(cols, dtype=np.float64),
            np.asarray(tris, dtype=np.int64))
