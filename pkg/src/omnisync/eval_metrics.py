"""Depth-accuracy metrics, seam-discontinuity reporting, and perspective
view evaluation.

depth_metrics follows the usual monocular-depth scoring conventions:
threshold accuracy at 1.25, absolute relative error, RMSE, and MAE, with
optional median-ratio scale alignment. seam_discontinuity quantifies how
sharply values jump across the 12 cube edges relative to typical interior
variation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cube_geometry as cg


@dataclass
class DepthMetrics:
    delta_125: float
    abs_rel: float
    rmse: float
    mae: float
    n_excluded: int = 0

    def as_dict(self) -> dict:
        return {"delta_125": self.delta_125, "abs_rel": self.abs_rel,
                "rmse": self.rmse, "mae": self.mae,
                "n_excluded": self.n_excluded}


def depth_metrics(pred: np.ndarray, ref: np.ndarray,
                  align: str = "none") -> DepthMetrics:
    """Score a predicted depth raster against a reference.

    Pixels with nonpositive reference depth are excluded and counted;
    align="median_scale" rescales pred by median(ref)/median(pred) first.
    """
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs ref {ref.shape}")
    if align not in ("none", "median_scale"):
        raise ValueError(f"unknown align mode {align!r}")
    valid = ref > 0
    n_excluded = int(valid.size - valid.sum())
    if not valid.any():
        raise ValueError("all reference pixels are nonpositive")
    p = pred[valid]
    r = ref[valid]
    if align == "median_scale":
        med_p = np.median(p)
        if med_p <= 0:
            raise ValueError("median_scale alignment needs positive "
                             "median predicted depth")
        p = p * (np.median(r) / med_p)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.maximum(p / r, r / p)
    diff = p - r
    return DepthMetrics(
        delta_125=float(np.mean(ratio < 1.25)),
        abs_rel=float(np.mean(np.abs(diff) / r)),
        rmse=float(np.sqrt(np.mean(diff * diff))),
        mae=float(np.mean(np.abs(diff))),
        n_excluded=n_excluded,
    )


@dataclass
class SeamReport:
    edge_max: dict = field(default_factory=dict)   # (face, edge) -> max jump
    edge_mean: dict = field(default_factory=dict)  # (face, edge) -> mean jump
    global_max: float = 0.0
    mean_jump: float = 0.0
    interior_mean: float = 0.0
    ratio: float = 0.0

    def as_dict(self) -> dict:
        return {"edge_max": {f"{cg.FACE_NAMES[f]}:{e}": v
                             for (f, e), v in self.edge_max.items()},
                "edge_mean": {f"{cg.FACE_NAMES[f]}:{e}": v
                              for (f, e), v in self.edge_mean.items()},
                "global_max": self.global_max, "mean_jump": self.mean_jump,
                "interior_mean": self.interior_mean, "ratio": self.ratio}


def _unique_edges():
    seen = set()
    for face in cg.CubeFace:
        for edge in ("top", "bottom", "left", "right"):
            nf, ne, _ = cg.FACE_ADJACENCY[(face, edge)]
            key = frozenset([(int(face), edge), (int(nf), ne)])
            if key in seen:
                continue
            seen.add(key)
            yield face, edge


def seam_discontinuity(x: np.ndarray) -> SeamReport:
    """Cross-seam first differences of a (6, C, H, W) or (6, H, W[, C])
    cubemap raster, one entry per cube edge.

    The ratio field compares the mean cross-seam jump against the mean
    interior first difference (both measured as per-pixel channel-vector
    norms), so values near 1 mean seams are as smooth as the interior.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        x = x[:, None]
    elif x.ndim == 4 and x.shape[-1] == 3 and x.shape[1] != 3:
        x = np.moveaxis(x, -1, 1)  # channels-last RGB stack
    if x.ndim != 4 or x.shape[0] != 6:
        raise ValueError(f"expected a 6-face cubemap raster, got {x.shape}")
    h = x.shape[-1]
    if x.shape[-2] != h or h < 2:
        raise ValueError(f"faces must be square with H >= 2, got {x.shape}")

    report = SeamReport()
    jumps = []
    for face, edge in _unique_edges():
        (r, c), (nr, nc), nf = cg.adjacent_edge_pixels(face, edge, h)
        a = x[int(face), :, r, c]
        b = x[int(nf), :, nr, nc]
        j = np.linalg.norm(a - b, axis=-1)
        report.edge_max[(int(face), edge)] = float(j.max())
        report.edge_mean[(int(face), edge)] = float(j.mean())
        jumps.append(j)
    jumps = np.concatenate(jumps)
    di = np.linalg.norm(np.diff(x, axis=-1), axis=1)
    dj = np.linalg.norm(np.diff(x, axis=-2), axis=1)
    interior = float(np.concatenate([di.ravel(), dj.ravel()]).mean())
    report.global_max = float(jumps.max())
    report.mean_jump = float(jumps.mean())
    report.interior_mean = interior
    report.ratio = float(report.mean_jump / interior) if interior > 0 else np.inf
    if interior == 0 and report.mean_jump == 0:
        report.ratio = 0.0
    return report


def sample_viewpoints(n_views: int, seed: int):
    """(yaw, pitch) pairs: yaw uniform on [-pi, pi), pitch uniform on
    [-pi/4, pi/4]."""
    rng = np.random.default_rng(seed)
    yaw = rng.uniform(-np.pi, np.pi, size=n_views)
    pitch = rng.uniform(-np.pi / 4, np.pi / 4, size=n_views)
    return list(zip(yaw.tolist(), pitch.tolist()))


def evaluate_rgbd_panorama(rgb: cg.CubemapGrid, depth_values: np.ndarray,
                           ref_depth_provider, n_views: int = 8,
                           seed: int = 0, view_size: int = 128,
                           align: str = "median_scale"):
    """Project an RGB-D cubemap into random perspective views and score
    each view's depth against a reference.

    ref_depth_provider(view_index, yaw, pitch, rgb_view) must return the
    reference depth raster for that view. Returns (mean DepthMetrics,
    per-view list).
    """
    vals = np.asarray(depth_values, dtype=np.float64)
    if vals.shape[:3] != (6, rgb.face_size, rgb.face_size):
        raise ValueError(f"depth values {vals.shape} do not match rgb faces "
                         f"({rgb.face_size})")
    depth_grid = cg.CubemapGrid(vals[..., None] if vals.ndim == 3 else vals)
    fov = np.pi / 2
    per_view = []
    for i, (yaw, pitch) in enumerate(sample_viewpoints(n_views, seed)):
        rgb_view = cg.perspective_view(rgb, yaw, pitch, fov, view_size)
        d_view = cg.perspective_view(depth_grid, yaw, pitch, fov, view_size)[..., 0]
        ref = ref_depth_provider(i, yaw, pitch, rgb_view)
        per_view.append(depth_metrics(d_view, np.asarray(ref), align=align))
    mean = DepthMetrics(
        delta_125=float(np.mean([m.delta_125 for m in per_view])),
        abs_rel=float(np.mean([m.abs_rel for m in per_view])),
        rmse=float(np.mean([m.rmse for m in per_view])),
        mae=float(np.mean([m.mae for m in per_view])),
        n_excluded=int(sum(m.n_excluded for m in per_view)),
    )
    return mean, per_view
