"""Command-line entry point wiring the library end to end.

Subcommands: convert, view, posenc, depth, sync-check, lift, demo-train,
demo-sample, metrics, flops. Every run resolves a RunConfig (subcommand,
parameters, seed, package version). Commands whose primary output is a file
write ``<out>.run.json`` beside it (directory outputs get ``run.json``
inside); commands that print a JSON document embed the config under
``"run_config"``. Usage errors exit 2; runtime failures print a
machine-readable ``{"error": ...}`` object on stderr and exit 1.

All randomness flows from the single ``--seed`` recorded in the RunConfig,
so any run replays bit-identically. The env var OMNISYNC_THREADS caps
BLAS/OpenMP threads for the process. ``lift`` accepts either depth
convention and converts Euclidean input to Z-depth before lifting.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from . import bench
from . import cube_geometry as cg
from . import depth_tools as dt
from . import eval_metrics as em
from . import formats as fmt
from . import omni_encoding as oe
from . import scene_lift as sl
from . import sync_ops as so
from .diffusion import data as ddata
from .diffusion import sampling as dsamp
from .diffusion import schedule as dsched
from .diffusion import training as dtrain
from .diffusion.unet import ToyUNet


class UsageError(Exception):
    """Bad flag combination; reported like argparse errors (exit 2)."""


@dataclass
class RunConfig:
    """Resolved invocation record; round-trips through JSON bit-exactly."""

    subcommand: str
    params: dict
    seed: int
    version: str = __version__

    def to_json(self) -> str:
        doc = {"params": self.params, "seed": self.seed,
               "subcommand": self.subcommand, "version": self.version}
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "RunConfig":
        d = json.loads(s)
        return cls(d["subcommand"], d["params"], d["seed"], d["version"])

    def as_dict(self) -> dict:
        return json.loads(self.to_json())


_SKIP_PARAMS = ("func", "seed")


def _run_config(args, subcommand: str) -> RunConfig:
    params = {}
    for key, value in sorted(vars(args).items()):
        if key in _SKIP_PARAMS or callable(value):
            continue
        if isinstance(value, Path):
            value = str(value)
        if isinstance(value, (list, tuple)):
            value = [str(v) if isinstance(v, Path) else v for v in value]
        params[key] = value
    return RunConfig(subcommand, params, int(getattr(args, "seed", 0)))


def _write_run_config(out_path, rc: RunConfig) -> None:
    p = Path(out_path)
    target = p / "run.json" if p.is_dir() else Path(str(p) + ".run.json")
    target.write_text(rc.to_json() + "\n")


def _print_json(doc: dict) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True))


def _apply_thread_cap() -> None:
    raw = os.environ.get("OMNISYNC_THREADS")
    if not raw:
        return
    n = int(raw)
    if n < 1:
        raise ValueError(f"OMNISYNC_THREADS must be >= 1, got {raw!r}")
    import threadpoolctl
    threadpoolctl.threadpool_limits(limits=n)


# ---------------------------------------------------------------------------
# image helpers
# ---------------------------------------------------------------------------

def _load_erp(path) -> cg.ErpGrid:
    arr = np.asarray(Image.open(Path(path)).convert("RGB"), dtype=float) / 255.0
    return cg.ErpGrid(arr)


def _save_u8(path, img: np.ndarray) -> None:
    u8 = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    if u8.ndim == 3 and u8.shape[2] == 1:
        u8 = u8[..., 0]
    Image.fromarray(u8).save(Path(path), format="PNG")


def _load_depth_erp(path) -> cg.ErpGrid:
    p = Path(path)
    sidecar = json.loads(p.with_suffix(".json").read_text())
    codes = np.asarray(Image.open(p), dtype=np.float64)
    values = codes * sidecar["scale"] + sidecar["offset"]
    if sidecar.get("convention") != dt.EUCLIDEAN:
        raise ValueError("ERP depth must use the euclidean convention")
    return cg.ErpGrid(values[..., None])


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_convert(args) -> int:
    if args.erp is not None:
        if args.face_size is None:
            raise UsageError("--erp requires --face-size")
        cube = cg.erp_to_cubemap(_load_erp(args.erp), args.face_size, args.filter)
        fmt.save_rgb_strip(args.out, cube)
    else:
        if args.erp_height is None:
            raise UsageError("--strip requires --erp-height")
        cube = fmt.load_rgb_any(args.strip)
        erp = cg.cubemap_to_erp(cube, args.erp_height, args.filter)
        _save_u8(args.out, erp.data)
    _write_run_config(args.out, _run_config(args, "convert"))
    return 0


def cmd_view(args) -> int:
    cube = fmt.load_rgb_any(args.strip)
    img = cg.perspective_view(cube, args.yaw, args.pitch, args.fov,
                              args.size, args.filter)
    _save_u8(args.out, img)
    _write_run_config(args.out, _run_config(args, "view"))
    return 0


def cmd_posenc(args) -> int:
    enc = oe.xyz_encoding(args.face_size) if args.kind == "xyz" \
        else oe.uv_encoding(args.face_size)
    out = Path(args.out)
    if out.suffix == ".npz":
        np.savez(out, data=enc.data, kind=np.array(enc.kind))
    elif out.suffix == ".png":
        if enc.kind == "xyz":
            planes = (enc.data + 1.0) * 0.5
        else:
            zeros = np.zeros_like(enc.data[:, :1])
            planes = np.concatenate([enc.data, zeros], axis=1)
        fmt.save_rgb_strip(out, cg.CubemapGrid.from_planes(planes))
    else:
        raise UsageError(f"--out must end in .npz or .png, got {out.suffix!r}")
    _write_run_config(out, _run_config(args, "posenc"))
    _print_json({"kind": enc.kind, "channels": enc.channels,
                 "seam_stats": oe.seam_jump_stats(enc)})
    return 0


def cmd_depth(args) -> int:
    depth, _ = fmt.load_depth_strip(getattr(args, "in"))
    if args.to == dt.ZDEPTH and depth.convention == dt.EUCLIDEAN:
        depth = dt.euclidean_to_z(depth)
    elif args.to == dt.EUCLIDEAN and depth.convention == dt.ZDEPTH:
        depth = dt.z_to_euclidean(depth)
    sidecar = fmt.save_depth_strip(args.out, depth)
    _write_run_config(args.out, _run_config(args, "depth"))
    _print_json({"out": str(args.out), "sidecar": sidecar})
    return 0


_KERNELS = {
    "avg3": np.full((3, 3), 1.0 / 9.0),
    "gauss3": np.outer([0.25, 0.5, 0.25], [0.25, 0.5, 0.25]),
}


def _halo_max_err(cube: cg.CubemapGrid, x: np.ndarray, filter: str) -> float:
    """Max |cube_pad halo - direct resample at the halo pixel's direction|.

    The two paths share only the geometric convention, so agreement checks
    the padding tables against the sampler."""
    h = cube.face_size
    padded = so.cube_pad(x, 1, filter)
    ext = (np.arange(-1, h + 1) + 0.5) / h
    uu, vv = np.meshgrid(ext, ext)
    ring = np.zeros((h + 2, h + 2), dtype=bool)
    ring[[0, -1], :] = True
    ring[:, [0, -1]] = True
    worst = 0.0
    for f in range(6):
        dirs = cg.direction_of(cg.CubeFace(f), uu[ring], vv[ring])
        sampled = cg.sample_cubemap(cube, dirs, filter)
        got = padded[0, f][:, ring].T
        worst = max(worst, float(np.abs(got - sampled).max()))
    return worst


def cmd_sync_check(args) -> int:
    cube = fmt.load_rgb_any(args.strip)
    x = cube.to_planes()[None]
    c = x.shape[2]
    k2 = _KERNELS[args.kernel]
    weights = np.zeros((c, c, 3, 3))
    for ch in range(c):
        weights[ch, ch] = k2
    rep_s = em.seam_discontinuity(so.synced_conv2d(x, weights, filter=args.filter)[0])
    rep_u = em.seam_discontinuity(so.unsynced_conv2d(x, weights)[0])
    doc = {
        "kernel": args.kernel,
        "seam_jump_synced": rep_s.mean_jump,
        "seam_jump_unsynced": rep_u.mean_jump,
        "seam_ratio_synced": rep_s.ratio,
        "seam_ratio_unsynced": rep_u.ratio,
        "halo_max_err": _halo_max_err(cube, x, args.filter),
        "run_config": _run_config(args, "sync-check").as_dict(),
    }
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _print_json(doc)
    return 0


def cmd_lift(args) -> int:
    if args.points is None and args.mesh is None:
        raise UsageError("need at least one of --points/--mesh")
    if args.erp:
        if args.mesh is not None:
            raise UsageError("--mesh is only available for cubemap input")
        pc = sl.lift_erp(_load_erp(args.strip), _load_depth_erp(args.depth))
    else:
        rgb = fmt.load_rgb_any(args.strip)
        depth, _ = fmt.load_depth_strip(args.depth)
        if depth.convention == dt.EUCLIDEAN:
            depth = dt.euclidean_to_z(depth)
        pc = sl.lift_cubemap(rgb, depth)
        if args.mesh is not None:
            mesh = sl.mesh_from_cubemap(rgb, depth, args.tau)
            fmt.save_obj(args.mesh, mesh.vertices, mesh.colors, mesh.triangles)
            _write_run_config(args.mesh, _run_config(args, "lift"))
    if args.points is not None:
        fmt.save_ply(args.points, pc.positions, pc.colors)
        _write_run_config(args.points, _run_config(args, "lift"))
    doc = {"n_points": int(pc.positions.shape[0])}
    if args.density_json is not None:
        stats = sl.density_uniformity(pc, args.knn)
        Path(args.density_json).write_text(
            json.dumps(stats, indent=2, sort_keys=True) + "\n")
        doc["density"] = {"cv_nn": stats["cv_nn"]}
    _print_json(doc)
    return 0


def _demo_config_doc(cfg: dtrain.TrainConfig) -> dict:
    return {"H": cfg.face_size, "T": cfg.T, "steps": cfg.n_steps,
            "seed": cfg.seed,
            "sync": {"sa": cfg.sync_sa, "conv": cfg.sync_conv, "gn": cfg.sync_gn},
            "channels": cfg.base_channels}


def cmd_demo_train(args) -> int:
    cfg = dtrain.TrainConfig(
        face_size=args.face_size, batch_size=args.batch_size,
        n_steps=args.steps, lr=args.lr, seed=args.seed, T=args.T,
        base_channels=args.base_channels, heads=args.heads,
        sync_sa=not args.no_sync_sa, sync_conv=not args.no_sync_conv,
        sync_gn=not args.no_sync_gn, n_scenes=args.n_scenes,
        time_budget_s=args.time_budget_s)
    model, history = dtrain.train_toy(cfg)
    doc = _demo_config_doc(cfg)
    fmt.save_tensor_dict(args.out, model.params,
                         meta={"config": doc, "train_config": asdict(cfg)})
    Path(str(args.out) + ".json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _write_run_config(args.out, _run_config(args, "demo-train"))
    losses = history.losses
    _print_json({"checkpoint": str(args.out),
                 "steps_run": len(losses),
                 "loss_first10": float(np.mean(losses[:10])),
                 "loss_last10": float(np.mean(losses[-10:])),
                 "seconds": history.seconds,
                 "stopped_early": history.stopped_early})
    return 0


def cmd_demo_sample(args) -> int:
    tensors, meta = fmt.load_tensor_dict(args.checkpoint)
    cfg = dtrain.TrainConfig(**meta["train_config"])
    model = ToyUNet(cfg.unet_config(), seed=0)
    if set(tensors) != set(model.params):
        raise ValueError("checkpoint parameter names do not match the "
                         "architecture in its header")
    model.params = {k: tensors[k].astype(model.params[k].dtype)
                    for k in model.params}
    rng = np.random.default_rng(args.seed)
    scenes = [ddata.make_scene(rng, cfg.face_size) for _ in range(args.batch)]
    batch = ddata.encode_scenes(scenes, [dt.S_INFERENCE] * len(scenes),
                                cfg.condition_face)
    schedule = dsched.make_schedule(cfg.T)
    out_c, out_d = dsamp.ddim_sample(model, batch.x0_c, batch.x0_d, batch.mask,
                                     schedule, steps=args.steps, rng=rng)
    rgb, depth = dsamp.decode_sample(out_c, out_d, batch.norms)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(args.batch):
        tag = f"_{i}" if args.batch > 1 else ""
        rgb_path = outdir / f"sample{tag}_rgb.png"
        depth_path = outdir / f"sample{tag}_depth.png"
        fmt.save_rgb_strip(rgb_path, cg.CubemapGrid(rgb[i]))
        fmt.save_depth_strip(depth_path,
                             dt.DepthCubemap.from_values(depth[i], dt.ZDEPTH))
        written += [str(rgb_path), str(depth_path)]
    _write_run_config(outdir, _run_config(args, "demo-sample"))
    _print_json({"outputs": written})
    return 0


def cmd_metrics(args) -> int:
    if args.seam is not None:
        cube = fmt.load_rgb_any(args.seam)
        rep = em.seam_discontinuity(cube.to_planes())
        _print_json({"seam": rep.as_dict(),
                     "run_config": _run_config(args, "metrics").as_dict()})
        return 0
    if not args.pred and not args.ref:
        raise UsageError("need --pred/--ref file lists or --seam")
    if len(args.pred) != len(args.ref):
        raise UsageError("--pred and --ref need the same number of files")
    missing = [str(p) for p in [*args.pred, *args.ref] if not Path(p).exists()]
    if missing:
        err = FileNotFoundError(f"missing input files: {', '.join(missing)}")
        err.extra = {"missing": missing}
        raise err
    pairs = []
    metrics = []
    for pred_path, ref_path in zip(args.pred, args.ref):
        pred, _ = fmt.load_depth_strip(pred_path)
        ref, _ = fmt.load_depth_strip(ref_path)
        m = em.depth_metrics(pred.values, ref.values, align=args.align)
        metrics.append(m)
        pairs.append({"pred": str(pred_path), "ref": str(ref_path),
                      "metrics": m.as_dict()})
    mean = {key: float(np.mean([m.as_dict()[key] for m in metrics]))
            for key in metrics[0].as_dict()}
    _print_json({"pairs": pairs, "mean": mean, "align": args.align,
                 "run_config": _run_config(args, "metrics").as_dict()})
    return 0


def cmd_flops(args) -> int:
    cfg = dtrain.TrainConfig(base_channels=args.base_channels,
                             heads=args.heads).unet_config()
    synced = bench.unet_flops(cfg, args.face_size, args.batch,
                              synced={"sa": True, "conv": True, "gn": True})
    unsynced = bench.unet_flops(cfg, args.face_size, args.batch,
                                synced={"sa": False, "conv": False, "gn": False})
    ratio = (synced["totals"]["attention_quadratic"]
             / unsynced["totals"]["attention_quadratic"])
    _print_json({"face_size": args.face_size,
                 "synced": synced, "unsynced": unsynced,
                 "attention_quadratic_ratio": ratio,
                 "run_config": _run_config(args, "flops").as_dict()})
    return 0


# ---------------------------------------------------------------------------
# parser / dispatch
# ---------------------------------------------------------------------------

def build_parser():
    import argparse

    parser = argparse.ArgumentParser(
        prog="omnisync",
        description="Cubemap panoramas: conversions, seam-synchronized "
                    "operators, depth tools, 3D lifting, and a toy denoiser.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=0,
                       help="seed recorded in the run config")
        return p

    p = add("convert", cmd_convert,
            help="convert between an ERP image and a FRBLUD cubemap strip")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--erp", type=Path, help="input ERP image (H x 2H)")
    g.add_argument("--strip", type=Path,
                   help="input cubemap strip (or per-face directory)")
    p.add_argument("--face-size", type=int, help="cube face resolution (ERP input)")
    p.add_argument("--erp-height", type=int, help="ERP height (strip input)")
    p.add_argument("--filter", choices=("bilinear", "nearest"), default="bilinear")
    p.add_argument("--out", type=Path, required=True)

    p = add("view", cmd_view, help="render a perspective view from a cubemap")
    p.add_argument("--strip", type=Path, required=True)
    p.add_argument("--yaw", type=float, default=0.0, help="radians, + looks left")
    p.add_argument("--pitch", type=float, default=0.0, help="radians, + looks up")
    p.add_argument("--fov", type=float, default=np.pi / 2, help="radians")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--filter", choices=("bilinear", "nearest"), default="bilinear")
    p.add_argument("--out", type=Path, required=True)

    p = add("posenc", cmd_posenc,
            help="write a positional-encoding cubemap and its seam stats")
    p.add_argument("--face-size", type=int, required=True)
    p.add_argument("--kind", choices=("xyz", "uv"), default="xyz")
    p.add_argument("--out", type=Path, required=True,
                   help=".npz for raw data, .png for a visualization strip")

    p = add("depth", cmd_depth, help="convert a depth strip between conventions")
    p.add_argument("--in", type=Path, required=True, dest="in",
                   help="16-bit depth strip with JSON sidecar")
    p.add_argument("--to", choices=(dt.ZDEPTH, dt.EUCLIDEAN), required=True)
    p.add_argument("--out", type=Path, required=True)

    p = add("sync-check", cmd_sync_check,
            help="compare seam jumps of cube-padded vs zero-padded filtering")
    p.add_argument("--strip", type=Path, required=True)
    p.add_argument("--kernel", choices=sorted(_KERNELS), default="avg3")
    p.add_argument("--filter", choices=("bilinear", "nearest"), default="bilinear")
    p.add_argument("--out", type=Path, help="also write the report JSON here")

    p = add("lift", cmd_lift, help="lift RGB-D to a point cloud or mesh")
    p.add_argument("--strip", type=Path, required=True, help="RGB input")
    p.add_argument("--depth", type=Path, required=True,
                   help="16-bit depth with JSON sidecar; euclidean input is "
                        "converted to z-depth automatically")
    p.add_argument("--erp", action="store_true",
                   help="treat inputs as ERP rasters instead of cube strips")
    p.add_argument("--points", type=Path, help="write a PLY point cloud here")
    p.add_argument("--mesh", type=Path, help="write an OBJ mesh here")
    p.add_argument("--tau", type=float, default=1.5,
                   help="max/min depth ratio above which triangles are culled")
    p.add_argument("--density-json", type=Path,
                   help="write point-density uniformity stats here")
    p.add_argument("--knn", type=int, default=8,
                   help="neighbor count for the density stats")

    p = add("demo-train", cmd_demo_train, help="train the toy denoiser")
    p.add_argument("--out", type=Path, required=True, help="checkpoint path")
    p.add_argument("--steps", type=int, default=120)
    p.add_argument("--face-size", type=int, default=32)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--T", type=int, default=1000)
    p.add_argument("--base-channels", type=int, default=16)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--n-scenes", type=int, default=32)
    p.add_argument("--time-budget-s", type=float, default=None)
    p.add_argument("--no-sync-sa", action="store_true")
    p.add_argument("--no-sync-conv", action="store_true")
    p.add_argument("--no-sync-gn", action="store_true")

    p = add("demo-sample", cmd_demo_sample,
            help="sample the toy denoiser from a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--batch", type=int, default=1)

    p = add("metrics", cmd_metrics,
            help="depth metrics over file pairs, or a seam report")
    p.add_argument("--pred", type=Path, nargs="+", default=[])
    p.add_argument("--ref", type=Path, nargs="+", default=[])
    p.add_argument("--align", choices=("none", "median_scale"),
                   default="median_scale")
    p.add_argument("--seam", type=Path,
                   help="RGB strip to score for seam discontinuity instead")

    p = add("flops", cmd_flops, help="analytic FLOPs for the toy denoiser")
    p.add_argument("--face-size", type=int, default=32)
    p.add_argument("--base-channels", type=int, default=16)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--batch", type=int, default=1)

    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        _apply_thread_cap()
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        doc = {"error": {"type": type(e).__name__, "message": str(e),
                         **getattr(e, "extra", {})}}
        print(json.dumps(doc, sort_keys=True), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
