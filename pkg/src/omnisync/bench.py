"""Benchmark studies: FLOPs scaling, the sync ablation, and report I/O.

Reports carry the hash of the generating config and basic machine info so
any number in a results file can be traced to the exact settings that
produced it. Analytic quantities are bit-reproducible; latency fields are
informational only and never gate tests.
"""

from __future__ import annotations

import hashlib
import json
import platform
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import sync_ops
from .diffusion import data as ddata
from .diffusion.sampling import ddim_sample, decode_sample
from .diffusion.training import TrainConfig, train_toy
from .diffusion.unet import ToyUNet, ToyUNetConfig, unet_layer_specs
from .eval_metrics import seam_discontinuity


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def machine_info() -> dict:
    return {"platform": platform.platform(),
            "python": platform.python_version(),
            "numpy": np.__version__}


@dataclass
class BenchReport:
    name: str
    config: dict
    measurements: dict
    notes: list = field(default_factory=list)
    config_hash: str = ""
    machine: dict = field(default_factory=machine_info)

    def __post_init__(self):
        if not self.config_hash:
            self.config_hash = config_hash(self.config)

    def as_dict(self) -> dict:
        return asdict(self)

    def write(self, path_prefix: str) -> None:
        """Write <prefix>.json and a small <prefix>.md summary."""
        with open(path_prefix + ".json", "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        lines = [f"# {self.name}", "",
                 f"config hash: `{self.config_hash}`", ""]
        for key, val in sorted(self.measurements.items()):
            lines.append(f"- **{key}**: {val}")
        if self.notes:
            lines.append("")
            lines.extend(f"> {n}" for n in self.notes)
        with open(path_prefix + ".md", "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _time_op(fn, repeats: int = 3) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def unet_flops(config: ToyUNetConfig, face_size: int, batch: int = 1,
               synced: dict | None = None) -> dict:
    """estimate_flops merged across the denoiser's two resolutions."""
    totals = {"conv": 0, "attention_quadratic": 0, "attention_linear": 0,
              "norm": 0, "padding": 0}
    headline = 0
    for spec, res in unet_layer_specs(config, face_size):
        r = sync_ops.estimate_flops(spec, res, res, batch=batch, synced=synced)
        for key in totals:
            totals[key] += r["totals"][key]
        headline += r["headline_flops"]
    return {"totals": totals, "headline_flops": headline,
            "padding_flops": totals["padding"]}


def run_flops_study(face_sizes=(16, 32, 64), base_channels: int = 16,
                    heads: int = 2, batch: int = 1,
                    measure_latency: bool = True) -> BenchReport:
    """Analytic FLOPs for the toy denoiser across resolutions, sync on/off,
    plus informational attention latency measurements."""
    config = {"face_sizes": list(face_sizes), "base_channels": base_channels,
              "heads": heads, "batch": batch}
    ucfg = ToyUNetConfig(base_channels=base_channels, heads=heads)
    all_on = {"sa": True, "conv": True, "gn": True}
    all_off = {"sa": False, "conv": False, "gn": False}
    meas = {}
    notes = ["latency numbers are hardware-dependent and informational only"]
    for h in face_sizes:
        on = unet_flops(ucfg, h, batch, all_on)
        off = unet_flops(ucfg, h, batch, all_off)
        meas[f"H{h}.flops_synced"] = on["headline_flops"]
        meas[f"H{h}.flops_unsynced"] = off["headline_flops"]
        meas[f"H{h}.attention_quadratic_ratio"] = (
            on["totals"]["attention_quadratic"]
            / off["totals"]["attention_quadratic"])
        meas[f"H{h}.conv_flops_equal"] = \
            on["totals"]["conv"] == off["totals"]["conv"]
        meas[f"H{h}.norm_flops_equal"] = \
            on["totals"]["norm"] == off["totals"]["norm"]
        meas[f"H{h}.padding_flops"] = on["padding_flops"]
        if measure_latency:
            c1 = 2 * base_channels
            half = h // 2
            x = np.random.default_rng(0).standard_normal(
                (batch, 6, c1, half, half)).astype(np.float32)
            meas[f"H{h}.latency_attention_synced_s"] = _time_op(
                lambda: sync_ops.synced_attention(x, x, x, heads))
            meas[f"H{h}.latency_attention_unsynced_s"] = _time_op(
                lambda: sync_ops.unsynced_attention(x, x, x, heads))
    return BenchReport("flops_study", config, meas, notes)


ABLATION_VARIANTS = {
    "all_sync": dict(sync_sa=True, sync_conv=True, sync_gn=True),
    "no_sync_sa": dict(sync_sa=False, sync_conv=True, sync_gn=True),
    "no_sync_conv": dict(sync_sa=True, sync_conv=False, sync_gn=True),
    "no_sync_gn": dict(sync_sa=True, sync_conv=True, sync_gn=False),
    "no_sync": dict(sync_sa=False, sync_conv=False, sync_gn=False),
}


def sample_seam_metric(model: ToyUNet, face_size: int, n_samples: int,
                       seed: int, T: int = 1000, steps: int = 50,
                       batch: int = 4) -> float:
    """Mean decoded-RGB seam/interior discontinuity ratio over fresh
    conditioned samples from a trained model."""
    from .diffusion.schedule import make_schedule
    sched = make_schedule(T)
    rng = np.random.default_rng(seed)
    ratios = []
    done = 0
    while done < n_samples:
        b = min(batch, n_samples - done)
        bat = ddata.make_batch(rng, b, face_size, s=None)
        out_c, out_d = ddim_sample(model, bat.x0_c, bat.x0_d, bat.mask,
                                   sched, steps=steps, rng=rng)
        rgb, _ = decode_sample(out_c, out_d, bat.norms)
        for i in range(b):
            ratios.append(seam_discontinuity(rgb[i]).ratio)
        done += b
    return float(np.mean(ratios))


def run_ablation_study(base: TrainConfig, n_samples: int = 8,
                       sample_seed: int = 1234,
                       variants=None) -> BenchReport:
    """Train sync-flag variants under one shared seed/budget and compare
    seam discontinuity of their samples plus final training loss."""
    names = list(variants or ABLATION_VARIANTS)
    config = {"train": asdict(base), "n_samples": n_samples,
              "sample_seed": sample_seed, "variants": names}
    meas = {}
    notes = []
    for name in names:
        flags = ABLATION_VARIANTS[name]
        cfg = TrainConfig(**{**asdict(base), **flags})
        model, hist = train_toy(cfg)
        seam = sample_seam_metric(model, cfg.face_size, n_samples,
                                  sample_seed, T=cfg.T)
        meas[f"{name}.seam_ratio"] = seam
        meas[f"{name}.train_loss_first10"] = float(np.mean(hist.losses[:10]))
        meas[f"{name}.train_loss_last10"] = float(np.mean(hist.losses[-10:]))
        meas[f"{name}.steps_run"] = len(hist.losses)
        meas[f"{name}.seconds"] = hist.seconds
        if hist.stopped_early:
            notes.append(f"{name}: stopped early at the time budget")
    if "all_sync" in names and "no_sync" in names:
        lo = meas["all_sync.seam_ratio"]
        hi = meas["no_sync.seam_ratio"]
        meas["all_sync_beats_no_sync"] = bool(lo < hi)
        meas["separation"] = float(hi - lo)
        if not lo < hi:
            meas["conclusive"] = False
            notes.append("budget too small: all-sync did not separate from "
                         "no-sync; rerun with more steps")
        else:
            meas["conclusive"] = True
    return BenchReport("ablation_study", config, meas, notes)
