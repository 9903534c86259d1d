"""Analytic FLOPs for the toy denoiser at H in {16, 32, 64}, sync on/off.

Writes results/flops_study.{json,md}. The attention quadratic-term ratio is
asserted to be exactly 6 at every resolution; latency fields are
informational only.
"""

import argparse
from pathlib import Path

from omnisync.bench import run_flops_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--base-channels", type=int, default=16)
    ap.add_argument("--heads", type=int, default=2)
    ap.add_argument("--batch", type=int, default=1)
    ap.add_argument("--no-latency", action="store_true",
                    help="skip wall-clock measurements")
    ap.add_argument("--results", type=Path, default=Path("results"))
    args = ap.parse_args()

    report = run_flops_study(base_channels=args.base_channels, heads=args.heads,
                             batch=args.batch,
                             measure_latency=not args.no_latency)
    for h in (16, 32, 64):
        ratio = report.measurements[f"H{h}.attention_quadratic_ratio"]
        assert ratio == 6.0, f"H={h}: quadratic ratio {ratio} != 6"
        assert report.measurements[f"H{h}.conv_flops_equal"]
        assert report.measurements[f"H{h}.norm_flops_equal"]
    args.results.mkdir(parents=True, exist_ok=True)
    report.write(str(args.results / "flops_study"))
    print(f"wrote {args.results}/flops_study.json (config {report.config_hash})")
    for key in sorted(report.measurements):
        print(f"  {key}: {report.measurements[key]}")


if __name__ == "__main__":
    main()
