"""Seam-consistent cubemap processing toolkit.

Subpackages cover exact cube geometry and resampling, synchronized
multi-plane operators with explicit gradients, omnidirectional positional
encodings, Z-depth handling, a small masked RGB-D diffusion pipeline, 3D
scene lifting, and evaluation metrics.
"""

import os

# Honor the thread cap before numpy spins up its BLAS pools. Only effective
# when this package is imported before numpy, as the CLI entry point does.
_threads = os.environ.get("OMNISYNC_THREADS")
if _threads:
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"
