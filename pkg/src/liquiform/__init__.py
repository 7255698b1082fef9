"""liquiform: radial liquify distortion synthesis and learned restoration.

The package distorts images with a single-parameter radial map, builds
paired datasets from the distortions, trains a two-stage adversarial
restoration model on them, and scores restorations with PSNR/SSIM.
Everything runs at desk scale on a CPU.
"""

import os as _os

# Worker-thread cap must land in the environment before numpy loads BLAS.
_threads = _os.environ.get("LIQUIFORM_THREADS")
if _threads and _threads != "0":
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

from .backend import backend_name  # noqa: E402,F401
