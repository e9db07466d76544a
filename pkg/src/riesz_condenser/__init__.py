"""Discretized minimum Riesz and Green energy problems for condensers with touching plates."""
from __future__ import annotations

import os

# RC_THREADS caps BLAS threads; it only takes effect if set before numpy loads
_threads = os.environ.get("RC_THREADS", "")
if _threads.isdigit() and int(_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

from .geometry import (BallExterior, BallInterior, DiscreteMeasure, HalfSpace, KernelParams, PointCloud,
                       SignedDiscreteMeasure, make_condenser)

__all__ = [
    "BallExterior", "BallInterior", "DiscreteMeasure", "HalfSpace", "KernelParams", "PointCloud",
    "SignedDiscreteMeasure", "make_condenser",
]
__version__ = "0.1.0"
