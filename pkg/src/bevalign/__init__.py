"""BEV sensor-fusion kernels: LiDAR-guided camera view transform, spatial
fusion, ego-motion calibration and temporal deformable alignment, plus a
synthetic-scene harness that verifies all of it against ground truth.
"""

from .kernels import backend as kernel_backend

__version__ = "0.1.0"
__all__ = ["kernel_backend", "__version__"]
