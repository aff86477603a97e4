"""Training-free hierarchical semantic fields over Gaussian-splat scenes."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .types import Camera, GaussianPrimitive, GaussianScene, MaskFeatureMatrix, MaskObservation

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "Camera",
    "GaussianPrimitive",
    "GaussianScene",
    "MaskFeatureMatrix",
    "MaskObservation",
    "__version__",
]
