"""Translation- and rotation-invariant bispectral image features.

Flat 2-D patches are projected onto the sphere, expanded in spherical
harmonics, and summarised by the SO(3) bispectrum, a cubic spectral
invariant that survives in-plane rotation and translation of the image
content.  The classical cyclic-group bispectrum and its generalisation
to arbitrary finite groups are included as the conceptual (and testable)
backbone, along with an end-to-end rotated-digit classification harness.
"""

from . import cyclic, finitegroup, invariants, pipeline, sht, so3
from .invariants import BispectrumFeatures, bispectrum, feature_vector
from .sht import ImagePatch, SphereCoeffs, build_projection_plan, project_image
from .so3 import CGTable, EulerRotation, build_cg_table, rotate_coeffs

__version__ = "0.1.0"

__all__ = [
    "cyclic",
    "finitegroup",
    "sht",
    "so3",
    "invariants",
    "pipeline",
    "ImagePatch",
    "SphereCoeffs",
    "build_projection_plan",
    "project_image",
    "EulerRotation",
    "CGTable",
    "build_cg_table",
    "rotate_coeffs",
    "BispectrumFeatures",
    "bispectrum",
    "feature_vector",
    "__version__",
]
