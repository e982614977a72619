"""Spinopelvic measurement engine, evaluation harness, and review service."""

__version__ = "0.1.0"

from .errors import SpinometryError  # noqa: F401
from .geometry import (  # noqa: F401
    AnatomicFrame,
    Keypoint,
    KeypointSet,
    LandmarkName,
    SpinopelvicParameters,
    View,
    compute_parameters,
    infer_anatomic_frame,
    parameter_difference,
)
