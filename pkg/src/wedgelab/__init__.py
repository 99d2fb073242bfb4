"""Numerical toolkit for unions of d-planes: exterior algebra, Grassmannian
projection sums, harmonic extension on annuli, mesh measures and deformation
experiments."""

from .errors import (HypothesisViolation, NotSimpleError, NumericalToleranceError,
                     OutsideHypothesisWarning, PreconditionError, WedgeLabError)
from .exterior import Frame, Multivector, blade_of_frame, is_simple, span_of_blade, wedge
from .grassmann import (PlaneFamily, maximize_projection_sum, orthogonal_family,
                        principal_angles, projection_sum, rotated_family, xi_classify)

__version__ = "0.1.0"

__all__ = [
    "Frame", "HypothesisViolation", "Multivector", "NotSimpleError", "NumericalToleranceError",
    "OutsideHypothesisWarning", "PlaneFamily", "PreconditionError", "WedgeLabError",
    "blade_of_frame", "is_simple", "maximize_projection_sum", "orthogonal_family",
    "principal_angles", "projection_sum", "rotated_family", "span_of_blade", "wedge",
    "xi_classify",
]
