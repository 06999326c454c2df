"""Implicit upwind Crouzeix-Raviart scheme for barotropic compressible Navier-Stokes."""

from .mesh import Mesh, MeshError, build_structured_cube
from .scheme import Scheme, SchemeConfig, StepState, Variant, advance
from .thermo import PressureLaw, make_law

__all__ = ["Mesh", "MeshError", "build_structured_cube", "Scheme", "SchemeConfig", "StepState",
           "Variant", "advance", "PressureLaw", "make_law"]
__version__ = "0.1.0"
