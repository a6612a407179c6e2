"""Structure-preserving finite elements for the rotating nonlinear Klein-Gordon equation."""
from .kernels import BACKEND
from .mesh import Domain, Mesh, build_uniform_mesh, reference_map
from .spaces import (DofMap, QuadratureRule, ScalarField2D, SpaceKind, build_dof_map, interpolate, local_basis,
                     postprocess_I2h, quadrature)

__version__ = "0.1.0"

__all__ = ["BACKEND", "Domain", "Mesh", "build_uniform_mesh", "reference_map", "DofMap", "QuadratureRule",
           "ScalarField2D", "SpaceKind", "build_dof_map", "interpolate", "local_basis", "postprocess_I2h",
           "quadrature"]
