"""Finite-element toolkit for quasi-linear Robin systems driven by the p-Laplacian."""

from .mesh import Mesh, build_interval_mesh, build_rect_mesh, write_vtk
from .assembly import (FeField, RobinOperatorSpec, energy, apply_operator,
                       apply_interior, apply_boundary, residual, jacobian, load)

__version__ = "0.1.0"
