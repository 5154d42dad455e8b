"""Multi-valued vortex wavefunctions on periodic grids.

Filament geometry and potential kernels, construction of multi-valued states
with nodal filaments, the nonlinear nu-transformed Schrodinger evolution,
Madelung diagnostics, identity residual checks and radiated-power estimates.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .errors import MVortexError
from .geometry import FilamentCurve, Link, SeifertMesh, circle_curve, disk_mesh, line_filament, trefoil_curve
from .grid import ComplexGrid3, GridSpec, RealGrid3, VectorGrid3
from .wavefunction import GaussianEnvelope, MultiValuedState, PhysicalConstants, build_initial_state

__all__ = [
    "ComplexGrid3",
    "FilamentCurve",
    "GaussianEnvelope",
    "GridSpec",
    "Link",
    "MVortexError",
    "MultiValuedState",
    "PhysicalConstants",
    "RealGrid3",
    "SeifertMesh",
    "VectorGrid3",
    "build_initial_state",
    "circle_curve",
    "disk_mesh",
    "line_filament",
    "trefoil_curve",
]
