"""Frozen-velocity vorticity solvers on the periodic torus."""
from .kernels import BACKEND
from .spectral import (
    ComponentError,
    GridMismatchError,
    PeriodicGrid,
    ShapeError,
    SpectralError,
    SpectralField,
    SymmetryError,
    curl,
    dealiased_product,
    divergence,
    gradient,
    laplacian,
    leray_project,
    random_field,
    sobolev_norm,
    to_physical,
    to_spectral,
)
from .biot_savart import (
    DivergenceError,
    VelocityField,
    streamfunction,
    velocity_from_vorticity,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ComponentError",
    "DivergenceError",
    "GridMismatchError",
    "PeriodicGrid",
    "ShapeError",
    "SpectralError",
    "SpectralField",
    "SymmetryError",
    "VelocityField",
    "curl",
    "dealiased_product",
    "divergence",
    "gradient",
    "laplacian",
    "leray_project",
    "random_field",
    "sobolev_norm",
    "streamfunction",
    "to_physical",
    "to_spectral",
    "velocity_from_vorticity",
]
