"""Velocity recovery from vorticity on the periodic torus.

Per Fourier mode, with ``k = k0 n``:

* 2D: ``u_n = i (k_2, -k_1) w_n / |k|^2``
* 3D: ``u_n = i k x w_n / |k|^2``

Both are exactly divergence free for any input. In 3D ``curl u = w`` only
holds when ``div w = 0``, so such inputs are rejected above a tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import (
    ComponentError,
    PeriodicGrid,
    SpectralError,
    SpectralField,
    curl,
    divergence,
    sobolev_norm,
    to_physical,
)

#: relative tolerance on ``||div w|| / ||w||_1`` for 3D inputs
DIVERGENCE_RTOL = 1e-10


class DivergenceError(SpectralError):
    """3D vorticity is not divergence free; ``.ratio`` holds the measured defect."""

    def __init__(self, ratio: float):
        super().__init__(f"vorticity divergence ratio {ratio:.3e} exceeds {DIVERGENCE_RTOL:g}")
        self.ratio = ratio


@dataclass(frozen=True)
class VelocityField:
    field: SpectralField
    divergence_free: bool = True

    @property
    def grid(self) -> PeriodicGrid:
        return self.field.grid

    def max_speed(self) -> float:
        """Max over grid nodes of ``|u|``."""
        phys = to_physical(self.field)
        return float(np.sqrt(np.max(np.sum(phys**2, axis=0))))


def _vorticity_components(omega: SpectralField) -> int:
    return 1 if omega.grid.dim == 2 else 3


def streamfunction(omega: SpectralField) -> SpectralField:
    """Solve ``lap psi = omega`` with zero mean."""
    return omega._new(-omega.coeffs * omega.grid.inv_k2)


def velocity_array(coeffs: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Biot-Savart on raw coefficient arrays (no validation)."""
    k = grid.wavevector
    s = 1j * grid.inv_k2
    if grid.dim == 2:
        w = coeffs[0] * s
        return np.stack([k[1] * w, -k[0] * w])
    w = coeffs * s
    return np.stack(
        [
            k[1] * w[2] - k[2] * w[1],
            k[2] * w[0] - k[0] * w[2],
            k[0] * w[1] - k[1] * w[0],
        ]
    )


def divergence_ratio(omega: SpectralField) -> float:
    """``||div w|| / ||w||_1``, a scale-free measure of the 3D divergence defect."""
    top = sobolev_norm(divergence(omega))
    bottom = sobolev_norm(omega, 1)
    return top / bottom if bottom > 0 else 0.0


def velocity_from_vorticity(omega: SpectralField, check: bool = True) -> VelocityField:
    """Zero-mean divergence-free velocity whose curl is ``omega``."""
    want = _vorticity_components(omega)
    if omega.components != want:
        raise ComponentError(f"{omega.grid.dim}D vorticity needs {want} components, got {omega.components}")
    if check and omega.grid.dim == 3:
        ratio = divergence_ratio(omega)
        if ratio > DIVERGENCE_RTOL:
            raise DivergenceError(ratio)
    return VelocityField(omega._new(velocity_array(omega.coeffs, omega.grid)), True)


def velocity_via_streamfunction(omega: SpectralField) -> VelocityField:
    """Same as :func:`velocity_from_vorticity`, routed through ``u = -curl psi``.

    Kept as an independent cross-check of the direct formula."""
    psi = streamfunction(omega)
    g = omega.grid
    if g.dim == 2:
        k = g.wavevector
        # 2D scalar psi: u = (-d2 psi, d1 psi)
        c = psi.coeffs[0]
        return VelocityField(psi._new(np.stack([-1j * k[1] * c, 1j * k[0] * c])), True)
    return VelocityField(-curl(psi), True)
