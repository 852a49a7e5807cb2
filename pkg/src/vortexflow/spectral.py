"""Fourier representation of periodic fields on the cube (0, L]^d.

A field is stored as complex coefficients ``f_n`` of

    f(x) = sum_n f_n exp(i k0 n.x),    k0 = 2 pi / L,

truncated to indices in ``[-K/2, K/2 - 1]`` per axis. Internally the
coefficients use numpy's real-FFT half-spectrum layout (last axis holds
``n_d >= 0`` only); the other half follows from ``f_{-n} = conj(f_n)``.
The zero mode and the unmatched Nyquist index ``-K/2`` are always zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from . import kernels

#: relative tolerance for Hermitian-symmetry checks on construction
SYMMETRY_RTOL = 1e-12


class SpectralError(ValueError):
    """Base class for invalid spectral inputs."""


class SymmetryError(SpectralError):
    """Coefficients violate ``f_{-n} = conj(f_n)``."""


class ShapeError(SpectralError):
    """An array does not match the grid layout."""


class ComponentError(SpectralError):
    """An operator received the wrong number of components."""


class GridMismatchError(SpectralError):
    """Two fields live on different grids."""


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform collocation grid with ``K`` points (and modes) per axis."""

    dim: int
    K: int
    L: float = 2.0 * np.pi

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.K < 4 or self.K % 2:
            raise ValueError(f"K must be an even integer >= 4, got {self.K}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        object.__setattr__(self, "L", float(self.L))

    @property
    def k0(self) -> float:
        return 2.0 * np.pi / self.L

    @property
    def physical_shape(self) -> tuple[int, ...]:
        return (self.K,) * self.dim

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.K,) * (self.dim - 1) + (self.K // 2 + 1,)

    @property
    def axes(self) -> tuple[int, ...]:
        """Spatial axes of a ``(c, ...)`` stacked array."""
        return tuple(range(1, self.dim + 1))

    @cached_property
    def n(self) -> np.ndarray:
        """Integer index vectors, shape ``(dim, *spectral_shape)``."""
        full = np.rint(np.fft.fftfreq(self.K) * self.K).astype(np.int64)
        half = np.arange(self.K // 2 + 1, dtype=np.int64)
        axes = [full] * (self.dim - 1) + [half]
        grids = np.meshgrid(*axes, indexing="ij")
        out = np.stack(grids)
        out.flags.writeable = False
        return out

    @cached_property
    def wavevector(self) -> np.ndarray:
        k = self.k0 * self.n
        k.flags.writeable = False
        return k

    @cached_property
    def n2(self) -> np.ndarray:
        return np.sum(self.n**2, axis=0)

    @cached_property
    def k2(self) -> np.ndarray:
        return self.k0**2 * self.n2

    @cached_property
    def inv_k2(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            out = np.where(self.n2 > 0, 1.0 / np.where(self.n2 > 0, self.k2, 1.0), 0.0)
        return out

    @cached_property
    def nyquist(self) -> np.ndarray:
        return np.any(np.abs(self.n) == self.K // 2, axis=0)

    @cached_property
    def keep(self) -> np.ndarray:
        """Modes that may carry energy: everything but the zero mode and Nyquist."""
        return ~self.nyquist & (self.n2 > 0)

    @cached_property
    def dealias(self) -> np.ndarray:
        """Two-thirds rule: retain ``3|n_j| < K`` on every axis."""
        return np.all(3 * np.abs(self.n) < self.K, axis=0) & self.keep

    @cached_property
    def weights(self) -> np.ndarray:
        """Multiplicity of each stored mode within the full lattice."""
        w = np.full(self.spectral_shape, 2.0)
        w[..., 0] = 1.0
        return w

    def coordinates(self) -> tuple[np.ndarray, ...]:
        x = np.arange(self.K) * (self.L / self.K)
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def index_of(self, n: Sequence[int]) -> tuple[tuple[int, ...], bool]:
        """Storage index of wavevector ``n`` and whether it must be conjugated.

        Returns ``(None, False)`` for indices that are always zero (Nyquist)."""
        n = tuple(int(v) for v in n)
        if len(n) != self.dim:
            raise ShapeError(f"index {n} has {len(n)} components, grid dim is {self.dim}")
        half = self.K // 2
        if any(abs(v) > half for v in n):
            raise ShapeError(f"index {n} outside the lattice [-{half}, {half - 1}]")
        if any(abs(v) == half for v in n):
            return None, False
        conj = n[-1] < 0
        if conj:
            n = tuple(-v for v in n)
        return tuple(v % self.K for v in n[:-1]) + (n[-1],), conj


def _plane_reflect(plane: np.ndarray, dim: int) -> np.ndarray:
    """Map values at ``n'`` to ``-n'`` over the trailing ``dim - 1`` axes."""
    axes = tuple(range(plane.ndim - (dim - 1), plane.ndim))
    return np.roll(np.flip(plane, axis=axes), 1, axis=axes)


def _hermitian_defect(coeffs: np.ndarray, dim: int) -> float:
    plane = coeffs[..., 0]
    return float(np.max(np.abs(plane - np.conj(_plane_reflect(plane, dim))), initial=0.0))


def _symmetrize(coeffs: np.ndarray, dim: int) -> None:
    """Make the ``n_d = 0`` plane exactly Hermitian, in place."""
    plane = coeffs[..., 0]
    coeffs[..., 0] = 0.5 * (plane + np.conj(_plane_reflect(plane, dim)))


class SpectralField:
    """Immutable real periodic field with ``c`` components.

    ``coeffs`` has shape ``(c, *grid.spectral_shape)`` and is read-only.
    ``mean`` carries any constant part discarded on construction.
    """

    __slots__ = ("grid", "coeffs", "mean", "_series")

    def __init__(self, grid: PeriodicGrid, coeffs, mean=None, *, check: bool = True):
        arr = np.array(coeffs, dtype=np.complex128)
        if arr.shape == grid.spectral_shape:
            arr = arr[None]
        if arr.ndim != grid.dim + 1 or arr.shape[1:] != grid.spectral_shape:
            raise ShapeError(
                f"coefficient array of shape {arr.shape} does not fit spectral layout "
                f"(c, {', '.join(map(str, grid.spectral_shape))})"
            )
        if check:
            scale = float(np.max(np.abs(arr), initial=0.0))
            defect = _hermitian_defect(arr, grid.dim)
            if defect > SYMMETRY_RTOL * max(scale, 1e-300) and defect > 0:
                raise SymmetryError(f"reality symmetry violated by {defect:.3e} (scale {scale:.3e})")
            _symmetrize(arr, grid.dim)
        arr[:, ~grid.keep] = 0.0
        arr.flags.writeable = False
        self.grid = grid
        self.coeffs = arr
        c = arr.shape[0]
        self.mean = np.zeros(c) if mean is None else np.broadcast_to(np.asarray(mean, float), (c,)).copy()
        self._series = None

    # construction helpers -------------------------------------------------
    @classmethod
    def zeros(cls, grid: PeriodicGrid, components: int = 1) -> "SpectralField":
        return cls(grid, np.zeros((components,) + grid.spectral_shape), check=False)

    @classmethod
    def from_modes(cls, grid: PeriodicGrid, modes: Mapping, components: int | None = None) -> "SpectralField":
        """Build from ``{n: value}``; values at ``-n`` are implied when absent.

        When both ``n`` and ``-n`` are given they must be conjugate."""
        if components is None:
            first = next(iter(modes.values()), 0.0)
            components = int(np.size(first))
        arr = np.zeros((components,) + grid.spectral_shape, dtype=np.complex128)
        seen: dict[tuple[int, ...], np.ndarray] = {}
        for n, value in modes.items():
            n = tuple(int(v) for v in n)
            value = np.broadcast_to(np.asarray(value, dtype=np.complex128), (components,))
            if not any(n):
                raise SpectralError("the zero mode carries the mean and cannot be set")
            idx, conj = grid.index_of(n)
            if idx is None:
                continue
            stored = np.conj(value) if conj else value
            mirror = tuple(-v for v in n)
            if mirror in seen and not np.allclose(seen[mirror], np.conj(value), rtol=SYMMETRY_RTOL, atol=0):
                raise SymmetryError(f"coefficients at {n} and {mirror} are not conjugate")
            seen[n] = value
            arr[(slice(None),) + idx] = stored
            if n[-1] == 0:
                midx, _ = grid.index_of(mirror)
                arr[(slice(None),) + midx] = np.conj(value)
        return cls(grid, arr, check=False)

    def _new(self, coeffs, mean=None) -> "SpectralField":
        out = SpectralField.__new__(SpectralField)
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if not coeffs.flags.writeable or coeffs.base is not None:
            coeffs = coeffs.copy()
        coeffs[:, ~self.grid.keep] = 0.0
        coeffs.flags.writeable = False
        out.grid = self.grid
        out.coeffs = coeffs
        out.mean = np.zeros(coeffs.shape[0]) if mean is None else np.asarray(mean, float)
        out._series = None
        return out

    # accessors ------------------------------------------------------------
    @property
    def components(self) -> int:
        return self.coeffs.shape[0]

    def component(self, r: int) -> "SpectralField":
        return self._new(self.coeffs[r : r + 1], self.mean[r : r + 1])

    def coeff(self, n: Sequence[int]) -> np.ndarray:
        """Coefficient vector (length ``c``) at wavevector ``n``."""
        idx, conj = self.grid.index_of(n)
        if idx is None:
            return np.zeros(self.components, dtype=np.complex128)
        value = self.coeffs[(slice(None),) + idx]
        return np.conj(value) if conj else value.copy()

    def full_coeffs(self) -> np.ndarray:
        """Coefficients on the whole lattice in FFT ordering, shape ``(c, K, ..., K)``."""
        K, d = self.grid.K, self.grid.dim
        full = np.zeros((self.components,) + (K,) * d, dtype=np.complex128)
        h = K // 2
        full[..., : h + 1] = self.coeffs
        for m in range(h + 1, K):
            full[..., m] = np.conj(_plane_reflect(self.coeffs[..., K - m], d))
        return full

    # arithmetic -----------------------------------------------------------
    def _check(self, other: "SpectralField") -> None:
        if not isinstance(other, SpectralField):
            raise TypeError(f"expected SpectralField, got {type(other).__name__}")
        if other.grid != self.grid:
            raise GridMismatchError(f"{self.grid} vs {other.grid}")
        if other.components != self.components:
            raise ComponentError(f"{self.components} vs {other.components} components")

    def __add__(self, other):
        self._check(other)
        return self._new(self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return self._new(self.coeffs - other.coeffs)

    def __neg__(self):
        return self._new(-self.coeffs)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField) or np.iscomplexobj(scalar):
            return NotImplemented
        return self._new(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __repr__(self) -> str:
        return f"SpectralField(dim={self.grid.dim}, K={self.grid.K}, L={self.grid.L:g}, c={self.components})"

    # evaluation -----------------------------------------------------------
    def norm(self, m: int = 0) -> float:
        return sobolev_norm(self, m)

    def series(self) -> tuple[np.ndarray, np.ndarray]:
        """Nonzero stored modes ``(M, d)`` and multiplicity-weighted coefficients ``(M, c)``."""
        if self._series is None:
            nz = np.any(self.coeffs != 0, axis=0)
            modes = self.grid.n[:, nz].T.copy()
            coeffs = (self.coeffs[:, nz] * self.grid.weights[nz]).T.copy()
            self._series = (modes, coeffs)
        return self._series

    def evaluate(self, points, with_grad: bool = False):
        """Values ``(P, c)`` at arbitrary points ``(P, d)``; optionally the gradient ``(P, c, d)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if pts.shape[1] != self.grid.dim:
            raise ShapeError(f"points must have {self.grid.dim} columns, got {pts.shape}")
        modes, coeffs = self.series()
        if modes.shape[0] == 0:
            vals = np.zeros((pts.shape[0], self.components)) + self.mean
            grad = np.zeros((pts.shape[0], self.components, self.grid.dim))
            return (vals, grad) if with_grad else vals
        vals, grad = kernels.eval_series(pts, modes, coeffs, self.grid.L, with_grad)
        vals = vals + self.mean
        return (vals, grad) if with_grad else vals


# transforms ----------------------------------------------------------------
def _to_physical_array(coeffs: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    scale = grid.K**grid.dim
    return np.fft.irfftn(coeffs, s=grid.physical_shape, axes=grid.axes) * scale


def _to_spectral_array(samples: np.ndarray, grid: PeriodicGrid) -> tuple[np.ndarray, np.ndarray]:
    scale = grid.K**grid.dim
    coeffs = np.fft.rfftn(samples, axes=grid.axes) / scale
    mean = coeffs[(slice(None),) + (0,) * grid.dim].real.copy()
    _symmetrize(coeffs, grid.dim)
    coeffs[:, ~grid.keep] = 0.0
    return coeffs, mean


def to_physical(field: SpectralField) -> np.ndarray:
    """Samples at ``x_j = j L / K``, shape ``(c, K, ..., K)``; the stored mean is not added."""
    defect = _hermitian_defect(field.coeffs, field.grid.dim)
    scale = float(np.max(np.abs(field.coeffs), initial=0.0))
    if defect > SYMMETRY_RTOL * scale and defect > 0:
        raise SymmetryError(f"reality symmetry violated by {defect:.3e}")
    return _to_physical_array(field.coeffs, field.grid)


def to_spectral(samples, grid: PeriodicGrid) -> SpectralField:
    """Analyse real samples of shape ``(K,)*d`` or ``(c, K, ..., K)``.

    The constant part is removed and stored on ``field.mean``."""
    arr = np.asarray(samples)
    if np.iscomplexobj(arr):
        raise ShapeError("samples must be real")
    arr = arr.astype(np.float64, copy=False)
    if arr.shape == grid.physical_shape:
        arr = arr[None]
    if arr.ndim != grid.dim + 1 or arr.shape[1:] != grid.physical_shape:
        raise ShapeError(f"sample array of shape {arr.shape} does not match grid {grid.physical_shape}")
    coeffs, mean = _to_spectral_array(arr, grid)
    return SpectralField(grid, coeffs, mean=mean, check=False)


# operators -----------------------------------------------------------------
def _require(field: SpectralField, c: int, op: str) -> None:
    if field.components != c:
        raise ComponentError(f"{op} needs {c} components, got {field.components}")


def gradient(f: SpectralField) -> SpectralField:
    _require(f, 1, "gradient")
    return f._new(1j * f.grid.wavevector * f.coeffs[0])


def divergence(v: SpectralField) -> SpectralField:
    _require(v, v.grid.dim, "divergence")
    return v._new(np.sum(1j * v.grid.wavevector * v.coeffs, axis=0)[None])


def curl_array(coeffs: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    k = grid.wavevector
    if grid.dim == 2:
        return (1j * (k[0] * coeffs[1] - k[1] * coeffs[0]))[None]
    return 1j * np.stack(
        [
            k[1] * coeffs[2] - k[2] * coeffs[1],
            k[2] * coeffs[0] - k[0] * coeffs[2],
            k[0] * coeffs[1] - k[1] * coeffs[0],
        ]
    )


def curl(v: SpectralField) -> SpectralField:
    """2D: scalar ``d1 v2 - d2 v1``; 3D: the usual vector curl."""
    _require(v, v.grid.dim, "curl")
    return v._new(curl_array(v.coeffs, v.grid))


def laplacian(f: SpectralField) -> SpectralField:
    return f._new(-f.grid.k2 * f.coeffs)


def leray_project(v: SpectralField, complement: bool = False):
    """Divergence-free part of ``v``; with ``complement`` also the gradient part."""
    _require(v, v.grid.dim, "leray_project")
    k = v.grid.wavevector
    grad_part = k * (np.sum(k * v.coeffs, axis=0) * v.grid.inv_k2)
    proj = v._new(v.coeffs - grad_part)
    if complement:
        return proj, v._new(grad_part)
    return proj


def sobolev_norm(f: SpectralField, m: int = 0) -> float:
    """``sqrt(L^d sum_n (1 + |k_n|^2)^m |f_n|^2)`` over all components."""
    if m < 0:
        raise ValueError("m must be non-negative")
    g = f.grid
    w = g.weights if m == 0 else g.weights * (1.0 + g.k2) ** m
    total = np.sum(w * (f.coeffs.real**2 + f.coeffs.imag**2))
    return float(np.sqrt(g.L**g.dim * total))


def inner(a: SpectralField, b: SpectralField) -> float:
    """L2 inner product of two real fields."""
    a._check(b)
    g = a.grid
    return float(g.L**g.dim * np.sum(g.weights * (np.conj(a.coeffs) * b.coeffs).real))


def dealiased_product(a: SpectralField, b: SpectralField, dealias: bool = True) -> SpectralField:
    """Pointwise product (component-wise, scalars broadcast) with 2/3-rule truncation.

    The mean of the product is removed from the coefficients and stored on
    the result's ``mean``."""
    if a.grid != b.grid:
        raise GridMismatchError(f"{a.grid} vs {b.grid}")
    if a.components != b.components and 1 not in (a.components, b.components):
        raise ComponentError(f"cannot multiply {a.components} by {b.components} components")
    coeffs, mean = product_array(a.coeffs, b.coeffs, a.grid, dealias)
    return a._new(coeffs, mean)


def product_array(a: np.ndarray, b: np.ndarray, grid: PeriodicGrid, dealias: bool = True):
    mask = grid.dealias if dealias else grid.keep
    pa = _to_physical_array(a * mask, grid)
    pb = _to_physical_array(b * mask, grid)
    coeffs, mean = _to_spectral_array(pa * pb, grid)
    coeffs *= mask
    return coeffs, mean


def random_field(
    grid: PeriodicGrid,
    components: int = 1,
    rng: np.random.Generator | int | None = None,
    decay: float = 2.0,
    divergence_free: bool = False,
    band: int | None = None,
) -> SpectralField:
    """Random smooth field with coefficient magnitudes ~ ``(1 + |n|^2)^(-decay/2)``.

    ``band`` restricts support to ``|n_j| <= band``."""
    rng = np.random.default_rng(rng)
    shape = (components,) + grid.spectral_shape
    arr = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    arr *= (1.0 + grid.n2) ** (-decay / 2.0)
    if band is not None:
        arr *= np.all(np.abs(grid.n) <= band, axis=0)
    _symmetrize(arr, grid.dim)
    field = SpectralField(grid, arr, check=False)
    if divergence_free:
        field = leray_project(field)
    return field
