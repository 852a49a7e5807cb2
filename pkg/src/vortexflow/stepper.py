"""Frozen-velocity time stepping for the vorticity equation.

Forward-time form solved on each interval ``[t_k, t_k + h]``::

    dw/dt = nu lap w - (u_k . grad) w + (w . grad) u_k + g,   nu = sigma^2 / 2

with ``u_k = U(w(t_k))`` held fixed. The stretching term is absent in 2D.
A backward-time problem with terminal data at ``T`` maps onto this one by
``t -> T - t``.

Each interval is integrated with ``M`` substeps of an integrating-factor
Heun rule. Diffusion and the forcing integral are exact per mode, so only
the (linear, frozen) transport term carries inner discretization error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad_vec

from .biot_savart import VelocityField, velocity_array, velocity_from_vorticity
from .report import ConvergenceReport, ConvergenceRow, InsufficientDataError
from .spectral import (
    ComponentError,
    PeriodicGrid,
    SpectralField,
    _to_physical_array,
    _to_spectral_array,
    random_field,
    sobolev_norm,
)

_GL3_NODES = np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_GL3_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 9.0


class CFLError(RuntimeError):
    """Inner substep too large for the frozen advection speed."""

    def __init__(self, courant: float, suggested: int):
        super().__init__(f"inner Courant number {courant:.3g} > 1; use at least {suggested} substeps")
        self.courant = courant
        self.suggested = suggested


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of a frozen-velocity run.

    ``forcing`` is the vorticity source ``g``: a constant field, a callable
    ``t -> SpectralField`` or ``None``. ``velocity_operator`` replaces the
    Biot-Savart map on raw coefficient arrays; it exists for tests such as
    switching transport off.
    """

    sigma: float
    horizon: float
    outer_steps: int
    grid: PeriodicGrid
    inner_substeps: int | None = None
    dealias: bool = True
    forcing: object = None
    velocity_operator: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.outer_steps < 1:
            raise ValueError("outer_steps must be >= 1")
        if self.inner_substeps is not None and self.inner_substeps < 1:
            raise ValueError("inner_substeps must be >= 1")

    @property
    def h(self) -> float:
        return self.horizon / self.outer_steps

    @property
    def nu(self) -> float:
        return 0.5 * self.sigma**2

    @property
    def components(self) -> int:
        return 1 if self.grid.dim == 2 else 3

    @property
    def mask(self) -> np.ndarray:
        return self.grid.dealias if self.dealias else self.grid.keep

    @property
    def decay_rate(self) -> np.ndarray:
        """Per-mode diffusion rate ``nu |k|^2``."""
        return self.nu * self.grid.k2

    def velocity(self, coeffs: np.ndarray) -> np.ndarray:
        if self.velocity_operator is not None:
            return self.velocity_operator(coeffs)
        return velocity_array(coeffs, self.grid)


@dataclass(frozen=True)
class SchemeState:
    t: float
    omega: SpectralField
    frozen_velocity: VelocityField


# forcing and transport helpers ---------------------------------------------
class _Source:
    """Exact per-mode integral of ``exp(-lam (delta - s)) g(t + s)`` over a substep."""

    def __init__(self, forcing, grid: PeriodicGrid, mask: np.ndarray, components: int):
        self.constant = None
        self.func = None
        if forcing is None:
            return
        if isinstance(forcing, SpectralField):
            if forcing.grid != grid or forcing.components != components:
                raise ComponentError("forcing must live on the solver grid with vorticity components")
            self.constant = forcing.coeffs * mask
        elif callable(forcing):
            self.func = forcing
            self.mask = mask
        else:
            raise TypeError("forcing must be a SpectralField, a callable or None")

    @property
    def active(self) -> bool:
        return self.constant is not None or self.func is not None

    def integral(self, t: float, delta: float, lam: np.ndarray, E: np.ndarray, phi1: np.ndarray):
        if self.constant is not None:
            return phi1 * self.constant
        if self.func is None:
            return 0.0
        total = 0.0
        for x, w in zip(_GL3_NODES, _GL3_WEIGHTS):
            s = 0.5 * delta * (1.0 + x)
            g = self.func(t + s).coeffs * self.mask
            total = total + (0.5 * delta * w) * np.exp(-lam * (delta - s)) * g
        return total

    def at(self, t: float):
        if self.constant is not None:
            return self.constant
        if self.func is None:
            return 0.0
        return self.func(t).coeffs * self.mask


def _phi1(lam: np.ndarray, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """``E = exp(-lam delta)`` and ``(1 - E) / lam`` (``delta`` where ``lam = 0``)."""
    x = lam * delta
    E = np.exp(-x)
    safe = np.where(x > 0, x, 1.0)
    phi1 = np.where(x > 0, -np.expm1(-x) / safe * delta, delta)
    return E, phi1


class Transport:
    """Linear transport operator ``w -> -(u . grad) w + (w . grad) u`` for a fixed ``u``."""

    def __init__(self, u_coeffs: np.ndarray, grid: PeriodicGrid, mask: np.ndarray):
        self.grid = grid
        self.mask = mask
        self.k = grid.wavevector
        self.u_phys = _to_physical_array(u_coeffs * mask, grid)
        if grid.dim == 3:
            grad = 1j * self.k[None] * (u_coeffs * mask)[:, None]
            self.grad_u_phys = _to_physical_array(grad.reshape((9,) + grid.spectral_shape), grid).reshape(
                (3, 3) + grid.physical_shape
            )
        self.zero = not np.any(u_coeffs)

    def __call__(self, w: np.ndarray) -> np.ndarray:
        if self.zero:
            return np.zeros_like(w)
        g = self.grid
        wm = w * self.mask
        grad_w = _to_physical_array((1j * self.k[None] * wm[:, None]).reshape((-1,) + g.spectral_shape), g)
        grad_w = grad_w.reshape((w.shape[0], g.dim) + g.physical_shape)
        out = -np.einsum("j...,cj...->c...", self.u_phys, grad_w)
        if g.dim == 3:
            w_phys = _to_physical_array(wm, g)
            # stretching: (w . grad) u_i = sum_j w_j d_j u_i
            out += np.einsum("j...,ij...->i...", w_phys, self.grad_u_phys)
        coeffs, _ = _to_spectral_array(out, g)
        return coeffs * self.mask

    def speed(self) -> float:
        return float(np.sqrt(np.max(np.sum(self.u_phys**2, axis=0))))


def _courant(speed: float, delta: float, grid: PeriodicGrid) -> float:
    return delta * speed * grid.k0 * grid.K / 2


def default_substeps(h: float, speed: float, grid: PeriodicGrid) -> int:
    return max(4, math.ceil(h * grid.K * speed * grid.k0))


# inner integrators -----------------------------------------------------------
def _heun_frozen(w, t0, h, M, config, transport, source, noise=None):
    """``M`` integrating-factor Heun substeps with frozen transport.

    ``noise`` is ``(mus, increments)``: ``mus`` of shape ``(q, c, ...)`` and
    ``increments`` of shape ``(M, q)`` per substep. Each increment is treated
    as a linear Brownian path over its substep, which gives the weight
    ``(1 - E) / (lam delta)``.
    """
    delta = h / M
    lam = config.decay_rate
    E, phi1 = _phi1(lam, delta)
    mask = config.mask
    noise_w = phi1 / delta
    for j in range(M):
        t = t0 + j * delta
        F = source.integral(t, delta, lam, E, phi1)
        if noise is not None:
            mus, incs, profile = noise
            if profile is None:
                F = F + noise_w * np.tensordot(incs[j], mus, axes=1)
            else:
                F = F + E * np.tensordot(incs[j] * profile(t), mus, axes=1)
        a = transport(w)
        ws = E * (w + delta * a) + F
        b = transport(ws)
        w = (E * (w + 0.5 * delta * a) + 0.5 * delta * b + F) * mask
    return w


def _rk4_unfrozen(w, t0, h, M, config, source, noise=None):
    """Integrating-factor RK4 with the velocity recomputed at every stage."""
    delta = h / M
    lam = config.decay_rate
    E = np.exp(-lam * delta)
    Eh = np.exp(-0.5 * lam * delta)
    mask = config.mask
    grid = config.grid

    def rhs(t, v, rate):
        tr = Transport(config.velocity(v), grid, mask)
        out = tr(v) + source.at(t)
        if rate is not None:
            out = out + rate
        return out

    for j in range(M):
        t = t0 + j * delta
        rate = None
        if noise is not None:
            mus, incs, profile = noise
            scale = incs[j] / delta if profile is None else incs[j] * profile(t) / delta
            rate = np.tensordot(scale, mus, axes=1)
        k1 = rhs(t, w, rate)
        k2 = rhs(t + 0.5 * delta, Eh * (w + 0.5 * delta * k1), rate)
        k3 = rhs(t + 0.5 * delta, Eh * w + 0.5 * delta * k2, rate)
        k4 = rhs(t + delta, E * w + delta * Eh * k3, rate)
        w = (E * w + (delta / 6.0) * (E * k1 + 2.0 * Eh * (k2 + k3) + k4)) * mask
    return w


# public API ------------------------------------------------------------------
def _state(t: float, w: np.ndarray, config: SolverConfig) -> SchemeState:
    omega = SpectralField(config.grid, w, check=False)
    if config.velocity_operator is None:
        vel = velocity_from_vorticity(omega)
    else:
        vel = VelocityField(omega._new(config.velocity(omega.coeffs)), False)
    return SchemeState(t, omega, vel)


def initial_state(phi: SpectralField, config: SolverConfig, t0: float = 0.0) -> SchemeState:
    if phi.grid != config.grid or phi.components != config.components:
        raise ComponentError("initial vorticity does not match the solver grid")
    return _state(t0, phi.coeffs * config.mask, config)


def resolve_substeps(h: float, transport: Transport, config: SolverConfig, multiple: int = 1) -> int:
    """Substep count for one interval; raises :class:`CFLError` if the configured count is unstable."""
    speed = transport.speed()
    M = config.inner_substeps or default_substeps(h, speed, config.grid)
    M = multiple * math.ceil(M / multiple)
    courant = _courant(speed, h / M, config.grid)
    if courant > 1.0:
        raise CFLError(courant, math.ceil(h * speed * config.grid.k0 * config.grid.K / 2))
    return M


def frozen_linear_step(state: SchemeState, h: float, config: SolverConfig) -> SchemeState:
    """Advance one interval with the velocity frozen at ``state.t``."""
    transport = Transport(state.frozen_velocity.field.coeffs, config.grid, config.mask)
    M = resolve_substeps(h, transport, config)
    source = _Source(config.forcing, config.grid, config.mask, config.components)
    w = _heun_frozen(np.array(state.omega.coeffs), state.t, h, M, config, transport, source)
    return _state(state.t + h, w, config)


def run_deterministic(phi: SpectralField, config: SolverConfig, t0: float = 0.0) -> list[SchemeState]:
    """Chain ``N`` frozen steps; returns the ``N + 1`` node states."""
    state = initial_state(phi, config, t0)
    traj = [state]
    for k in range(config.outer_steps):
        state = frozen_linear_step(state, config.h, config)
        state = replace(state, t=t0 + (k + 1) * config.h)
        traj.append(state)
    return traj


def reference_solution(
    phi: SpectralField, config: SolverConfig, duration: float, substeps: int, t0: float = 0.0
) -> SpectralField:
    """Unfrozen solve with ``substeps`` integrating-factor RK4 steps (fourth order)."""
    source = _Source(config.forcing, config.grid, config.mask, config.components)
    w = _rk4_unfrozen(np.array(phi.coeffs * config.mask), t0, duration, substeps, config, source)
    return SpectralField(config.grid, w, check=False)


def stokes_exact_solution(phi: SpectralField, g, sigma: float, t: float, T: float) -> SpectralField:
    """Closed-form backward-time Stokes vorticity at time ``t <= T``.

    Terminal data ``phi`` at ``T``; ``g`` is a constant field, a callable
    ``s -> SpectralField`` (integrated by adaptive quadrature) or ``None``.
    """
    grid = phi.grid
    lam = 0.5 * sigma**2 * grid.k2
    tau = T - t
    out = np.exp(-lam * tau) * phi.coeffs
    if g is None or tau == 0:
        return phi._new(out)
    if isinstance(g, SpectralField):
        _, phi1 = _phi1(lam, tau)
        return phi._new(out + phi1 * g.coeffs)
    shape = out.shape

    def integrand(s):
        val = np.exp(lam * (t - s)) * g(s).coeffs
        return np.concatenate([val.real.ravel(), val.imag.ravel()])

    res, _ = quad_vec(integrand, t, T, epsabs=1e-14, epsrel=1e-13)
    half = res.size // 2
    return phi._new(out + (res[:half] + 1j * res[half:]).reshape(shape))


def time_reversed(g, T: float):
    """Forward-time source for a backward-time source ``g`` on ``[0, T]``."""
    if g is None or isinstance(g, SpectralField):
        return g
    return lambda tau: g(T - tau)


def taylor_green_solution(grid: PeriodicGrid, t: float, sigma: float, amplitude: float = 1.0):
    """Decaying 2D vortex ``u = A (cos k0 x sin k0 y, -sin k0 x cos k0 y) exp(-sigma^2 k0^2 t)``.

    Returns ``(VelocityField, vorticity)``; the vorticity is ``-2 A k0 cos k0 x cos k0 y`` times the same decay.
    """
    if grid.dim != 2:
        raise ComponentError("the Taylor-Green vortex is two-dimensional")
    k0 = grid.k0
    decay = amplitude * math.exp(-(sigma**2) * k0**2 * t)
    u, w = {}, {}
    for s1 in (-1, 1):
        for s2 in (-1, 1):
            u[(s1, s2)] = decay * np.array([-0.25j * s2, 0.25j * s1])
            w[(s1, s2)] = -0.5 * k0 * decay
    vel = SpectralField.from_modes(grid, u, components=2)
    omega = SpectralField.from_modes(grid, w, components=1)
    return VelocityField(vel, True), omega


def perturbed_taylor_green(grid: PeriodicGrid, epsilon: float = 0.2, seed: int = 0, band: int = 3) -> SpectralField:
    """Taylor-Green vorticity at ``t = 0`` plus a smooth random perturbation.

    The perturbation has ``L2`` norm ``epsilon`` times that of the vortex."""
    _, tg = taylor_green_solution(grid, 0.0, 1.0)
    pert = random_field(grid, 1, seed, decay=2.0, band=band)
    return tg + pert * (epsilon * sobolev_norm(tg) / sobolev_norm(pert))


# convergence studies -----------------------------------------------------------
@dataclass
class OracleSolution:
    omega: SpectralField
    velocity: SpectralField


def _reference_oracle(phi, config, substeps_per_unit: int = 4096) -> OracleSolution:
    M = max(1, math.ceil(substeps_per_unit * config.horizon))
    w = reference_solution(phi, config, config.horizon, M)
    return OracleSolution(w, w._new(config.velocity(w.coeffs)))


def deterministic_convergence_study(
    phi: SpectralField,
    config_base: SolverConfig,
    step_counts: Sequence[int],
    oracle: str | OracleSolution = "reference",
    window: tuple[float, float] = (0.8, 1.2),
    floor: float = 1e-11,
) -> tuple[ConvergenceReport, ConvergenceReport]:
    """L2 errors of vorticity and velocity at the horizon for each step count.

    ``oracle`` is ``"taylor-green"`` (exact vortex), ``"reference"`` (fine
    unfrozen RK4 solve) or a precomputed :class:`OracleSolution`. Errors below
    ``floor`` relative to the oracle norm mark the study as saturated.
    """
    step_counts = sorted(set(int(n) for n in step_counts))
    if len(step_counts) < 3:
        raise InsufficientDataError("a convergence study needs at least three step counts")
    if isinstance(oracle, OracleSolution):
        ref = oracle
    elif oracle == "taylor-green":
        vel, w = taylor_green_solution(config_base.grid, config_base.horizon, config_base.sigma)
        ref = OracleSolution(SpectralField(w.grid, w.coeffs * config_base.mask, check=False), vel.field)
    elif oracle == "reference":
        ref = _reference_oracle(phi, config_base)
    else:
        raise ValueError(f"unknown oracle {oracle!r}")
    w_rows, u_rows = [], []
    for n in step_counts:
        cfg = replace(config_base, outer_steps=n)
        final = run_deterministic(phi, cfg)[-1]
        w_rows.append(ConvergenceRow(cfg.h, sobolev_norm(final.omega - ref.omega), 0.0, 1))
        u_rows.append(ConvergenceRow(cfg.h, sobolev_norm(final.frozen_velocity.field - ref.velocity), 0.0, 1))
    w_rep = ConvergenceReport.fit(w_rows, window, label="vorticity", floor=floor * sobolev_norm(ref.omega))
    u_rep = ConvergenceReport.fit(u_rows, window, label="velocity", floor=floor * sobolev_norm(ref.velocity))
    return w_rep, u_rep


def one_step_study(
    phi: SpectralField,
    config: SolverConfig,
    h_list: Sequence[float],
    window: tuple[float, float] = (1.7, 2.3),
    reference_substeps: int = 256,
) -> tuple[ConvergenceReport, ConvergenceReport]:
    """Local error of a single frozen step against an unfrozen reference, per ``h``."""
    if len(h_list) < 3:
        raise InsufficientDataError("a one-step study needs at least three step sizes")
    state = initial_state(phi, config)
    w_rows, u_rows = [], []
    for h in h_list:
        step = frozen_linear_step(state, h, config)
        ref = reference_solution(state.omega, config, h, reference_substeps)
        err = step.omega - ref
        w_rows.append(ConvergenceRow(h, sobolev_norm(err), 0.0, 1))
        u_rows.append(ConvergenceRow(h, sobolev_norm(err._new(config.velocity(err.coeffs))), 0.0, 1))
    return (
        ConvergenceReport.fit(w_rows, window, label="one-step vorticity"),
        ConvergenceReport.fit(u_rows, window, label="one-step velocity"),
    )
