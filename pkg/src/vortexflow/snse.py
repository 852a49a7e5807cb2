"""Stochastic 2D vorticity equation with additive noise.

Forward-time form::

    dw = [nu lap w - (v . grad) w + g] dt + sum_r mu_r dw_r,   mu_r = curl gamma_r

Each step freezes ``v`` at ``U w(t_k)`` and reuses the deterministic inner
solver. Brownian increments are always supplied from outside so that runs at
different resolutions can share paths.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from . import rng as _rng
from ._parallel import ordered_map
from .biot_savart import VelocityField, velocity_from_vorticity
from .report import ConvergenceReport, ConvergenceRow, InsufficientDataError
from .spectral import (
    ComponentError,
    PeriodicGrid,
    SpectralError,
    SpectralField,
    curl,
    sobolev_norm,
)
from .stepper import (
    SolverConfig,
    Transport,
    _heun_frozen,
    _rk4_unfrozen,
    _Source,
    frozen_linear_step,
    initial_state,
    resolve_substeps,
)


class NestingError(ValueError):
    """Step counts are not nested inside the reference resolution."""


@dataclass(frozen=True)
class NoiseSpec:
    """``q`` divergence-free noise fields ``gamma_r`` and their vorticities ``mu_r``.

    ``profiles`` optionally gives time modulations ``a_r(t)`` so that the
    noise field is ``a_r(t) gamma_r(x)``; ``None`` means constant in time.
    """

    grid: PeriodicGrid
    gammas: tuple[SpectralField, ...]
    mus: tuple[SpectralField, ...]
    seed: int = 0
    profiles: Callable[[float], np.ndarray] | None = None

    @property
    def q(self) -> int:
        return len(self.gammas)

    def mu_array(self) -> np.ndarray:
        """Stacked ``mu_r`` coefficients, shape ``(q, 1, *spectral_shape)``."""
        if not self.mus:
            return np.zeros((0, 1) + self.grid.spectral_shape, dtype=np.complex128)
        return np.stack([m.coeffs for m in self.mus])


def build_noise(
    grid: PeriodicGrid,
    mode_set: Sequence[Sequence[int]],
    amplitudes: Sequence[float],
    seed: int = 0,
    profiles: Callable[[float], np.ndarray] | None = None,
) -> NoiseSpec:
    """One noise channel per mode ``n``: ``gamma = A (-n_2, n_1)/|n| cos(k0 n.x)``.

    The direction is orthogonal to ``n``, so ``div gamma = 0`` holds mode by mode."""
    if grid.dim != 2:
        raise ComponentError("additive-noise vorticity model is two-dimensional")
    mode_set = [tuple(int(v) for v in n) for n in mode_set]
    amplitudes = list(np.broadcast_to(np.asarray(amplitudes, float), (len(mode_set),)))
    gammas, mus = [], []
    for n, amp in zip(mode_set, amplitudes):
        if not any(n):
            raise SpectralError("noise mode n = 0 would carry a mean flow")
        norm = math.hypot(*n)
        direction = np.array([-n[1], n[0]]) / norm
        gamma = SpectralField.from_modes(grid, {n: 0.5 * amp * direction}, components=2)
        if not np.any(gamma.coeffs):
            raise SpectralError(f"noise mode {n} is not representable on K={grid.K}")
        gammas.append(gamma)
        mus.append(curl(gamma))
    return NoiseSpec(grid, tuple(gammas), tuple(mus), int(seed), profiles)


@dataclass(frozen=True)
class BrownianPath:
    """Per-channel Brownian increments on a uniform fine grid, shape ``(N_fine, q)``."""

    increments: np.ndarray
    h_fine: float
    seed: int = 0
    member: int = 0

    @property
    def q(self) -> int:
        return self.increments.shape[1]

    @property
    def steps(self) -> int:
        return self.increments.shape[0]

    @classmethod
    def generate(cls, q: int, n_fine: int, h_fine: float, seed: int, member: int = 0) -> "BrownianPath":
        gen = _rng.generator(seed, 3, member)
        inc = gen.standard_normal((n_fine, q)) * math.sqrt(h_fine)
        inc.flags.writeable = False
        return cls(inc, float(h_fine), int(seed), int(member))

    def coarsen(self, factor: int) -> "BrownianPath":
        """Sum groups of ``factor`` consecutive increments.

        Powers of two are summed by repeated pairwise halving, so coarsening
        by 4 equals coarsening by 2 twice, bit for bit."""
        if factor < 1 or self.steps % factor:
            raise NestingError(f"factor {factor} does not divide {self.steps} fine steps")
        inc = np.array(self.increments)
        if factor & (factor - 1) == 0:
            f = factor
            while f > 1:
                inc = inc[0::2] + inc[1::2]
                f //= 2
        else:
            inc = inc.reshape(-1, factor, self.q).sum(axis=1)
        inc.flags.writeable = False
        return BrownianPath(inc, self.h_fine * factor, self.seed, self.member)

    def cumulative(self) -> np.ndarray:
        """Wiener values at the grid nodes, shape ``(N_fine + 1, q)``."""
        return np.vstack([np.zeros((1, self.q)), np.cumsum(self.increments, axis=0)])


@dataclass(frozen=True)
class SpdeState:
    t: float
    omega: SpectralField
    frozen_velocity: VelocityField
    brownian_cursor: np.ndarray


def _spread(increments: np.ndarray, M: int) -> np.ndarray:
    """Split ``(S, q)`` sub-increments evenly over ``M`` substeps (``S`` divides ``M``)."""
    S = increments.shape[0]
    per = M // S
    return np.repeat(increments / per, per, axis=0)


def _as_sub_increments(increments, q: int) -> np.ndarray:
    inc = np.asarray(increments, float)
    if inc.ndim == 1:
        inc = inc[None]
    if inc.ndim != 2 or inc.shape[1] != q:
        raise ValueError(f"increments must have {q} channels, got shape {np.shape(increments)}")
    return inc


def spde_frozen_step(state: SpdeState, h: float, config: SolverConfig, noise: NoiseSpec, increments) -> SpdeState:
    """Advance one interval with frozen velocity under the given Brownian increments.

    ``increments`` is ``(q,)`` for the whole step or ``(S, q)`` for ``S``
    equal sub-intervals. Within each sub-interval the path is taken to be
    linear, which gives each mode the weight ``(1 - E) / (lam delta)`` for
    time-constant noise (and left-point weighting for modulated noise).
    """
    inc = _as_sub_increments(increments, noise.q)
    transport = Transport(state.frozen_velocity.field.coeffs, config.grid, config.mask)
    M = resolve_substeps(h, transport, config, multiple=inc.shape[0])
    source = _Source(config.forcing, config.grid, config.mask, 1)
    noise_arg = None
    if noise.q:
        noise_arg = (noise.mu_array() * config.mask, _spread(inc, M), noise.profiles)
    w = _heun_frozen(np.array(state.omega.coeffs), state.t, h, M, config, transport, source, noise_arg)
    omega = SpectralField(config.grid, w, check=False)
    return SpdeState(state.t + h, omega, velocity_from_vorticity(omega), state.brownian_cursor + inc.sum(axis=0))


def unfrozen_reference_step(
    omega: SpectralField, t: float, h: float, config: SolverConfig, noise: NoiseSpec, increments, substeps: int
) -> SpectralField:
    """Reference solve with the velocity recomputed at every stage, on the same linear path."""
    inc = _as_sub_increments(increments, noise.q)
    M = inc.shape[0] * math.ceil(substeps / inc.shape[0])
    source = _Source(config.forcing, config.grid, config.mask, 1)
    noise_arg = None
    if noise.q:
        noise_arg = (noise.mu_array() * config.mask, _spread(inc, M), noise.profiles)
    w = _rk4_unfrozen(np.array(omega.coeffs), t, h, M, config, source, noise_arg)
    return SpectralField(config.grid, w, check=False)


def run_snse(
    phi: SpectralField,
    config: SolverConfig,
    noise: NoiseSpec,
    seed: int | None = None,
    member: int = 0,
    path: BrownianPath | None = None,
) -> tuple[list[SpdeState], BrownianPath]:
    """Chain ``N`` frozen steps; returns the node states and the path used.

    Without ``path`` a fresh one is drawn at the run's own resolution from
    ``(seed, member)``. A finer path is summed down to ``N`` increments."""
    if config.grid.dim != 2:
        raise ComponentError("run_snse is two-dimensional")
    N, h = config.outer_steps, config.h
    if path is None:
        path = BrownianPath.generate(noise.q, N, h, noise.seed if seed is None else seed, member)
    if path.q != noise.q:
        raise ValueError(f"path has {path.q} channels, noise has {noise.q}")
    if path.steps != N:
        if path.steps % N:
            raise NestingError(f"{N} steps do not nest in a path of {path.steps}")
        path = path.coarsen(path.steps // N)
    det = initial_state(phi, config)
    state = SpdeState(det.t, det.omega, det.frozen_velocity, np.zeros(noise.q))
    traj = [state]
    for k in range(N):
        if noise.q:
            state = spde_frozen_step(state, h, config, noise, path.increments[k])
        else:
            nxt = frozen_linear_step(state, h, config)
            state = SpdeState(nxt.t, nxt.omega, nxt.frozen_velocity, state.brownian_cursor)
        state = replace(state, t=(k + 1) * h)
        traj.append(state)
    return traj, path


# verification studies ----------------------------------------------------------
def _rms_row(h: float, sq_errors: np.ndarray) -> ConvergenceRow:
    """Root-mean-square error with a delta-method standard error."""
    n = sq_errors.size
    ms = float(np.mean(sq_errors))
    rms = math.sqrt(ms)
    se_ms = float(np.std(sq_errors, ddof=1)) / math.sqrt(n) if n > 1 else math.inf
    se = se_ms / (2.0 * rms) if rms > 0 else 0.0
    return ConvergenceRow(h, rms, se, n)


def mean_square_order_study(
    phi: SpectralField,
    config: SolverConfig,
    noise: NoiseSpec,
    step_counts: Sequence[int],
    ensemble_size: int,
    seed: int,
    reference_steps: int = 256,
    window: tuple[float, float] = (0.75, 1.25),
) -> ConvergenceReport:
    """Mean-square error at the horizon against a fine run on the same Brownian paths."""
    step_counts = sorted(set(int(n) for n in step_counts))
    if len(step_counts) < 3:
        raise InsufficientDataError("need at least three step counts")
    bad = [n for n in step_counts if reference_steps % n or n >= reference_steps]
    if bad:
        raise NestingError(f"step counts {bad} do not nest strictly inside {reference_steps}")
    T = config.horizon

    def member(m: int) -> np.ndarray:
        path = BrownianPath.generate(noise.q, reference_steps, T / reference_steps, seed, m)
        ref = run_snse(phi, replace(config, outer_steps=reference_steps), noise, path=path)[0][-1].omega
        errs = []
        for n in step_counts:
            out = run_snse(phi, replace(config, outer_steps=n), noise, path=path)[0][-1].omega
            errs.append(sobolev_norm(out - ref) ** 2)
        return np.array(errs)

    sq = np.stack(ordered_map(member, range(ensemble_size)))
    rows = [_rms_row(T / n, sq[:, i]) for i, n in enumerate(step_counts)]
    return ConvergenceReport.fit(rows, window, label="mean-square")


@dataclass
class OneStepProbe:
    conditional_mean: ConvergenceReport
    mean_square: ConvergenceReport


def one_step_error_probe(
    state: SpectralField,
    h_list: Sequence[float],
    config: SolverConfig,
    noise: NoiseSpec,
    ensemble_size: int,
    seed: int,
    sub_increments: int = 16,
    reference_factor: int = 4,
    mean_window: tuple[float, float] = (1.7, 2.3),
    square_window: tuple[float, float] = (1.3, 1.7),
) -> OneStepProbe:
    """One-step error of the frozen step against an unfrozen solve on the same noise.

    Members come in antithetic pairs ``(+dW, -dW)``. Each pair draws one
    standard normal array of ``sub_increments`` sub-steps that is rescaled by
    ``sqrt(h)`` for every ``h``, so all step sizes see the same normalised path.
    The conditional mean is the norm of the ensemble-mean error; the mean
    square is ``sqrt(E ||delta||^2)``.
    """
    if len(h_list) < 3:
        raise InsufficientDataError("need at least three step sizes")
    if ensemble_size < 4 or ensemble_size % 2:
        raise ValueError("ensemble_size must be an even number >= 4")
    pairs = ensemble_size // 2
    S = sub_increments
    det = initial_state(state, config)
    start = SpdeState(det.t, det.omega, det.frozen_velocity, np.zeros(noise.q))
    transport = Transport(start.frozen_velocity.field.coeffs, config.grid, config.mask)

    def pair(p: int):
        z = _rng.generator(seed, 4, p).standard_normal((S, noise.q))
        out = []
        for h in h_list:
            M = resolve_substeps(h, transport, config, multiple=S)
            errs = []
            for sign in (1.0, -1.0):
                inc = sign * z * math.sqrt(h / S)
                frozen = spde_frozen_step(start, h, config, noise, inc).omega
                ref = unfrozen_reference_step(start.omega, start.t, h, config, noise, inc, reference_factor * M)
                errs.append(np.array((frozen - ref).coeffs[0]))
            out.append(errs)
        return out

    results = ordered_map(pair, range(pairs))
    g = config.grid
    weights = g.L**g.dim * g.weights
    mean_rows, sq_rows = [], []
    for i, h in enumerate(h_list):
        errs = np.array([e for r in results for e in r[i]])  # (ensemble, ...)
        pair_means = 0.5 * (errs[0::2] + errs[1::2])
        mean = pair_means.mean(axis=0)
        var = pair_means.real.var(axis=0, ddof=1) + pair_means.imag.var(axis=0, ddof=1)
        mean_norm = math.sqrt(float(np.sum(weights * np.abs(mean) ** 2)))
        se = math.sqrt(float(np.sum(weights * var)) / pairs)
        mean_rows.append(ConvergenceRow(h, mean_norm, se, pairs))
        sq = np.sum(weights * np.abs(errs) ** 2, axis=tuple(range(1, errs.ndim)))
        sq_rows.append(_rms_row(h, sq))
    return OneStepProbe(
        ConvergenceReport.fit(mean_rows, mean_window, label="conditional-mean"),
        ConvergenceReport.fit(sq_rows, square_window, label="mean-square one-step"),
    )


@dataclass
class MonitorReport:
    """Ensemble statistics along a set of trajectories.

    ``moment[k]`` is the sample mean of ``||w_k||^(2p)``; ``bound_constant``
    is the smallest ``K`` for which the moment bound holds at every node.
    ``exponential[beta]`` holds the sample mean of the exponential functional
    per node together with its right-hand side; ``beta0_estimate`` is the
    largest swept ``beta`` whose functional never exceeds its bound by more
    than three standard errors.
    """

    times: np.ndarray
    moment: np.ndarray
    moment_se: np.ndarray
    sup_moment: float
    rhs_integral: np.ndarray
    bound_constant: float
    sobolev_moments: dict[int, np.ndarray]
    exponential: dict[float, tuple[np.ndarray, np.ndarray, np.ndarray]]
    flagged: list[tuple[float, int]]
    beta0_estimate: float


def moment_monitor(
    trajectories: Sequence[Sequence[SpdeState]],
    noise: NoiseSpec,
    config: SolverConfig,
    p: int = 1,
    betas: Sequence[float] = (),
    sobolev_orders: Sequence[int] = (1, 2),
) -> MonitorReport:
    """Moment and exponential-functional statistics over an ensemble of runs."""
    grid = config.grid
    times = np.array([s.t for s in trajectories[0]])
    norms = np.array([[sobolev_norm(s.omega) for s in traj] for traj in trajectories])
    powered = norms ** (2 * p)
    n = len(trajectories)
    moment = powered.mean(axis=0)
    moment_se = powered.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(moment)
    phi_term = norms[0, 0] ** (2 * p)

    g_field = config.forcing
    if g_field is None:
        g_norm = lambda t: 0.0  # noqa: E731
    elif isinstance(g_field, SpectralField):
        gn = sobolev_norm(g_field)
        g_norm = lambda t: gn  # noqa: E731
    else:
        g_norm = lambda t: sobolev_norm(g_field(t))  # noqa: E731

    def mu_norms(t):
        base = np.array([sobolev_norm(m) for m in noise.mus])
        if noise.profiles is not None:
            base = base * np.abs(np.asarray(noise.profiles(t), float))
        return base

    def integral(fn):
        vals = np.array([fn(t) for t in times])
        return np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(times))])

    rhs_integral = integral(lambda t: g_norm(t) ** (2 * p) + np.sum(mu_norms(t) ** (2 * p)))
    excess = moment - phi_term
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(rhs_integral > 0, excess / rhs_integral, np.where(excess > 0, np.inf, 0.0))
    bound_constant = float(max(0.0, np.max(ratios[1:], initial=0.0)))

    sob = {m: np.mean(np.array([[sobolev_norm(s.omega, m) for s in traj] for traj in trajectories]) ** (2 * p), axis=0)
           for m in sobolev_orders}

    # exponential energy functional over [0, t_k]; grad norms integrated by the trapezoid rule on nodes
    alpha = grid.k0**2
    sigma = config.sigma
    grad_sq = np.array([[sobolev_norm(s.omega, 1) ** 2 - sobolev_norm(s.omega) ** 2 for s in traj] for traj in trajectories])
    grad_int = np.concatenate(
        [np.zeros((n, 1)), np.cumsum(0.5 * (grad_sq[:, 1:] + grad_sq[:, :-1]) * np.diff(times), axis=1)], axis=1
    )
    source_int = integral(lambda t: 2.0 / (alpha * sigma**2) * g_norm(t) ** 2 + np.sum(mu_norms(t) ** 2))
    exponential, flagged = {}, []
    beta0, clean = 0.0, True
    for beta in sorted(betas):
        # overflow is the blow-up being monitored; it surfaces as a flag, not a warning
        with np.errstate(over="ignore", invalid="ignore"):
            expo = np.exp(beta * (norms**2 - norms[:, :1] ** 2) + beta * sigma**2 / 4.0 * grad_int)
            mean = expo.mean(axis=0)
            se = expo.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
            rhs = np.exp(beta * source_int)
        exponential[float(beta)] = (mean, se, rhs)
        bad = [k for k in range(len(times)) if not np.isfinite(mean[k]) or mean[k] - 3.0 * se[k] > rhs[k]]
        flagged.extend((float(beta), k) for k in bad)
        clean = clean and not bad
        if clean:
            beta0 = float(beta)
    return MonitorReport(
        times, moment, moment_se, float(np.max(moment)), rhs_integral, bound_constant, sob, exponential, flagged, beta0
    )


def run_ensemble(
    phi: SpectralField, config: SolverConfig, noise: NoiseSpec, ensemble_size: int, seed: int, path_steps: int | None = None
) -> list[list[SpdeState]]:
    """Independent members ``0..ensemble_size-1``; ``path_steps`` fixes a shared finer path resolution."""

    def member(m):
        path = None
        if path_steps is not None:
            path = BrownianPath.generate(noise.q, path_steps, config.horizon / path_steps, seed, m)
        return run_snse(phi, config, noise, seed=seed, member=m, path=path)[0]

    return ordered_map(member, range(ensemble_size))
