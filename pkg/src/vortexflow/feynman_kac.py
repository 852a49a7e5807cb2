"""Monte Carlo solution of linear parabolic systems through their SDE representation.

The backward Cauchy problem on ``[t, T]``::

    du/ds + (1/2) sum_r (sigma_r sigma_r^T) : D^2 u + a . grad u + B^T u + f = 0,   u(T) = phi

has, for any scalar fields ``mu_r`` and vector fields ``F_r``,

    u(t, x)^T y = E[ Q(T) phi(X_T)^T Y_T + Z_T ]

with

    dX = (a - sum_r mu_r sigma_r) ds + sum_r sigma_r dw_r
    dY = B Y ds                     dQ = Q sum_r mu_r dw_r
    dZ = Q f^T Y ds + Q sum_r F_r^T Y dw_r.

The mean does not depend on ``(mu, F)``; the variance does. Paths are
integrated with the weak Euler scheme.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np

from . import rng as _rng
from ._parallel import ordered_map
from .biot_savart import VelocityField
from .spectral import SpectralField

#: magnitude beyond which ``Q`` or ``Y`` marks a path as divergent
ABORT_LIMIT = 1e12
#: largest tolerated fraction of aborted paths
ABORT_FRACTION = 0.01


class EstimateRejected(RuntimeError):
    """Too many paths were aborted for the estimate to be trusted."""


Coefficient = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LinearParabolicSystem:
    """Coefficients of the backward problem; every callable takes ``(s, X)`` with ``X`` of shape ``(P, n)``.

    Shapes returned: ``a -> (P, n)``, ``sigmas -> (P, n, l)`` (or a constant
    ``(n, l)`` array), ``B -> (P, m, m)``, ``thetas -> (P, l, m, m)``,
    ``f -> (P, m)``, ``terminal(X) -> (P, m)``.
    """

    n: int
    m: int
    l: int
    terminal: Callable[[np.ndarray], np.ndarray]
    a: Coefficient | None = None
    sigmas: Coefficient | np.ndarray | None = None
    B: Coefficient | None = None
    thetas: Coefficient | None = None
    f: Coefficient | None = None
    t: float = 0.0
    T: float = 1.0

    def sigma_at(self, s, X) -> np.ndarray:
        if self.sigmas is None:
            return np.zeros((X.shape[0], self.n, self.l))
        if callable(self.sigmas):
            return self.sigmas(s, X)
        return np.broadcast_to(np.asarray(self.sigmas, float), (X.shape[0], self.n, self.l))


@dataclass(frozen=True)
class RepresentationChoice:
    """``mus(s, X) -> (P, l)`` and ``Fs(s, X) -> (P, l, m)``; ``None`` means zero."""

    mus: Coefficient | None = None
    Fs: Coefficient | None = None


@dataclass
class PathState:
    """Terminal values of a batch of paths; ``Y`` is the ``(P, m, m)`` fundamental matrix."""

    s: float
    X: np.ndarray
    Y: np.ndarray
    Q: np.ndarray
    Z: np.ndarray
    aborted: np.ndarray


@dataclass(frozen=True)
class McEstimate:
    value: np.ndarray
    std_error: np.ndarray
    samples: int
    aborted: int = 0

    def within(self, exact, k: float = 3.0) -> bool:
        """Whether ``|value - exact| <= k * std_error`` component-wise."""
        return bool(np.all(np.abs(np.asarray(self.value) - exact) <= k * np.asarray(self.std_error)))


# path integration ------------------------------------------------------------
def _increments(gen: np.random.Generator, shape, dt: float, kind: str) -> np.ndarray:
    if kind == "gaussian":
        return gen.standard_normal(shape) * math.sqrt(dt)
    if kind == "two-point":
        return (2.0 * gen.integers(0, 2, size=shape) - 1.0) * math.sqrt(dt)
    raise ValueError(f"unknown increment kind {kind!r}")


def weak_euler_path(
    system: LinearParabolicSystem,
    choice: RepresentationChoice,
    x0,
    h_sde: float,
    gen: np.random.Generator,
    paths: int = 1,
    increments: str = "gaussian",
) -> PathState:
    """Integrate ``paths`` independent copies of ``(X, Y, Q, Z)`` from ``(t, x0)`` to ``T``.

    ``Y`` starts at the identity so its columns carry every basis vector ``y``
    at once, and ``Z`` is the matching row vector of length ``m``. ``Q`` uses
    the exponential update ``Q exp(mu.dW - |mu|^2 dt / 2)``, which keeps it
    positive and has unit conditional mean for Gaussian increments.
    """
    span = system.T - system.t
    steps = max(1, int(round(span / h_sde)))
    if not math.isclose(steps * h_sde, span, rel_tol=1e-9, abs_tol=1e-14):
        raise ValueError(f"h_sde={h_sde} does not divide the horizon {span}")
    dt = span / steps
    n, m = system.n, system.m
    X = np.array(np.broadcast_to(np.asarray(x0, float), (paths, n)))
    Y = np.broadcast_to(np.eye(m), (paths, m, m)).copy()
    Q = np.ones(paths)
    Z = np.zeros((paths, m))
    bad = np.zeros(paths, dtype=bool)
    for j in range(steps):
        s = system.t + j * dt
        dW = _increments(gen, (paths, system.l), dt, increments)
        sig = system.sigma_at(s, X)
        drift = system.a(s, X) if system.a is not None else 0.0
        mu = choice.mus(s, X) if choice.mus is not None else None
        if mu is not None:
            drift = drift - np.einsum("pr,pir->pi", mu, sig)
        # source terms use left-point values of Q and Y
        if system.f is not None:
            Z += (Q * dt)[:, None] * np.einsum("pk,pkj->pj", system.f(s, X), Y)
        if choice.Fs is not None:
            FdW = np.einsum("prk,pr->pk", choice.Fs(s, X), dW)
            Z += Q[:, None] * np.einsum("pk,pkj->pj", FdW, Y)
        dY = 0.0
        if system.B is not None:
            dY = np.einsum("pik,pkj->pij", system.B(s, X), Y) * dt
        if system.thetas is not None:
            dY = dY + np.einsum("prik,pkj,pr->pij", system.thetas(s, X), Y, dW)
        Y = Y + dY
        if mu is not None:
            Q = Q * np.exp(np.sum(mu * dW, axis=1) - 0.5 * dt * np.sum(mu * mu, axis=1))
        X = X + drift * dt + np.einsum("pir,pr->pi", sig, dW)
        bad |= ~np.isfinite(Q) | (np.abs(Q) > ABORT_LIMIT)
        bad |= ~np.all(np.isfinite(Y), axis=(1, 2)) | (np.max(np.abs(Y), axis=(1, 2)) > ABORT_LIMIT)
        bad |= ~np.all(np.isfinite(X), axis=1)
    return PathState(system.T, X, Y, Q, Z, bad)


def _path_values(system, state: PathState) -> np.ndarray:
    """Per-path ``Q phi(X_T)^T Y_T + Z_T`` as ``(P, m)``."""
    phi = system.terminal(state.X)
    return state.Q[:, None] * np.einsum("pk,pkj->pj", phi, state.Y) + state.Z


def _reduce(values: np.ndarray, aborted: np.ndarray) -> McEstimate:
    total = values.shape[0]
    n_bad = int(np.count_nonzero(aborted))
    if n_bad > ABORT_FRACTION * total:
        raise EstimateRejected(f"{n_bad} of {total} paths aborted (limit {ABORT_FRACTION:.0%})")
    good = values[~aborted]
    k = good.shape[0]
    mean = good.mean(axis=0)
    se = good.std(axis=0, ddof=1) / math.sqrt(k) if k > 1 else np.full_like(mean, np.inf)
    return McEstimate(mean, se, k, n_bad)


def estimate_solution(
    system: LinearParabolicSystem,
    choice: RepresentationChoice,
    x,
    samples: int,
    seed: int,
    h_sde: float,
    basis: Sequence[Sequence[float]] | None = None,
    increments: str = "gaussian",
    stream: int = 0,
) -> McEstimate:
    """Monte Carlo estimate of ``u(t, x)`` (or of ``u^T y`` for each ``y`` in ``basis``).

    Paths are simulated in fixed blocks, each with its own Philox stream
    ``(seed, stream, block)``, so the result is bit-identical for any thread count.
    """
    if samples < 2:
        raise ValueError("need at least two samples")

    def run(block):
        b, start, stop = block
        gen = _rng.generator(seed, stream, b)
        state = weak_euler_path(system, choice, x, h_sde, gen, stop - start, increments)
        return _path_values(system, state), state.aborted

    parts = ordered_map(run, _rng.blocks(samples))
    values = np.concatenate([p[0] for p in parts])
    aborted = np.concatenate([p[1] for p in parts])
    if basis is not None:
        values = values @ np.asarray(basis, float).T
    return _reduce(values, aborted)


# vorticity specialization ------------------------------------------------------
class VelocityProvider(Protocol):
    dim: int

    def __call__(self, s: float, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Velocity ``(P, d)`` and its gradient ``(P, d, d)`` with ``grad[p, i, j] = d u_i / d x_j``."""


@dataclass(frozen=True)
class FrozenVelocity:
    """Time-independent velocity given by a spectral field."""

    field: SpectralField

    @classmethod
    def of(cls, velocity: VelocityField | SpectralField) -> "FrozenVelocity":
        return cls(velocity.field if isinstance(velocity, VelocityField) else velocity)

    @property
    def dim(self) -> int:
        return self.field.grid.dim

    def __call__(self, s, X):
        return self.field.evaluate(X, with_grad=True)


@dataclass(frozen=True)
class ZeroVelocity:
    dim: int

    def __call__(self, s, X):
        P = X.shape[0]
        return np.zeros((P, self.dim)), np.zeros((P, self.dim, self.dim))


@dataclass(frozen=True)
class CallableVelocity:
    dim: int
    fn: Callable[[float, np.ndarray], tuple[np.ndarray, np.ndarray]]

    def __call__(self, s, X):
        return self.fn(s, X)


def _as_field_fn(obj, with_time: bool):
    """Normalise a source/terminal argument to a callable returning ``(P, m)``."""
    if obj is None:
        return None
    if isinstance(obj, SpectralField):
        if with_time:
            return lambda s, X: obj.evaluate(X)
        return lambda X: obj.evaluate(X)
    return obj


class _VelocityCache:
    """Avoids evaluating the velocity more than once per step.

    The drift, the weight and ``B`` all query the same ``(s, X)``; the cache is
    per thread because path blocks may run concurrently."""

    def __init__(self, provider):
        self.provider = provider
        self.local = threading.local()

    def __call__(self, s, X):
        key = getattr(self.local, "key", None)
        if key is None or key[0] != s or key[1] is not X:
            self.local.val = self.provider(s, X)
            self.local.key = (s, X)
        return self.local.val


def vorticity_system(
    provider, g, phi, sigma: float, t: float, T: float, representation: str = "driftless"
) -> tuple[LinearParabolicSystem, RepresentationChoice]:
    """Backward vorticity problem ``dw/ds + nu lap w - u.grad w + (w.grad) u + g = 0`` as a system.

    ``representation="driftless"`` takes ``mu_r = a^r / sigma`` with ``a = -u``,
    which removes the drift from ``X`` and moves it into the weight ``Q``.
    ``"plain"`` keeps ``mu = 0``, ``Q = 1`` and the drift ``-u`` in ``X``.
    In 2D the stretching term vanishes and ``Y`` stays ``1``.
    """
    d = provider.dim
    m = 1 if d == 2 else 3
    vel = _VelocityCache(provider)
    terminal = _as_field_fn(phi, with_time=False)
    f = _as_field_fn(g, with_time=True)
    sig = sigma * np.eye(d)

    def a(s, X):
        return -vel(s, X)[0]

    def stretching(s, X):
        # B_ij = d u_j / d x_i
        return np.swapaxes(vel(s, X)[1], 1, 2)

    B = stretching if d == 3 else None
    system = LinearParabolicSystem(d, m, d, terminal, a=a, sigmas=sig, B=B, f=f, t=t, T=T)
    if representation == "plain":
        return system, RepresentationChoice()
    if representation == "driftless":
        return system, RepresentationChoice(mus=lambda s, X: -vel(s, X)[0] / sigma)
    raise ValueError(f"unknown representation {representation!r}")


def vorticity_point_estimate(
    provider,
    g,
    phi,
    point,
    samples: int,
    seed: int,
    sigma: float,
    t: float,
    T: float,
    h_sde: float,
    representation: str = "driftless",
    increments: str = "gaussian",
) -> McEstimate:
    """Estimate the vorticity at ``(t, point)`` from terminal data ``phi`` at ``T``."""
    system, choice = vorticity_system(provider, g, phi, sigma, t, T, representation)
    return estimate_solution(system, choice, point, samples, seed, h_sde, increments=increments)


def weight_mean(
    provider, point, samples: int, seed: int, sigma: float, t: float, T: float, h_sde: float
) -> McEstimate:
    """Sample mean of the terminal weight ``Q_T`` under the driftless representation.

    Terminal data ``1``, no source and no stretching reduce the path value to
    ``Q_T``. Unit mean is the martingale property the representation relies on.
    """
    d = provider.dim
    m = 1 if d == 2 else 3
    system, choice = vorticity_system(provider, None, lambda X: np.ones((X.shape[0], m)), sigma, t, T)
    system = LinearParabolicSystem(system.n, m, system.l, system.terminal, a=system.a, sigmas=system.sigmas, t=t, T=T)
    return estimate_solution(system, choice, point, samples, seed, h_sde, basis=np.eye(m)[:1])


def mc_point_evaluator(
    provider, g, phi, sigma, t, T, h_sde, inner_samples: int, seed: int, representation="driftless"
) -> Callable[[np.ndarray], np.ndarray]:
    """Callable mapping points ``(P, d)`` to independent inner Monte Carlo estimates ``(P, m)``."""
    system, choice = vorticity_system(provider, g, phi, sigma, t, T, representation)

    def evaluate(points):
        points = np.asarray(points, float)
        P = points.shape[0]
        X0 = np.repeat(points, inner_samples, axis=0)

        def run(block):
            b, start, stop = block
            gen = _rng.generator(seed, 1, b)
            state = weak_euler_path(system, choice, X0[start:stop], h_sde, gen, stop - start)
            return _path_values(system, state), state.aborted

        parts = ordered_map(run, _rng.blocks(X0.shape[0]))
        vals = np.concatenate([p[0] for p in parts])
        bad = np.concatenate([p[1] for p in parts])
        if np.count_nonzero(bad) > ABORT_FRACTION * bad.size:
            raise EstimateRejected(f"{np.count_nonzero(bad)} inner paths aborted")
        vals[bad] = np.nan
        return np.nanmean(vals.reshape(P, inner_samples, -1), axis=1)

    return evaluate


def mc_fourier_coefficients(
    point_estimator: Callable[[np.ndarray], np.ndarray],
    n_list: Sequence[Sequence[int]],
    L: float,
    dim: int,
    outer_samples: int,
    seed: int,
) -> dict[tuple[int, ...], McEstimate]:
    """Estimate ``w_n = E[w(xi) exp(-i k0 n.xi)]`` with ``xi`` uniform on the periodic cube.

    ``point_estimator`` may itself be a Monte Carlo estimate; since every
    ``xi`` gets fresh inner samples, the outer sample variance already covers
    both layers. ``std_error`` is the standard error of the complex mean,
    ``sqrt((var Re + var Im) / M)``.
    """
    if outer_samples < 2:
        raise ValueError("outer_samples must be >= 2")
    gen = _rng.generator(seed, 2, 0)
    xi = gen.uniform(0.0, L, size=(outer_samples, dim))
    values = np.asarray(point_estimator(xi), float)
    if values.ndim == 1:
        values = values[:, None]
    k0 = 2.0 * math.pi / L
    out = {}
    for n in n_list:
        n = tuple(int(v) for v in n)
        phase = np.exp(-1j * k0 * (xi @ np.asarray(n, float)))
        samples = values * phase[:, None]
        mean = samples.mean(axis=0)
        var = samples.real.var(axis=0, ddof=1) + samples.imag.var(axis=0, ddof=1)
        out[n] = McEstimate(mean, np.sqrt(var / outer_samples), outer_samples)
    return out
