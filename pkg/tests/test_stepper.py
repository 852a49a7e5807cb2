import math
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from vortexflow.biot_savart import velocity_from_vorticity
from vortexflow.spectral import (
    ComponentError,
    PeriodicGrid,
    SpectralField,
    curl,
    divergence,
    random_field,
    sobolev_norm,
)
from vortexflow.stepper import (
    CFLError,
    OracleSolution,
    SolverConfig,
    default_substeps,
    deterministic_convergence_study,
    frozen_linear_step,
    initial_state,
    one_step_study,
    perturbed_taylor_green,
    reference_solution,
    run_deterministic,
    stokes_exact_solution,
    taylor_green_solution,
    time_reversed,
)


def zero_velocity(grid):
    return lambda c: np.zeros((grid.dim,) + c.shape[1:], dtype=np.complex128)


def rel(a, b):
    return sobolev_norm(a - b) / sobolev_norm(b)


def test_config_validation(grid2):
    for bad in (dict(sigma=0.0), dict(horizon=-1.0), dict(outer_steps=0), dict(inner_substeps=0)):
        kw = dict(sigma=1.0, horizon=1.0, outer_steps=4, grid=grid2) | bad
        with pytest.raises(ValueError):
            SolverConfig(**kw)
    cfg = SolverConfig(0.5, 2.0, 8, grid2)
    assert cfg.h == 0.25 and cfg.nu == 0.125


@given(st.floats(0.1, 2.0), st.floats(0.01, 1.0), st.floats(1.0, 10.0))
def test_pure_heat_step_is_exact(sigma, h, L):
    g = PeriodicGrid(2, 16, L)
    cfg = SolverConfig(sigma, 1.0, 1, g, velocity_operator=zero_velocity(g))
    phi = random_field(g, 1, 0)
    out = frozen_linear_step(initial_state(phi, cfg), h, cfg).omega
    factor = np.exp(-0.5 * sigma**2 * g.k2 * h) * cfg.mask
    np.testing.assert_allclose(out.coeffs, phi.coeffs * factor, atol=1e-15)


def test_stokes_step_with_constant_forcing():
    g = PeriodicGrid(2, 16)
    phi = random_field(g, 1, 1, band=5)
    gc = random_field(g, 1, 2, band=5)
    cfg = SolverConfig(1.0, 1.0, 1, g, forcing=gc, velocity_operator=zero_velocity(g))
    out = frozen_linear_step(initial_state(phi, cfg), 0.3, cfg).omega
    exact = stokes_exact_solution(phi, gc, 1.0, 0.0, 0.3)
    assert rel(out, exact) < 1e-13


def test_stokes_run_with_oscillating_forcing():
    g = PeriodicGrid(2, 16)
    phi = random_field(g, 1, 3, band=5)
    gc = random_field(g, 1, 4, band=5)
    forward = lambda t: gc * math.cos(2.0 * t)  # noqa: E731
    cfg = SolverConfig(1.0, 1.0, 16, g, inner_substeps=32, forcing=forward, velocity_operator=zero_velocity(g))
    out = run_deterministic(phi, cfg)[-1].omega
    exact = stokes_exact_solution(phi, time_reversed(forward, 1.0), 1.0, 0.0, 1.0)
    assert rel(out, exact) < 1e-8


def test_stokes_closed_form_values():
    g = PeriodicGrid(2, 16)
    phi = SpectralField.from_modes(g, {(1, 0): 1.0})
    assert stokes_exact_solution(phi, None, 1.0, 0.0, 1.0).coeff((1, 0))[0] == pytest.approx(math.exp(-0.5))
    assert stokes_exact_solution(phi, None, 1.0, 0.7, 0.7).coeff((1, 0))[0] == 1.0
    gc = SpectralField.from_modes(g, {(1, 0): 0.3})
    zero = SpectralField.zeros(g)
    got = stokes_exact_solution(zero, gc, 1.0, 0.25, 1.0).coeff((1, 0))[0]
    assert got == pytest.approx(0.3 * (1 - math.exp(-0.5 * 0.75)) / 0.5, rel=1e-14)
    # callable forcing goes through quadrature and must agree with the constant case
    got_q = stokes_exact_solution(zero, lambda s: gc, 1.0, 0.25, 1.0).coeff((1, 0))[0]
    assert got_q == pytest.approx(got, rel=1e-12)


def test_time_reversal():
    f = lambda t: t  # noqa: E731
    assert time_reversed(f, 2.0)(0.5) == 1.5
    assert time_reversed(None, 1.0) is None


def test_taylor_green_fields():
    g = PeriodicGrid(2, 16)
    vel, w = taylor_green_solution(g, 0.0, 0.5)
    for n in [(1, 1), (1, -1), (-1, 1), (-1, -1)]:
        assert w.coeff(n)[0] == pytest.approx(-0.5)
    x1, x2 = g.coordinates()
    np.testing.assert_allclose(w.evaluate(np.stack([x1.ravel(), x2.ravel()], 1))[:, 0], (-2 * np.cos(x1) * np.cos(x2)).ravel(), atol=1e-14)
    assert not np.any(divergence(vel.field).coeffs)
    assert rel(curl(vel.field), w) < 1e-13
    assert rel(velocity_from_vorticity(w).field, vel.field) < 1e-14


def test_taylor_green_decay_general_period():
    g = PeriodicGrid(2, 16, L=3.0)
    _, w0 = taylor_green_solution(g, 0.0, 0.7)
    _, w1 = taylor_green_solution(g, 0.4, 0.7)
    assert sobolev_norm(w1) / sobolev_norm(w0) == pytest.approx(math.exp(-0.49 * g.k0**2 * 0.4))


def test_single_step_run_equals_one_step():
    g = PeriodicGrid(2, 16)
    phi = perturbed_taylor_green(g)
    cfg = SolverConfig(0.5, 0.2, 1, g)
    a = run_deterministic(phi, cfg)[-1].omega
    b = frozen_linear_step(initial_state(phi, cfg), 0.2, cfg).omega
    np.testing.assert_array_equal(a.coeffs, b.coeffs)


def test_taylor_green_run_tracks_exact_solution():
    g = PeriodicGrid(2, 16)
    _, w0 = taylor_green_solution(g, 0.0, 0.5)
    cfg = SolverConfig(0.5, 1.0, 8, g)
    traj = run_deterministic(w0, cfg)
    assert [s.t for s in traj] == pytest.approx(np.linspace(0, 1, 9))
    _, exact = taylor_green_solution(g, 1.0, 0.5)
    assert rel(traj[-1].omega, exact) < 1e-10
    assert np.max(np.abs(divergence(traj[-1].frozen_velocity.field).coeffs)) < 1e-11


def test_3d_step_keeps_vorticity_solenoidal():
    g = PeriodicGrid(3, 8)
    w = random_field(g, 3, 4, divergence_free=True, band=2)
    w = w * (2.0 * g.L**1.5 / sobolev_norm(w))
    cfg = SolverConfig(1.0, 0.5, 4, g)
    for s in run_deterministic(w, cfg):
        assert np.max(np.abs(divergence(s.omega).coeffs)) < 1e-12


def test_cfl_refusal():
    g = PeriodicGrid(2, 32)
    phi = perturbed_taylor_green(g) * 20.0
    cfg = SolverConfig(0.5, 1.0, 1, g, inner_substeps=1)
    with pytest.raises(CFLError) as info:
        frozen_linear_step(initial_state(phi, cfg), 1.0, cfg)
    assert info.value.courant > 1 and info.value.suggested > 1


def test_default_substeps_rule(grid2):
    assert default_substeps(0.1, 0.0, grid2) == 4
    assert default_substeps(0.5, 2.0, grid2) == math.ceil(0.5 * 16 * 2.0)


def _independent_rhs(grid, nu, mask):
    """Pseudo-spectral 2D vorticity right-hand side written directly against numpy.fft."""
    K = grid.K
    kx, ky = grid.wavevector
    k2 = grid.k2
    inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1), 0)

    def phys(c):
        return np.fft.irfftn(c, s=(K, K), axes=(0, 1)) * K**2

    def rhs(t, y):
        w = y.view(np.complex128).reshape(grid.spectral_shape) * mask
        ux, uy = phys(1j * ky * w * inv), phys(-1j * kx * w * inv)
        nl = -(ux * phys(1j * kx * w) + uy * phys(1j * ky * w))
        out = (-nu * k2 * w + np.fft.rfftn(nl) / K**2) * mask
        return out.reshape(-1).view(np.float64)

    return rhs


def test_reference_solver_matches_adaptive_ode_solver():
    g = PeriodicGrid(2, 8)
    phi = perturbed_taylor_green(g, 0.5, seed=2, band=2)
    cfg = SolverConfig(0.5, 1.0, 1, g)
    ours = reference_solution(phi, cfg, 0.5, 64)
    y0 = np.array(phi.coeffs[0] * cfg.mask).reshape(-1).view(np.float64)
    sol = solve_ivp(_independent_rhs(g, cfg.nu, cfg.mask), (0, 0.5), y0, method="DOP853", rtol=1e-12, atol=1e-14)
    theirs = sol.y[:, -1].view(np.complex128).reshape((1,) + g.spectral_shape)
    assert rel(ours, phi._new(theirs)) < 1e-9


def test_reference_solver_is_fourth_order():
    g = PeriodicGrid(2, 16)
    phi = perturbed_taylor_green(g, 0.4)
    cfg = SolverConfig(0.5, 1.0, 1, g)
    fine = reference_solution(phi, cfg, 0.5, 256)
    e1 = sobolev_norm(reference_solution(phi, cfg, 0.5, 8) - fine)
    e2 = sobolev_norm(reference_solution(phi, cfg, 0.5, 16) - fine)
    assert 12 < e1 / e2 < 20


def test_stokes_limit_study_is_saturated():
    g = PeriodicGrid(2, 16)
    phi = random_field(g, 1, 0, band=4)
    cfg = SolverConfig(1.0, 1.0, 1, g, velocity_operator=zero_velocity(g))
    exact = stokes_exact_solution(phi, None, 1.0, 0.0, 1.0)
    oracle = OracleSolution(exact, SpectralField.zeros(g, 2))
    w_rep, _ = deterministic_convergence_study(phi, cfg, [4, 8, 16], oracle=oracle)
    assert w_rep.saturated and not w_rep.passed


def test_halving_step_halves_error():
    g = PeriodicGrid(2, 16)
    phi = perturbed_taylor_green(g)
    cfg = SolverConfig(0.5, 1.0, 1, g)
    w_rep, u_rep = deterministic_convergence_study(phi, cfg, [8, 16, 32])
    for rep in (w_rep, u_rep):
        errs = [r.error_l2 for r in rep.rows]
        for a, b in zip(errs, errs[1:]):
            assert 1.5 <= a / b <= 2.5
        assert rep.passed


def test_one_step_slope_is_two():
    g = PeriodicGrid(2, 16)
    cfg = SolverConfig(0.5, 1.0, 1, g)
    w_rep, u_rep = one_step_study(perturbed_taylor_green(g), cfg, [0.2, 0.1, 0.05])
    assert w_rep.passed and u_rep.passed


def test_dealias_flag_changes_mask(grid2):
    assert SolverConfig(1, 1, 1, grid2).mask.sum() < SolverConfig(1, 1, 1, grid2, dealias=False).mask.sum()


def test_initial_state_rejects_wrong_components(grid2):
    cfg = SolverConfig(1, 1, 1, grid2)
    with pytest.raises(ComponentError):
        initial_state(random_field(grid2, 2, 0), cfg)

