import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vortexflow.biot_savart import (
    DivergenceError,
    divergence_ratio,
    streamfunction,
    velocity_from_vorticity,
    velocity_via_streamfunction,
)
from vortexflow.spectral import (
    PeriodicGrid,
    SpectralField,
    curl,
    divergence,
    laplacian,
    random_field,
    sobolev_norm,
)

seeds = st.integers(0, 2**31 - 1)


def rel(a, b):
    return sobolev_norm(a - b) / sobolev_norm(b)


@pytest.mark.parametrize("dim", [2, 3])
def test_zero_vorticity(dim):
    g = PeriodicGrid(dim, 8)
    w = SpectralField.zeros(g, 1 if dim == 2 else 3)
    assert not np.any(streamfunction(w).coeffs)
    assert not np.any(velocity_from_vorticity(w).field.coeffs)


def test_streamfunction_single_mode():
    g = PeriodicGrid(3, 8)
    w = SpectralField.from_modes(g, {(1, 0, 0): np.ones(3)}, components=3)
    np.testing.assert_allclose(streamfunction(w).coeff((1, 0, 0)), -np.ones(3))


@given(st.sampled_from([2, 3]), seeds, st.floats(1.0, 8.0))
def test_laplacian_inverts_streamfunction(dim, seed, L):
    g = PeriodicGrid(dim, 16 if dim == 2 else 8, L)
    w = random_field(g, 1 if dim == 2 else 3, seed, divergence_free=dim == 3)
    assert rel(laplacian(streamfunction(w)), w) < 1e-12


def test_2d_single_mode():
    g = PeriodicGrid(2, 16)
    w = SpectralField.from_modes(g, {(1, 0): 1.0})
    u = velocity_from_vorticity(w)
    np.testing.assert_allclose(u.field.coeff((1, 0)), [0.0, -1j], atol=1e-16)
    assert curl(u.field).coeff((1, 0))[0] == pytest.approx(1.0)


def test_3d_single_mode():
    g = PeriodicGrid(3, 8)
    w = SpectralField.from_modes(g, {(0, 0, 1): np.array([1.0, 1j, 0.0])}, components=3)
    u = velocity_from_vorticity(w)
    np.testing.assert_allclose(u.field.coeff((0, 0, 1)), [1.0, 1j, 0.0], atol=1e-16)
    n = np.array([0, 0, 1])
    np.testing.assert_allclose(1j * g.k0 * np.cross(n, u.field.coeff((0, 0, 1))), w.coeff((0, 0, 1)))


@given(st.sampled_from([2, 3]), seeds)
def test_round_trip_and_incompressibility(dim, seed):
    g = PeriodicGrid(dim, 16 if dim == 2 else 8)
    w = random_field(g, 1 if dim == 2 else 3, seed, divergence_free=dim == 3)
    u = velocity_from_vorticity(w)
    assert u.divergence_free
    assert rel(curl(u.field), w) < 1e-12
    assert np.max(np.abs(divergence(u.field).coeffs)) < 1e-13


@given(st.sampled_from([2, 3]), seeds)
def test_streamfunction_route_agrees(dim, seed):
    g = PeriodicGrid(dim, 16 if dim == 2 else 8)
    w = random_field(g, 1 if dim == 2 else 3, seed, divergence_free=dim == 3)
    a = velocity_from_vorticity(w).field
    b = velocity_via_streamfunction(w).field
    assert rel(b, a) < 1e-13


def test_divergent_3d_vorticity_rejected():
    g = PeriodicGrid(3, 8)
    w = random_field(g, 3, 0)
    assert divergence_ratio(w) > 1e-3
    with pytest.raises(DivergenceError):
        velocity_from_vorticity(w)
    velocity_from_vorticity(w, check=False)


def test_max_speed_of_single_mode():
    g = PeriodicGrid(2, 32)
    w = SpectralField.from_modes(g, {(1, 0): 0.5})  # w = cos x, u = (0, sin x)
    assert velocity_from_vorticity(w).max_speed() == pytest.approx(1.0, rel=1e-12)
