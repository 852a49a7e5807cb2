"""Acceptance suite: one check per numbered criterion, each at its stated tolerance.

Every check returns a verdict, a detail string and a digest of its numeric
output. The first pass runs with ``VORTEXFLOW_THREADS=8``; criterion 11 reruns
all of them with one thread and compares digests. A PASS/FAIL line per
criterion is printed at the end of the session (see ``conftest.py``).
"""
from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, replace

import numpy as np
import pytest

from vortexflow.biot_savart import velocity_from_vorticity
from vortexflow.feynman_kac import (
    FrozenVelocity,
    ZeroVelocity,
    mc_fourier_coefficients,
    vorticity_point_estimate,
    weight_mean,
)
from vortexflow.snse import (
    BrownianPath,
    build_noise,
    mean_square_order_study,
    moment_monitor,
    one_step_error_probe,
    run_snse,
)
from vortexflow.spectral import (
    PeriodicGrid,
    SpectralField,
    curl,
    divergence,
    gradient,
    laplacian,
    leray_project,
    random_field,
    sobolev_norm,
    to_physical,
)
from vortexflow.stepper import (
    SolverConfig,
    deterministic_convergence_study,
    frozen_linear_step,
    initial_state,
    one_step_study,
    perturbed_taylor_green,
    run_deterministic,
    stokes_exact_solution,
    taylor_green_solution,
    time_reversed,
)

pytestmark = pytest.mark.acceptance

RESULTS: dict[str, tuple[bool, str]] = {}
DIGESTS: dict[str, str] = {}


@dataclass
class Outcome:
    ok: bool
    detail: str
    digest: str


def digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a)).tobytes())
    return h.hexdigest()


def rel(a: SpectralField, b: SpectralField) -> float:
    return sobolev_norm(a - b) / sobolev_norm(b)


def zero_velocity(grid):
    return lambda c: np.zeros((grid.dim,) + c.shape[1:], dtype=np.complex128)


def _rms(field: SpectralField, rms: float) -> SpectralField:
    g = field.grid
    return field * (rms * g.L ** (g.dim / 2) / sobolev_norm(field))


def _report_digest(*reports) -> str:
    return digest(*[[(r.h, r.error_l2, r.std_error) for r in rep.rows] for rep in reports])


# 1 ------------------------------------------------------------------------------
def biot_savart_round_trip() -> Outcome:
    worst_curl, worst_div, vals = 0.0, 0.0, []
    for dim in (2, 3):
        g = PeriodicGrid(dim, 32)
        for seed in range(200):
            w = random_field(g, 1 if dim == 2 else 3, 10_000 * dim + seed, divergence_free=dim == 3)
            u = velocity_from_vorticity(w).field
            e_curl = rel(curl(u), w)
            e_div = float(np.max(np.abs(to_physical(divergence(u)))))
            worst_curl, worst_div = max(worst_curl, e_curl), max(worst_div, e_div)
            vals.append((e_curl, e_div))
    ok = worst_curl < 1e-11 and worst_div < 1e-12
    return Outcome(ok, f"400 fields: max rel curl error {worst_curl:.2e} (<1e-11), max |div u| {worst_div:.2e} (<1e-12)", digest(vals))


# 2 ------------------------------------------------------------------------------
def calculus_identities() -> Outcome:
    worst = dict(idempotent=0.0, kills_gradients=0.0, div_curl=0.0, curl_curl=0.0)
    for dim, K in ((2, 32), (3, 16)):
        g = PeriodicGrid(dim, K)
        for seed in range(50):
            v = random_field(g, dim, seed)
            p = leray_project(v)
            worst["idempotent"] = max(worst["idempotent"], rel(leray_project(p), p))
            grad = gradient(random_field(g, 1, seed + 1000))
            worst["kills_gradients"] = max(worst["kills_gradients"], sobolev_norm(leray_project(grad)) / sobolev_norm(grad))
            if dim == 3:
                c = curl(v)
                worst["div_curl"] = max(worst["div_curl"], sobolev_norm(divergence(c)) / sobolev_norm(c, 1))
                psi = random_field(g, 3, seed + 2000, divergence_free=True)
                lhs = curl(-curl(psi))
            else:
                # 2D streamfunction: u = (-d2 psi, d1 psi), then the scalar curl of u is lap psi
                psi = random_field(g, 1, seed + 2000)
                gp = gradient(psi).coeffs
                u = psi._new(np.stack([-gp[1], gp[0]]))
                worst["div_curl"] = max(worst["div_curl"], sobolev_norm(divergence(u)) / sobolev_norm(u, 1))
                lhs = curl(u)
            worst["curl_curl"] = max(worst["curl_curl"], rel(lhs, laplacian(psi)))
    ok = all(v < 1e-11 for v in worst.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " (all <1e-11)"
    return Outcome(ok, detail, digest(list(worst.values())))


# 3 ------------------------------------------------------------------------------
def stokes_oracle() -> Outcome:
    g = PeriodicGrid(2, 16)
    phi = _rms(random_field(g, 1, 3, band=5), 1.0)
    gc = _rms(random_field(g, 1, 4, band=5), 1.0)
    forward = lambda t: gc * math.cos(2.0 * t)  # noqa: E731
    cfg = SolverConfig(1.0, 1.0, 16, g, inner_substeps=32, forcing=forward, velocity_operator=zero_velocity(g))
    phi = SpectralField(g, phi.coeffs * cfg.mask, check=False)
    got = run_deterministic(phi, cfg)[-1].omega
    exact = stokes_exact_solution(phi, time_reversed(forward, 1.0), 1.0, 0.0, 1.0)
    err = rel(got, exact)
    return Outcome(err < 1e-8, f"relative error {err:.2e} (<1e-8)", digest(got.coeffs))


# 4 ------------------------------------------------------------------------------
def taylor_green_order() -> Outcome:
    g = PeriodicGrid(2, 32)
    _, w0 = taylor_green_solution(g, 0.0, 0.5)
    cfg = SolverConfig(0.5, 1.0, 1, g)
    w_rep, u_rep = deterministic_convergence_study(w0, cfg, [8, 16, 32, 64], "taylor-green", (0.8, 1.2))
    ok = w_rep.passed and u_rep.passed
    worst = max(r.error_l2 for r in w_rep.rows)
    detail = f"orders w {w_rep.fitted_order:.3f}, u {u_rep.fitted_order:.3f} (window [0.8, 1.2])"
    if w_rep.saturated or u_rep.saturated:
        detail += f"; errors at round-off (max {worst:.1e}), the scheme is exact on this vortex so no slope exists"
    return Outcome(ok, detail, _report_digest(w_rep, u_rep))


def perturbed_taylor_green_order() -> Outcome:
    g = PeriodicGrid(2, 32)
    cfg = SolverConfig(0.5, 1.0, 1, g)
    w_rep, u_rep = deterministic_convergence_study(perturbed_taylor_green(g, 0.2, 0), cfg, [8, 16, 32, 64], "reference", (0.8, 1.2))
    ok = w_rep.passed and u_rep.passed
    detail = (f"perturbed vortex vs unfrozen reference: orders w {w_rep.fitted_order:.3f} "
              f"ci {np.round(w_rep.order_ci, 3).tolist()}, u {u_rep.fitted_order:.3f} (window [0.8, 1.2])")
    return Outcome(ok, detail, _report_digest(w_rep, u_rep))


# 5 ------------------------------------------------------------------------------
def divergence_free_3d() -> Outcome:
    g = PeriodicGrid(3, 16)
    w0 = _rms(random_field(g, 3, 5, band=4, divergence_free=True), 2.0)
    cfg = SolverConfig(1.0, 1.0, 32, g)
    traj = run_deterministic(w0, cfg)
    divs = [float(np.max(np.abs(to_physical(divergence(s.omega))))) for s in traj]
    worst = max(divs)
    return Outcome(worst < 1e-10, f"max |div w| over {len(traj)} states {worst:.2e} (<1e-10)", digest(traj[-1].omega.coeffs, divs))


# 6 ------------------------------------------------------------------------------
def one_step_orders() -> Outcome:
    g = PeriodicGrid(2, 16)
    cfg = SolverConfig(0.5, 1.0, 1, g)
    phi = perturbed_taylor_green(g)
    w_rep, u_rep = one_step_study(phi, cfg, [0.2, 0.1, 0.05, 0.025], (1.7, 2.3))
    noise = build_noise(g, [(1, 0), (1, 2)], 0.5, seed=2)
    probe = one_step_error_probe(phi, [0.1, 0.05, 0.025, 0.0125], cfg, noise, 64, seed=2)
    reps = [w_rep, u_rep, probe.conditional_mean, probe.mean_square]
    ok = all(r.passed for r in reps)
    detail = (f"deterministic w {w_rep.fitted_order:.3f}, u {u_rep.fitted_order:.3f} in [1.7, 2.3]; "
              f"conditional mean {probe.conditional_mean.fitted_order:.3f} in [1.7, 2.3]; "
              f"mean square {probe.mean_square.fitted_order:.3f} in [1.3, 1.7]")
    return Outcome(ok, detail, _report_digest(*reps))


# 7 ------------------------------------------------------------------------------
def snse_mean_square_order() -> Outcome:
    g = PeriodicGrid(2, 16)
    cfg = SolverConfig(0.5, 1.0, 1, g)
    noise = build_noise(g, [(1, 0), (1, 2)], 0.5, seed=1)
    rep = mean_square_order_study(perturbed_taylor_green(g), cfg, noise, [8, 16, 32, 64], 64, seed=1,
                                  reference_steps=256, window=(0.75, 1.25))
    detail = f"slope {rep.fitted_order:.3f} ci {np.round(rep.order_ci, 3).tolist()} (window [0.75, 1.25])"
    return Outcome(rep.passed, detail, _report_digest(rep))


# 8 ------------------------------------------------------------------------------
def feynman_kac_consistency() -> Outcome:
    parts, vals = [], []
    # (a) Stokes point values
    g = PeriodicGrid(2, 16)
    phi = _rms(random_field(g, 1, 3, band=2), 1.0)
    gc = _rms(random_field(g, 1, 4, band=2), 1.0)
    forward = lambda t: gc * math.cos(2.0 * t)  # noqa: E731
    backward = time_reversed(forward, 1.0)
    exact_field = stokes_exact_solution(phi, backward, 1.0, 0.0, 1.0)
    src = lambda s, X: backward(s).evaluate(X)  # noqa: E731
    ok_a = True
    for point in ([1.0, 2.0], [4.0, 0.5]):
        exact = exact_field.evaluate([point])[0, 0]
        est = vorticity_point_estimate(ZeroVelocity(2), src, phi, point, 100_000, 11, 1.0, 0.0, 1.0, 1 / 1024)
        z = (est.value[0] - exact) / est.std_error[0]
        ok_a &= abs(z) <= 3
        parts.append(f"Stokes at {point}: z={z:+.2f}")
        vals += [est.value, est.std_error]
    # (b) two representations of one frozen step
    phi_b = perturbed_taylor_green(g, 0.3, seed=1)
    cfg = SolverConfig(0.5, 0.2, 1, g)
    state = initial_state(phi_b, cfg)
    point = [1.0, 2.0]
    exact = frozen_linear_step(state, 0.2, cfg).omega.evaluate([point])[0, 0]
    provider = FrozenVelocity.of(state.frozen_velocity)
    a = vorticity_point_estimate(provider, None, state.omega, point, 40_000, 12, 0.5, 0.0, 0.2, 0.2 / 64, "driftless")
    b = vorticity_point_estimate(provider, None, state.omega, point, 40_000, 12, 0.5, 0.0, 0.2, 0.2 / 64, "plain")
    gap = abs(a.value[0] - b.value[0]) / math.hypot(a.std_error[0], b.std_error[0])
    ok_b = gap <= 3
    parts.append(f"driftless vs plain gap {gap:.2f} sigma (se {a.std_error[0]:.1e} vs {b.std_error[0]:.1e}; "
                 f"step value z={(a.value[0] - exact) / a.std_error[0]:+.2f})")
    vals += [a.value, b.value]
    # (c) unit-mean weight
    q = weight_mean(provider, point, 40_000, 13, 0.5, 0.0, 0.5, 0.5 / 128)
    zq = (q.value[0] - 1.0) / q.std_error[0]
    ok_c = abs(zq) <= 3
    parts.append(f"E[Q]-1 z={zq:+.2f}")
    vals += [q.value]
    return Outcome(ok_a and ok_b and ok_c, "; ".join(parts), digest(*vals))


# 9 ------------------------------------------------------------------------------
def mc_fourier() -> Outcome:
    g = PeriodicGrid(2, 16)
    field = SpectralField.from_modes(g, {(1, 0): 0.5})
    modes = [(1, 0), (-1, 0), (0, 1), (1, 1), (2, 0), (0, -2), (3, -1)]
    est = mc_fourier_coefficients(field.evaluate, modes, g.L, 2, 20_000, seed=13)
    zs = {n: abs(e.value[0] - (0.5 if n in ((1, 0), (-1, 0)) else 0.0)) / e.std_error[0] for n, e in est.items()}
    ok = all(z <= 3 for z in zs.values())
    detail = f"w(+-1,0) = {est[(1, 0)].value[0].real:.4f}, {est[(-1, 0)].value[0].real:.4f} (exact 0.5); max |z| over {len(modes)} modes {max(zs.values()):.2f} (<=3)"
    return Outcome(ok, detail, digest([e.value for e in est.values()]))


# 10 -----------------------------------------------------------------------------
def moment_bound() -> Outcome:
    g = PeriodicGrid(2, 16)
    base = SolverConfig(0.5, 2.0, 1, g)
    noise = build_noise(g, [(1, 0), (1, 2)], 0.5, seed=14)
    phi = perturbed_taylor_green(g)
    sups, consts, moments = [], [], []
    for n in (16, 32):
        cfg = replace(base, outer_steps=n)
        trajs = [run_snse(phi, cfg, noise, path=BrownianPath.generate(2, 32, 2.0 / 32, 14, m))[0] for m in range(64)]
        mon = moment_monitor(trajs, noise, cfg, p=1, betas=(1e-3, 1e-2, 1e-1))
        sups.append(mon.sup_moment)
        consts.append(mon.bound_constant)
        moments.append(mon.moment)
    ratio = sups[0] / sups[1]
    ok = 0.5 <= ratio <= 2.0 and all(math.isfinite(c) for c in consts)
    detail = f"sup_k E|w_k|^2 = {sups[0]:.3f} (h) vs {sups[1]:.3f} (h/2), ratio {ratio:.3f} in [0.5, 2]; bound constants {consts[0]:.3f}, {consts[1]:.3f}"
    return Outcome(ok, detail, digest(*moments))


CRITERIA = {
    "1": ("Biot-Savart round trip", biot_savart_round_trip, 10),
    "2": ("projection and calculus identities", calculus_identities, 60),
    "3": ("Stokes oracle", stokes_oracle, 5),
    "4": ("deterministic global order on Taylor-Green", taylor_green_order, 120),
    "4b": ("supplement: global order on perturbed Taylor-Green", perturbed_taylor_green_order, 120),
    "5": ("3D divergence-free preservation", divergence_free_3d, 120),
    "6": ("one-step orders", one_step_orders, 300),
    "7": ("stochastic mean-square global order", snse_mean_square_order, 600),
    "8": ("Feynman-Kac consistency", feynman_kac_consistency, 300),
    "9": ("Monte Carlo Fourier coefficients", mc_fourier, 60),
    "10": ("moment-bound monitor", moment_bound, 300),
}


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


@pytest.mark.parametrize("cid", list(CRITERIA))
def test_criterion(cid, monkeypatch):
    name, fn, limit = CRITERIA[cid]
    monkeypatch.setenv("VORTEXFLOW_THREADS", "8")
    out, dt = _timed(fn)
    ok = out.ok and dt < limit
    line = f"{name}: {out.detail}; {dt:.1f}s (limit {limit}s)"
    RESULTS[cid] = (ok, line)
    DIGESTS[cid] = out.digest
    assert ok, line


def test_criterion_11_determinism(monkeypatch):
    """Rerun every check with one worker thread and compare output digests."""
    mismatched = []
    for cid, (_, fn, _) in CRITERIA.items():
        if cid not in DIGESTS:
            monkeypatch.setenv("VORTEXFLOW_THREADS", "8")
            DIGESTS[cid] = fn().digest
        monkeypatch.setenv("VORTEXFLOW_THREADS", "1")
        if fn().digest != DIGESTS[cid]:
            mismatched.append(cid)
    ok = not mismatched
    detail = f"{len(CRITERIA) - len(mismatched)}/{len(CRITERIA)} checks byte-identical with 8 and 1 threads"
    if mismatched:
        detail += f"; differing: {mismatched}"
    RESULTS["11"] = (ok, f"determinism: {detail}")
    assert ok, detail
