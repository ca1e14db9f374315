"""Grid oracle solvers: heat flow, continuity transport, Lyapunov energy."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swarmdens import (
    ControlLaw,
    Domain,
    GridSolverConfig,
    ScalarField,
    cfl_limit,
    continuity_step,
    control_velocity_on_grid,
    gaussian_mixture_field,
    heat_stability_limit,
    heat_step,
    l1_distance,
    lyapunov,
    uniform_field,
)

UNIT = Domain()


def centered_modes(n, seed, kmax=4):
    """Random smooth zero-mean field from Neumann-compatible cosine modes."""
    rng = np.random.default_rng(seed)
    xs = (np.arange(n) + 0.5) / n
    field = np.zeros((n, n))
    for kx in range(kmax + 1):
        for ky in range(kmax + 1):
            if kx == 0 and ky == 0:
                continue
            c = rng.normal()
            field += c * np.outer(np.cos(ky * math.pi * xs), np.cos(kx * math.pi * xs))
    return field


def test_stability_limit_formula():
    assert heat_stability_limit(0.1, 0.1, 2.0) == pytest.approx(0.25 * 0.01 / 2.0)
    # anisotropic cells tighten the bound through the smaller spacing
    assert heat_stability_limit(0.1, 0.05, 1.0) < heat_stability_limit(0.1, 0.1, 1.0)


def test_config_validation():
    with pytest.raises(ValueError, match="unstable"):
        GridSolverConfig(dx=0.1, dy=0.1, dt=1.0, D=1.0)
    with pytest.raises(ValueError, match="scheme"):
        GridSolverConfig(dx=0.1, dy=0.1, dt=1e-4, D=1.0, scheme="magic")
    with pytest.raises(ValueError):
        GridSolverConfig(dx=0.0, dy=0.1, dt=1e-4, D=1.0)
    GridSolverConfig(dx=0.1, dy=0.1, dt=heat_stability_limit(0.1, 0.1, 1.0), D=1.0)


def test_heat_step_uniform_fixed_point():
    phi = np.full((12, 9), 0.7)
    out = heat_step(phi, 1e-5, 0.1, 0.1, 5.0)
    np.testing.assert_array_equal(out, phi)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(3, 24), seed=st.integers(0, 2**31))
def test_heat_step_conserves_mass(n, seed):
    rng = np.random.default_rng(seed)
    phi = rng.normal(size=(n, n))
    dx = 1.0 / n
    dt = 0.9 * heat_stability_limit(dx, dx, 1.0)
    out = heat_step(phi, dt, dx, dx, 1.0)
    assert abs(out.sum() - phi.sum()) * dx * dx < 1e-12 * max(1.0, abs(phi).sum())


def test_heat_step_smooths_extremes():
    rng = np.random.default_rng(1)
    phi = rng.normal(size=(16, 16))
    dx = 1.0 / 16
    out = heat_step(phi, 0.9 * heat_stability_limit(dx, dx, 1.0), dx, dx, 1.0)
    assert out.max() <= phi.max() + 1e-12
    assert out.min() >= phi.min() - 1e-12


def run_heat(phi, steps, dt, dx, dy, D):
    for _ in range(steps):
        phi = heat_step(phi, dt, dx, dy, D)
    return phi


def test_eigenmode_decay_rate():
    # cos(pi x / L) decays by e^{-1} after t = 1/(D (pi/L)^2), within 2%
    n, D = 64, 5.0
    dx = 1.0 / n
    xs = (np.arange(n) + 0.5) * dx
    mode = np.tile(np.cos(math.pi * xs), (n, 1))
    lam = D * math.pi**2
    dt = 0.5 * heat_stability_limit(dx, dx, D)
    steps = int(round(1.0 / (lam * dt)))
    final = run_heat(mode.copy(), steps, dt, dx, dx, D)
    amplitude = float((final * mode).sum() / (mode * mode).sum())
    expected = math.exp(-lam * steps * dt)
    assert abs(amplitude - expected) / expected < 0.02


def test_lyapunov_uniform_is_zero():
    assert lyapunov(uniform_field(UNIT, 32)) == 0.0


def test_lyapunov_cosine_hand_value():
    # V = 0.5 int (pi sin(pi x))^2 = pi^2 / 4 on the unit square
    n = 128
    xs = (np.arange(n) + 0.5) / n
    phi = ScalarField(UNIT, np.tile(np.cos(math.pi * xs), (n, 1)))
    assert lyapunov(phi) == pytest.approx(math.pi**2 / 4.0, rel=0.01)


def test_lyapunov_monotone_under_heat_flow():
    n, D = 32, 1.0
    dx = 1.0 / n
    dt = 0.9 * heat_stability_limit(dx, dx, D)
    phi = centered_modes(n, seed=7)
    v_prev = lyapunov(ScalarField(UNIT, phi))
    for _ in range(400):
        phi = heat_step(phi, dt, dx, dx, D)
        v = lyapunov(ScalarField(UNIT, phi))
        assert v <= v_prev * (1 + 1e-12)
        v_prev = v


def test_zero_mean_error_dies_out():
    # the closed-loop target: any zero-mean disturbance decays essentially to nothing
    n, D = 16, 5.0
    dx = 1.0 / n
    dt = heat_stability_limit(dx, dx, D)
    phi = centered_modes(n, seed=3)
    initial = np.abs(phi).max()
    phi = run_heat(phi, 1000, dt, dx, dx, D)
    assert np.abs(phi).max() < 1e-3 * initial


def test_nonzero_mean_error_keeps_its_bias():
    # mean component is untouched by diffusion: the field flattens to c/area, not 0
    n, D = 16, 5.0
    dx = 1.0 / n
    c = 0.3
    phi = c + centered_modes(n, seed=5)
    assert np.isclose(phi.mean(), c)  # unit square: mean = integral
    dt = heat_stability_limit(dx, dx, D)
    phi = run_heat(phi, 1000, dt, dx, dx, D)
    assert np.abs(phi - c).max() < 1e-3
    assert np.abs(phi).min() > 100.0 * 1e-3


def test_continuity_zero_velocity_fixed_point():
    rng = np.random.default_rng(2)
    f = rng.uniform(0.0, 2.0, size=(10, 14))
    z = np.zeros_like(f)
    out = continuity_step(f, z, z, 1e-3, 0.1, 0.1)
    np.testing.assert_array_equal(out, f)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(4, 24),
    seed=st.integers(0, 2**31),
    scheme=st.sampled_from(["upwind", "central"]),
)
def test_continuity_conserves_mass(n, seed, scheme):
    rng = np.random.default_rng(seed)
    f = rng.uniform(0.0, 3.0, size=(n, n))
    vx = rng.uniform(-1.0, 1.0, size=(n, n))
    vy = rng.uniform(-1.0, 1.0, size=(n, n))
    dx = 1.0 / n
    dt = 0.8 * cfl_limit(vx, vy, dx, dx)
    out = continuity_step(f, vx, vy, dt, dx, dx, scheme=scheme)
    assert abs(out.sum() - f.sum()) * dx * dx < 1e-12 * f.sum()


@settings(max_examples=30, deadline=None)
@given(n=st.integers(4, 20), seed=st.integers(0, 2**31))
def test_upwind_preserves_positivity(n, seed):
    rng = np.random.default_rng(seed)
    f = rng.uniform(0.0, 2.0, size=(n, n))
    vx = rng.uniform(-2.0, 2.0, size=(n, n))
    vy = rng.uniform(-2.0, 2.0, size=(n, n))
    dx = 1.0 / n
    dt = cfl_limit(vx, vy, dx, dx)
    out = continuity_step(f, vx, vy, dt, dx, dx, scheme="upwind")
    assert out.min() >= -1e-15


def test_continuity_rejects_cfl_violation():
    f = np.ones((8, 8))
    vx = np.full((8, 8), 2.0)
    vy = np.zeros((8, 8))
    dx = 1.0 / 8
    with pytest.raises(ValueError, match="CFL"):
        continuity_step(f, vx, vy, 10.0 * cfl_limit(vx, vy, dx, dx), dx, dx)


def test_continuity_advects_downstream():
    # a bump in a uniform rightward wind moves right (upwind donor cells)
    n = 32
    dx = 1.0 / n
    xs = (np.arange(n) + 0.5) * dx
    f = np.tile(np.exp(-((xs - 0.4) ** 2) / 0.004), (n, 1))
    vx = np.full((n, n), 1.0)
    vy = np.zeros((n, n))
    dt = 0.5 * cfl_limit(vx, vy, dx, dx)
    out = f
    for _ in range(10):
        out = continuity_step(out, vx, vy, dt, dx, dx)
    before = (f * xs[None, :]).sum() / f.sum()
    after = (out * xs[None, :]).sum() / out.sum()
    assert after > before + 5 * dt


def test_l1_distance():
    a = ScalarField(UNIT, np.full((4, 4), 1.0))
    b = ScalarField(UNIT, np.full((4, 4), 0.25))
    assert l1_distance(a, b) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        l1_distance(a, ScalarField(UNIT, np.zeros((8, 8))))


def test_grid_velocity_zero_at_tracking():
    f = gaussian_mixture_field(UNIT, [(0.5, 0.5)], 0.2, nx=32)
    law = ControlLaw(D=5.0, f_floor=1e-2)
    vx, vy = control_velocity_on_grid(f, f, law)
    np.testing.assert_array_equal(vx, 0.0)
    np.testing.assert_array_equal(vy, 0.0)


def test_grid_velocity_speed_cap():
    f = gaussian_mixture_field(UNIT, [(0.3, 0.5)], 0.1, nx=32)
    g = gaussian_mixture_field(UNIT, [(0.7, 0.5)], 0.1, nx=32)
    law = ControlLaw(D=5.0, f_floor=1e-2, v_max=0.5)
    vx, vy = control_velocity_on_grid(f, g, law)
    assert np.hypot(vx, vy).max() <= 0.5 * (1 + 1e-12)


def cosine_density(n, coeffs):
    """Positive smooth field from Neumann-compatible cosine modes.

    Zero normal slope at the walls, matching the closed-loop boundary
    condition both solvers assume.
    """
    xs = (np.arange(n) + 0.5) / n
    raw = np.ones((n, n))
    for (kx, ky), a in coeffs.items():
        raw += a * np.outer(np.cos(ky * math.pi * xs), np.cos(kx * math.pi * xs))
    assert raw.min() > 0.0
    return ScalarField(UNIT, raw).normalize()


def test_transformation_to_heat_equation():
    # continuity transport under the feedback velocity advances f exactly like
    # heat flow advances Phi, up to the spatial discretization error
    n = 64
    f = cosine_density(n, {(1, 1): 0.35, (2, 0): 0.2, (0, 1): -0.15})
    fd = cosine_density(n, {(1, 0): -0.3, (2, 1): 0.15, (1, 2): 0.1})
    law = ControlLaw(D=5.0, f_floor=1e-9)
    vx, vy = control_velocity_on_grid(f, fd, law)
    dx = f.dx
    dt = min(0.5 * cfl_limit(vx, vy, dx, dx), 0.5 * heat_stability_limit(dx, dx, law.D))
    f1 = continuity_step(f.samples, vx, vy, dt, dx, dx, scheme="central")
    phi0 = f.samples - fd.samples
    phi1 = heat_step(phi0, dt, dx, dx, law.D)
    lhs = (f1 - f.samples) / dt
    rhs = (phi1 - phi0) / dt
    rel = np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs)
    assert rel < 0.05
