"""Grid solvers used to cross-check the particle simulation.

Two explicit solvers on the same cell-centered grid as ScalarField:

* a five-point heat step for the error Phi, which the feedback law is
  supposed to make the swarm follow, and
* a conservative flux-form step for the continuity equation
  df/dt = -div(v f), which the swarm density obeys by construction.

Both use zero-flux walls (mirrored ghost cells / zeroed wall fluxes),
matching the reflecting boundaries of the particle model. The
continuity step telescopes, so total mass is conserved to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import ControlLaw
from .fields import ScalarField, grid_gradient

__all__ = [
    "GridSolverConfig",
    "heat_stability_limit",
    "heat_step",
    "cfl_limit",
    "continuity_step",
    "lyapunov",
    "l1_distance",
    "control_velocity_on_grid",
]


def heat_stability_limit(dx: float, dy: float, D: float) -> float:
    """Largest stable explicit time step, 0.25*dx^2/D on square cells."""
    return 0.5 / (D * (1.0 / dx**2 + 1.0 / dy**2))


@dataclass(frozen=True)
class GridSolverConfig:
    """Grid spacing, time step, and scheme for the oracle solvers."""

    dx: float
    dy: float
    dt: float
    D: float
    scheme: str = "upwind"

    def __post_init__(self):
        for name in ("dx", "dy", "dt", "D"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        limit = heat_stability_limit(self.dx, self.dy, self.D)
        if self.dt > limit * (1 + 1e-12):
            raise ValueError(
                f"dt={self.dt:g} unstable for diffusion; limit is {limit:g}"
            )
        if self.scheme not in ("upwind", "central"):
            raise ValueError(f"scheme must be 'upwind' or 'central', got {self.scheme!r}")


def heat_step(phi: np.ndarray, dt: float, dx: float, dy: float, D: float) -> np.ndarray:
    """One explicit step of dPhi/dt = D * lap(Phi) with zero-flux walls."""
    p = np.pad(phi, 1, mode="edge")
    lap = (p[1:-1, 2:] - 2 * phi + p[1:-1, :-2]) / dx**2
    lap += (p[2:, 1:-1] - 2 * phi + p[:-2, 1:-1]) / dy**2
    return phi + dt * D * lap


def cfl_limit(vx: np.ndarray, vy: np.ndarray, dx: float, dy: float) -> float:
    """Largest advective time step, 0.5 * min(dx/|vx|, dy/|vy|)."""
    sx = float(np.abs(vx).max())
    sy = float(np.abs(vy).max())
    out = np.inf
    if sx > 0:
        out = min(out, 0.5 * dx / sx)
    if sy > 0:
        out = min(out, 0.5 * dy / sy)
    return out


def continuity_step(
    f: np.ndarray,
    vx: np.ndarray,
    vy: np.ndarray,
    dt: float,
    dx: float,
    dy: float,
    scheme: str = "upwind",
) -> np.ndarray:
    """One conservative step of df/dt = -div(v f).

    Face velocities average the two adjacent cell centers; wall fluxes
    are zero. "upwind" takes the donor cell's density at each face,
    "central" the face average. Raises if the CFL bound is violated.
    """
    if dt > cfl_limit(vx, vy, dx, dy) * (1 + 1e-12):
        raise ValueError(f"dt={dt:g} violates the CFL bound {cfl_limit(vx, vy, dx, dy):g}")
    ny, nx = f.shape
    ux = 0.5 * (vx[:, :-1] + vx[:, 1:])
    uy = 0.5 * (vy[:-1, :] + vy[1:, :])
    if scheme == "central":
        flux_x = ux * 0.5 * (f[:, :-1] + f[:, 1:])
        flux_y = uy * 0.5 * (f[:-1, :] + f[1:, :])
    elif scheme == "upwind":
        flux_x = np.where(ux > 0, ux * f[:, :-1], ux * f[:, 1:])
        flux_y = np.where(uy > 0, uy * f[:-1, :], uy * f[1:, :])
    else:
        raise ValueError(f"scheme must be 'upwind' or 'central', got {scheme!r}")
    fx = np.zeros((ny, nx + 1))
    fy = np.zeros((ny + 1, nx))
    fx[:, 1:-1] = flux_x
    fy[1:-1, :] = flux_y
    return f - dt * ((fx[:, 1:] - fx[:, :-1]) / dx + (fy[1:, :] - fy[:-1, :]) / dy)


def lyapunov(phi: ScalarField) -> float:
    """Energy 0.5 * integral of |grad(Phi)|^2, by central differences."""
    gx, gy = grid_gradient(phi)
    return 0.5 * float((gx**2 + gy**2).sum()) * phi.cell_area


def l1_distance(a: ScalarField, b: ScalarField) -> float:
    """Integral of |a - b| on a shared grid."""
    if a.domain != b.domain or a.samples.shape != b.samples.shape:
        raise ValueError("fields must share a domain and grid")
    return float(np.abs(a.samples - b.samples).sum()) * a.cell_area


def control_velocity_on_grid(
    f: ScalarField, desired: ScalarField, law: ControlLaw
) -> tuple[np.ndarray, np.ndarray]:
    """Feedback velocity evaluated at every cell center.

    The same -D grad(Phi) / max(den, floor) command the agents use,
    with the gradient taken by central differences on the grid.
    """
    if f.domain != desired.domain or f.samples.shape != desired.samples.shape:
        raise ValueError("fields must share a domain and grid")
    phi = ScalarField(f.domain, f.samples - desired.samples)
    gx, gy = grid_gradient(phi)
    den = f.samples if law.denominator == "estimate" else desired.samples
    den = np.maximum(den, law.f_floor)
    vx = -law.D * gx / den
    vy = -law.D * gy / den
    if np.isfinite(law.v_max):
        speed = np.hypot(vx, vy)
        over = speed > law.v_max
        if np.any(over):
            scale = law.v_max / speed[over]
            vx = vx.copy()
            vy = vy.copy()
            vx[over] *= scale
            vy[over] *= scale
    return vx, vy
