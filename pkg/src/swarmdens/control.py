"""Density feedback law for the agents.

Each agent descends the estimated density error. With convergence error
Phi = f_hat - f_des, the commanded velocity is

    v = -D grad(Phi) / max(den, floor)

where ``den`` is either the local density estimate or the desired
density. Substituting v into the continuity equation turns it into a
heat equation for Phi, so the error diffuses away; the floor keeps the
division tame in near-empty regions, and an optional speed cap bounds
the command without changing its direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import ScalarField
from .kde import DensityEstimate

__all__ = ["ControlLaw", "density_error"]


def density_error(estimate: DensityEstimate, desired: ScalarField, x) -> tuple[float, np.ndarray]:
    """Convergence error Phi and its gradient at one point."""
    phi = estimate.value - desired.sample(x)
    grad = estimate.gradient - desired.gradient(x)
    return phi, grad


@dataclass(frozen=True)
class ControlLaw:
    """Velocity command parameters.

    D            diffusion gain (length^2 / time)
    f_floor      lower bound on the denominator density
    v_max        speed cap; infinite by default
    denominator  "estimate" divides by the local density estimate,
                 "desired" by the commanded density
    """

    D: float
    f_floor: float
    v_max: float = math.inf
    denominator: str = "estimate"

    def __post_init__(self):
        if self.D <= 0:
            raise ValueError("D must be positive")
        if self.f_floor <= 0:
            raise ValueError("f_floor must be positive")
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")
        if self.denominator not in ("estimate", "desired"):
            raise ValueError(
                f"denominator must be 'estimate' or 'desired', got {self.denominator!r}"
            )

    def velocity(self, estimate: DensityEstimate, desired: ScalarField, x) -> np.ndarray:
        """Velocity command for an agent at x."""
        _, grad_phi = density_error(estimate, desired, x)
        if self.denominator == "estimate":
            den = estimate.value
        else:
            den = desired.sample(x)
        v = -self.D * grad_phi / max(den, self.f_floor)
        speed = float(np.hypot(v[0], v[1]))
        if speed > self.v_max:
            v = v * (self.v_max / speed)
        return v

    def velocity_from_arrays(
        self,
        values: np.ndarray,
        gradients: np.ndarray,
        desired_values: np.ndarray,
        desired_gradients: np.ndarray,
    ) -> np.ndarray:
        """Vectorized velocity commands for all agents at once.

        Inputs are the per-agent density estimates and the desired
        density sampled at the agent positions; returns an (N, 2) array
        that matches per-agent ``velocity`` calls.
        """
        grad_phi = gradients - desired_gradients
        if self.denominator == "estimate":
            den = values
        else:
            den = desired_values
        v = -self.D * grad_phi / np.maximum(den, self.f_floor)[:, None]
        if math.isfinite(self.v_max):
            speed = np.hypot(v[:, 0], v[:, 1])
            over = speed > self.v_max
            if np.any(over):
                v[over] *= (self.v_max / speed[over])[:, None]
        return v
