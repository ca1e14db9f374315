"""Smoothing kernels and bandwidth selection.

Kernels take dimensionless offsets u = (x - r) / h; the density estimator
supplies the 1/h^d scaling. A d-dimensional kernel is the product of
identical 1-D profiles, evaluated with a hard Euclidean cutoff so that
neighbor-accelerated summation can skip distant agents. For the Gaussian
the small truncated tail mass is folded back by renormalization, keeping
the integral at one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

__all__ = [
    "Kernel",
    "GaussianKernel",
    "EpanechnikovKernel",
    "BandwidthPolicy",
    "select_bandwidth",
    "moment",
    "roughness",
    "KERNELS",
]


class Kernel:
    """Product-form smoothing kernel with a radial evaluation cutoff.

    Attributes
    ----------
    name : str
        Identifier used in scenario files.
    dim : int
        Spatial dimension of the kernel argument.
    order : int
        Index of the first non-vanishing moment of the 1-D profile.
    support_radius : float
        Radius beyond which the untruncated kernel vanishes identically
        (``inf`` for the Gaussian).
    cutoff : float
        Hard cutoff in bandwidth units; evaluation returns exactly zero
        for |u| > cutoff.
    """

    name = "kernel"
    order = 2

    def __init__(self, dim: int, cutoff: float, support_radius: float):
        if dim < 1:
            raise ValueError("kernel dimension must be >= 1")
        if cutoff <= 0:
            raise ValueError("cutoff must be positive")
        self.dim = int(dim)
        self.cutoff = float(cutoff)
        self.support_radius = float(support_radius)

    # 1-D profile (integrates to one over the real line) and derivative.
    def profile(self, x):
        raise NotImplementedError

    def profile_deriv(self, x):
        raise NotImplementedError

    def _norm(self) -> float:
        """Scale factor compensating mass lost to the radial cutoff."""
        return 1.0

    def _as_points(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.dim == 1 and (u.ndim == 0 or u.shape[-1] != 1):
            u = u[..., None]
        if u.shape[-1] != self.dim:
            raise ValueError(
                f"argument has dimension {u.shape[-1]}, kernel has {self.dim}"
            )
        if not np.all(np.isfinite(u)):
            raise ValueError("kernel argument must be finite")
        return u

    def __call__(self, u):
        """Evaluate K(u); exactly zero beyond the cutoff radius."""
        u = self._as_points(u)
        r2 = np.einsum("...i,...i->...", u, u)
        val = self._norm() * np.prod(self.profile(u), axis=-1)
        return np.where(r2 <= self.cutoff**2, val, 0.0)

    def gradient(self, u):
        """Gradient of K at u, zero beyond the cutoff like the value."""
        u = self._as_points(u)
        p = self.profile(u)
        dp = self.profile_deriv(u)
        grad = np.empty_like(p)
        for k in range(self.dim):
            if self.dim == 1:
                others = 1.0
            else:
                others = np.prod(np.delete(p, k, axis=-1), axis=-1)
            grad[..., k] = dp[..., k] * others
        grad = grad * self._norm()
        r2 = np.einsum("...i,...i->...", u, u)
        grad[r2 > self.cutoff**2] = 0.0
        return grad

    def value_and_gradient(self, u):
        """K(u) and its gradient in one pass over the offsets.

        Equivalent to calling ``__call__`` and ``gradient`` separately;
        the summation loops call this to avoid evaluating the profiles
        twice per agent pair.
        """
        u = self._as_points(u)
        r2 = np.einsum("...i,...i->...", u, u)
        inside = r2 <= self.cutoff**2
        p = self.profile(u)
        dp = self.profile_deriv(u)
        val = self._norm() * np.prod(p, axis=-1)
        grad = np.empty_like(p)
        for k in range(self.dim):
            if self.dim == 1:
                others = 1.0
            else:
                others = np.prod(np.delete(p, k, axis=-1), axis=-1)
            grad[..., k] = dp[..., k] * others
        grad = grad * self._norm()
        grad[~inside] = 0.0
        return np.where(inside, val, 0.0), grad

    def tensor_eval(self, ux, uy):
        """K over the grid {(x, y) : x in ux, y in uy}, rows along uy.

        Exploits the product form: two 1-D profile sweeps and an outer
        product instead of a full 2-D evaluation. The radial cutoff
        still applies; values agree with ``__call__`` to rounding of
        the factor product.
        """
        if self.dim != 2:
            raise ValueError("tensor evaluation requires a 2-D kernel")
        ux = np.asarray(ux, dtype=float)
        uy = np.asarray(uy, dtype=float)
        val = self._norm() * self.profile(uy)[:, None] * self.profile(ux)[None, :]
        r2 = uy[:, None] ** 2 + ux[None, :] ** 2
        return np.where(r2 <= self.cutoff**2, val, 0.0)

    def integral(self) -> float:
        """Quadrature of K over its own dimension (generic, slow path)."""
        if self.dim == 1:
            s = min(self.support_radius, self.cutoff)
            val, _ = integrate.quad(lambda x: float(self(np.array([x]))), -s, s)
            return val
        if self.dim == 2:
            s = self.cutoff
            val, _ = integrate.dblquad(
                lambda y, x: float(self(np.array([x, y]))), -s, s, -s, s
            )
            return val
        raise NotImplementedError("generic quadrature only for dim <= 2")

    def squared_integral(self) -> float:
        """Quadrature of K^2 over its own dimension (generic, slow path)."""
        if self.dim == 1:
            s = min(self.support_radius, self.cutoff)
            val, _ = integrate.quad(lambda x: float(self(np.array([x]))) ** 2, -s, s)
            return val
        if self.dim == 2:
            s = self.cutoff
            val, _ = integrate.dblquad(
                lambda y, x: float(self(np.array([x, y]))) ** 2, -s, s, -s, s
            )
            return val
        raise NotImplementedError("generic quadrature only for dim <= 2")


class GaussianKernel(Kernel):
    r"""Isotropic Gaussian kernel with per-axis spread ``sigma``.

    The 2-D default (sigma = 1/2) is K(u) = (2/pi) exp(-2 u.u), so
    K(0) = 2/pi and each 1-D profile has variance 1/4. Evaluation is cut
    off at ``cutoff`` (default 6 sigma, where the value is below 2e-8 of
    the peak); the lost tail mass is restored by renormalization so the
    truncated kernel still integrates to one.
    """

    name = "gaussian"
    order = 2

    def __init__(self, dim: int = 2, sigma: float = 0.5, cutoff: float | None = None):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.sigma = float(sigma)
        if cutoff is None:
            cutoff = 6.0 * self.sigma
        super().__init__(dim, cutoff, math.inf)
        # mass inside the cutoff ball: chi-square CDF with dim dofs
        mass = float(special.gammainc(self.dim / 2.0, (self.cutoff / self.sigma) ** 2 / 2.0))
        self._renorm = 1.0 / mass
        self._amp = self._renorm * (2.0 * math.pi * self.sigma**2) ** (-self.dim / 2.0)

    def profile(self, x):
        x = np.asarray(x, dtype=float)
        c = 1.0 / (self.sigma * math.sqrt(2.0 * math.pi))
        return c * np.exp(-0.5 * (x / self.sigma) ** 2)

    def profile_deriv(self, x):
        x = np.asarray(x, dtype=float)
        return self.profile(x) * (-x / self.sigma**2)

    def _norm(self) -> float:
        return self._renorm

    def __call__(self, u):
        u = self._as_points(u)
        r2 = np.einsum("...i,...i->...", u, u)
        val = self._amp * np.exp(-0.5 * r2 / self.sigma**2)
        return np.where(r2 <= self.cutoff**2, val, 0.0)

    def gradient(self, u):
        u = self._as_points(u)
        return self(u)[..., None] * (-u / self.sigma**2)

    def value_and_gradient(self, u):
        u = self._as_points(u)
        r2 = np.einsum("...i,...i->...", u, u)
        val = self._amp * np.exp(-0.5 * r2 / self.sigma**2)
        val = np.where(r2 <= self.cutoff**2, val, 0.0)
        return val, val[..., None] * (-u / self.sigma**2)

    def integral(self) -> float:
        # radial quadrature; exact up to the renormalized truncation
        s_d = 2.0 * math.pi ** (self.dim / 2.0) / math.gamma(self.dim / 2.0)
        val, _ = integrate.quad(
            lambda r: self._amp * math.exp(-0.5 * (r / self.sigma) ** 2) * r ** (self.dim - 1),
            0.0,
            self.cutoff,
        )
        return s_d * val

    def squared_integral(self) -> float:
        s_d = 2.0 * math.pi ** (self.dim / 2.0) / math.gamma(self.dim / 2.0)
        val, _ = integrate.quad(
            lambda r: (self._amp * math.exp(-0.5 * (r / self.sigma) ** 2)) ** 2
            * r ** (self.dim - 1),
            0.0,
            self.cutoff,
        )
        return s_d * val


class EpanechnikovKernel(Kernel):
    r"""Parabolic kernel with compact support.

    1-D profile 0.75 (1 - x^2) on [-1, 1], multiplied across axes in
    higher dimensions. The default cutoff sqrt(dim) circumscribes the
    support box, so truncation loses nothing and no renormalization is
    needed. At the support edge the derivative takes the interior
    one-sided value.
    """

    name = "epanechnikov"
    order = 2

    def __init__(self, dim: int = 2, cutoff: float | None = None):
        if cutoff is None:
            cutoff = math.sqrt(dim)
        super().__init__(dim, cutoff, math.sqrt(dim))

    def profile(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) <= 1.0, 0.75 * (1.0 - x**2), 0.0)

    def profile_deriv(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) <= 1.0, -1.5 * x, 0.0)

    def integral(self) -> float:
        val, _ = integrate.quad(lambda x: 0.75 * (1.0 - x**2), -1.0, 1.0)
        return val**self.dim

    def squared_integral(self) -> float:
        val, _ = integrate.quad(lambda x: (0.75 * (1.0 - x**2)) ** 2, -1.0, 1.0)
        return val**self.dim


#: Shipped kernel families, keyed by scenario name.
KERNELS = {
    "gaussian": GaussianKernel,
    "epanechnikov": EpanechnikovKernel,
}


def moment(kernel: Kernel, j: int) -> float:
    """j-th moment of the kernel's 1-D profile, by adaptive quadrature."""
    if j < 0:
        raise ValueError("moment index must be >= 0")
    s = min(kernel.support_radius, kernel.cutoff)
    val, err = integrate.quad(
        lambda x: x**j * float(kernel.profile(x)), -s, s, epsabs=1e-12, limit=200
    )
    if err > 1e-7:
        raise ArithmeticError(f"moment quadrature did not converge (err={err:.2e})")
    return val


def roughness(kernel: Kernel) -> float:
    """Integral of the squared kernel over its dimension.

    Larger values mean a harder estimation problem: the estimator
    variance scales with this quantity.
    """
    return kernel.squared_integral()


@dataclass(frozen=True)
class BandwidthPolicy:
    """How the estimator bandwidth is chosen.

    ``fixed`` uses ``h`` verbatim. ``rule_of_thumb`` scales a reference
    constant by the sample spread and shrinks with the agent count:
    h = sigma_hat * c_nu * N**(-1/(2*order + dim)).
    """

    mode: str = "fixed"
    h: float | None = None
    sigma_hat: float | None = None
    c_nu: float = 1.0
    order: int = 2

    def __post_init__(self):
        if self.mode not in ("fixed", "rule_of_thumb"):
            raise ValueError(f"unknown bandwidth mode {self.mode!r}")
        if self.mode == "fixed":
            if self.h is None or self.h <= 0:
                raise ValueError("fixed bandwidth requires h > 0")
        if self.c_nu <= 0:
            raise ValueError("c_nu must be positive")
        if self.order < 1:
            raise ValueError("order must be >= 1")


def select_bandwidth(policy: BandwidthPolicy, n: int, dim: int) -> float:
    """Bandwidth for an n-agent swarm in the given dimension."""
    if n < 1:
        raise ValueError("bandwidth selection needs at least one agent")
    if policy.mode == "fixed":
        return float(policy.h)
    if policy.sigma_hat is None or policy.sigma_hat <= 0:
        raise ValueError("rule_of_thumb requires sigma_hat > 0 (degenerate sample?)")
    return float(policy.sigma_hat * policy.c_nu * n ** (-1.0 / (2 * policy.order + dim)))
