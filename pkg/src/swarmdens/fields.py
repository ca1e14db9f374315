"""Scalar fields over a rectangular domain.

A ScalarField stores samples at cell centers of a regular grid and
answers value and gradient queries through bilinear interpolation.
Fields are immutable once built; every mutating-looking operation
returns a new field. Grayscale PGM images can be ingested as desired
densities and fields can be written back out as PGM snapshots with a
sidecar recording the value-to-gray mapping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Domain",
    "ScalarField",
    "grid_gradient",
    "ingest_image",
    "read_pgm",
    "write_field_pgm",
    "read_field_pgm",
    "uniform_field",
    "gaussian_mixture_field",
]


@dataclass(frozen=True)
class Domain:
    """Axis-aligned rectangle: lower corner and side lengths."""

    x0: float = 0.0
    y0: float = 0.0
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.lx <= 0 or self.ly <= 0:
            raise ValueError("domain side lengths must be positive")

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def upper(self) -> tuple[float, float]:
        return (self.x0 + self.lx, self.y0 + self.ly)

    def contains(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        x, y = p[..., 0], p[..., 1]
        hi = self.upper
        return (x >= self.x0) & (x <= hi[0]) & (y >= self.y0) & (y <= hi[1])


@dataclass(frozen=True)
class ScalarField:
    """Grid-sampled scalar function with bilinear interpolation.

    ``samples`` has shape (ny, nx); row index runs along y from the
    bottom of the domain, column index along x. Samples sit at cell
    centers, so the midpoint integral is cell_area * samples.sum().
    """

    domain: Domain
    samples: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2 or s.size == 0:
            raise ValueError("samples must be a nonempty 2-D array")
        s = np.ascontiguousarray(s)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def ny(self) -> int:
        return self.samples.shape[0]

    @property
    def nx(self) -> int:
        return self.samples.shape[1]

    @property
    def dx(self) -> float:
        return self.domain.lx / self.nx

    @property
    def dy(self) -> float:
        return self.domain.ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """1-D arrays of cell-center coordinates (xs, ys)."""
        xs = self.domain.x0 + (np.arange(self.nx) + 0.5) * self.dx
        ys = self.domain.y0 + (np.arange(self.ny) + 0.5) * self.dy
        return xs, ys

    # -- queries ---------------------------------------------------------

    def _locate(self, coord, origin, step, n):
        """Cell pair index and fraction for one axis, clamped to the grid."""
        u = (np.asarray(coord, dtype=float) - origin) / step - 0.5
        # snap roundoff-adjacent indices so cell-center queries return the
        # stored sample exactly; the window is far below any physical scale
        r = np.rint(u)
        u = np.where(np.abs(u - r) <= 4e-15 * np.maximum(1.0, np.abs(r)), r, u)
        u = np.clip(u, 0.0, n - 1.0)
        i0 = np.minimum(u.astype(int), n - 2) if n > 1 else np.zeros_like(u, dtype=int)
        frac = u - i0 if n > 1 else np.zeros_like(u)
        return i0, frac

    def sample(self, p) -> np.ndarray:
        """Bilinear value at p; queries outside clamp to the boundary."""
        p = np.asarray(p, dtype=float)
        ix, fx = self._locate(p[..., 0], self.domain.x0, self.dx, self.nx)
        iy, fy = self._locate(p[..., 1], self.domain.y0, self.dy, self.ny)
        s = self.samples
        ix1 = np.minimum(ix + 1, self.nx - 1)
        iy1 = np.minimum(iy + 1, self.ny - 1)
        v00 = s[iy, ix]
        v10 = s[iy, ix1]
        v01 = s[iy1, ix]
        v11 = s[iy1, ix1]
        return (
            v00 * (1 - fx) * (1 - fy)
            + v10 * fx * (1 - fy)
            + v01 * (1 - fx) * fy
            + v11 * fx * fy
        )

    def _grad_cell(self, ix, iy, fx, fy):
        s = self.samples
        ix1 = np.minimum(ix + 1, self.nx - 1)
        iy1 = np.minimum(iy + 1, self.ny - 1)
        gx = ((s[iy, ix1] - s[iy, ix]) * (1 - fy) + (s[iy1, ix1] - s[iy1, ix]) * fy) / self.dx
        gy = ((s[iy1, ix] - s[iy, ix]) * (1 - fx) + (s[iy1, ix1] - s[iy, ix1]) * fx) / self.dy
        return gx, gy

    def gradient(self, p) -> np.ndarray:
        """Gradient of the bilinear interpolant at p.

        The interpolant's derivative jumps across cell-center lines; a
        query landing exactly on such a line gets the average of the two
        adjacent cell gradients. In the clamped margin outside the
        cell-center hull the interpolant is constant along the clamped
        axis, so that gradient component is zero there.
        """
        p = np.asarray(p, dtype=float)
        ix, fx = self._locate(p[..., 0], self.domain.x0, self.dx, self.nx)
        iy, fy = self._locate(p[..., 1], self.domain.y0, self.dy, self.ny)
        gx, gy = self._grad_cell(ix, iy, fx, fy)

        # average across a seam when the query sits exactly on one
        on_x = (fx == 0.0) & (ix > 0)
        if np.any(on_x):
            gx_l, _ = self._grad_cell(ix - 1, iy, np.ones_like(fx), fy)
            gx = np.where(on_x, 0.5 * (gx + gx_l), gx)
        on_y = (fy == 0.0) & (iy > 0)
        if np.any(on_y):
            _, gy_l = self._grad_cell(ix, iy - 1, fx, np.ones_like(fy))
            gy = np.where(on_y, 0.5 * (gy + gy_l), gy)

        # clamped flat extrapolation beyond the outermost cell centers
        xs_lo = self.domain.x0 + 0.5 * self.dx
        xs_hi = self.domain.x0 + self.domain.lx - 0.5 * self.dx
        ys_lo = self.domain.y0 + 0.5 * self.dy
        ys_hi = self.domain.y0 + self.domain.ly - 0.5 * self.dy
        gx = np.where((p[..., 0] < xs_lo) | (p[..., 0] > xs_hi), 0.0, gx)
        gy = np.where((p[..., 1] < ys_lo) | (p[..., 1] > ys_hi), 0.0, gy)
        return np.stack([gx, gy], axis=-1)

    def integral(self) -> float:
        """Midpoint-rule integral over the domain."""
        return float(self.cell_area * self.samples.sum())

    # -- constructions ---------------------------------------------------

    def normalize(self) -> "ScalarField":
        """Scale samples so the midpoint integral equals one."""
        total = self.integral()
        if not total > 0:
            raise ValueError("cannot normalize a field with nonpositive integral")
        return ScalarField(self.domain, self.samples / total, normalized=True)

    def with_samples(self, samples) -> "ScalarField":
        return ScalarField(self.domain, samples, normalized=False)

    def resample(self, nx: int, ny: int | None = None) -> "ScalarField":
        """Field sampled at the cell centers of an nx-by-ny grid."""
        ny = nx if ny is None else ny
        xs = self.domain.x0 + (np.arange(nx) + 0.5) * (self.domain.lx / nx)
        ys = self.domain.y0 + (np.arange(ny) + 0.5) * (self.domain.ly / ny)
        gx, gy = np.meshgrid(xs, ys)
        pts = np.stack([gx, gy], axis=-1)
        return ScalarField(self.domain, self.sample(pts))


def grid_gradient(f: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradient arrays (gx, gy) on the field's grid.

    Boundary rows use mirrored ghost cells, matching a zero normal
    derivative convention at the walls.
    """
    s = f.samples
    sx = np.pad(s, ((0, 0), (1, 1)), mode="edge")
    sy = np.pad(s, ((1, 1), (0, 0)), mode="edge")
    gx = (sx[:, 2:] - sx[:, :-2]) / (2.0 * f.dx)
    gy = (sy[2:, :] - sy[:-2, :]) / (2.0 * f.dy)
    return gx, gy


# -- PGM ingestion and snapshots ----------------------------------------


def _read_pgm_tokens(data: bytes, count: int, pos: int) -> tuple[list[int], int]:
    """Read whitespace/comment-separated ASCII integers from a PGM header."""
    tokens: list[int] = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        try:
            tokens.append(int(data[start:pos]))
        except ValueError as exc:
            raise ValueError(f"malformed PGM token {data[start:pos]!r}") from exc
    return tokens, pos


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a PGM file (P2 ASCII or P5 binary).

    Returns (pixels, maxval) with pixels shaped (height, width), row 0 at
    the top of the image as stored in the file.
    """
    data = Path(path).read_bytes()
    if len(data) < 2 or data[:1] != b"P" or data[1:2] not in (b"2", b"5"):
        raise ValueError(f"{path}: not a PGM (P2/P5) file")
    binary = data[1:2] == b"5"
    (width, height, maxval), pos = _read_pgm_tokens(data, 3, 2)
    if width <= 0 or height <= 0:
        raise ValueError(f"{path}: bad PGM size {width}x{height}")
    if not 0 < maxval <= 65535:
        raise ValueError(f"{path}: PGM maxval {maxval} out of range (1..65535)")
    count = width * height
    if binary:
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raster = data[pos : pos + count * dtype.itemsize]
        if len(raster) < count * dtype.itemsize:
            raise ValueError(f"{path}: truncated PGM raster")
        pixels = np.frombuffer(raster, dtype=dtype).astype(np.uint16)
    else:
        values, _ = _read_pgm_tokens(data, count, pos)
        pixels = np.asarray(values, dtype=np.uint16)
    if pixels.max(initial=0) > maxval:
        raise ValueError(f"{path}: pixel value exceeds maxval {maxval}")
    return pixels.reshape(height, width), maxval


def ingest_image(
    path,
    domain: Domain,
    floor: float = 1e-3,
    invert: bool = False,
) -> ScalarField:
    """Build a normalized density field from a grayscale PGM image.

    Bright pixels map to high density (pass ``invert`` for the opposite
    convention). Every sample is raised to at least ``floor`` times the
    uniform level before normalization, so the result is bounded away
    from zero wherever ``floor`` is positive.
    """
    if floor < 0:
        raise ValueError("floor must be nonnegative")
    pixels, maxval = read_pgm(path)
    raw = pixels.astype(float) / maxval
    if invert:
        raw = 1.0 - raw
    raw = raw[::-1, :]  # image top row becomes the high-y row
    uniform = 1.0 / domain.area
    raw = np.maximum(raw, floor * uniform)
    f = ScalarField(domain, raw)
    if not f.integral() > 0:
        raise ValueError(f"{path}: image has no mass and floor is zero")
    return f.normalize()


def write_field_pgm(f: ScalarField, path) -> Path:
    """Write a field as a 16-bit binary PGM plus a sidecar text file.

    The sidecar records the affine value-to-gray mapping (min, max), the
    grid resolution, and the domain, so ``read_field_pgm`` reconstructs
    the quantized field bit-exactly.
    """
    path = Path(path)
    maxval = 65535
    vmin = float(f.samples.min())
    vmax = float(f.samples.max())
    span = vmax - vmin
    if span > 0:
        gray = np.rint((f.samples - vmin) / span * maxval).astype(">u2")
    else:
        gray = np.zeros_like(f.samples, dtype=">u2")
    header = f"P5\n{f.nx} {f.ny}\n{maxval}\n".encode("ascii")
    path.write_bytes(header + gray[::-1, :].tobytes())
    sidecar = path.with_name(path.name + ".txt")
    d = f.domain
    sidecar.write_text(
        "".join(
            f"{k} = {v!r}\n"
            for k, v in [
                ("min", vmin),
                ("max", vmax),
                ("nx", f.nx),
                ("ny", f.ny),
                ("maxval", maxval),
                ("x0", d.x0),
                ("y0", d.y0),
                ("lx", d.lx),
                ("ly", d.ly),
            ]
        )
    )
    return path


def read_field_pgm(path) -> ScalarField:
    """Reconstruct a field written by ``write_field_pgm``."""
    path = Path(path)
    sidecar = path.with_name(path.name + ".txt")
    meta = {}
    for line in sidecar.read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()
    pixels, maxval = read_pgm(path)
    vmin, vmax = float(meta["min"]), float(meta["max"])
    samples = vmin + pixels[::-1, :].astype(float) / maxval * (vmax - vmin)
    domain = Domain(
        float(meta["x0"]), float(meta["y0"]), float(meta["lx"]), float(meta["ly"])
    )
    return ScalarField(domain, samples)


# -- analytic desired densities -----------------------------------------


def uniform_field(domain: Domain, nx: int = 128, ny: int | None = None) -> ScalarField:
    """Constant density integrating to one."""
    ny = nx if ny is None else ny
    samples = np.full((ny, nx), 1.0 / domain.area)
    return ScalarField(domain, samples, normalized=True)


def gaussian_mixture_field(
    domain: Domain,
    centers,
    sigmas,
    weights=None,
    nx: int = 128,
    ny: int | None = None,
    floor: float = 1e-3,
) -> ScalarField:
    """Normalized mixture of isotropic Gaussian bumps plus a floor.

    ``sigmas`` may be a scalar (shared) or one value per component;
    ``weights`` default to equal. ``floor`` is a fraction of the uniform
    level applied before normalization.
    """
    ny = nx if ny is None else ny
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    k = centers.shape[0]
    sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), (k,))
    if np.any(sigmas <= 0):
        raise ValueError("mixture sigmas must be positive")
    if weights is None:
        weights = np.full(k, 1.0 / k)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (k,) or np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("weights must be nonnegative, one per component")
        weights = weights / weights.sum()
    xs = domain.x0 + (np.arange(nx) + 0.5) * (domain.lx / nx)
    ys = domain.y0 + (np.arange(ny) + 0.5) * (domain.ly / ny)
    gx, gy = np.meshgrid(xs, ys)
    samples = np.zeros((ny, nx))
    for (cx, cy), s, w in zip(centers, sigmas, weights):
        r2 = (gx - cx) ** 2 + (gy - cy) ** 2
        samples += w * np.exp(-0.5 * r2 / s**2) / (2.0 * math.pi * s**2)
    samples = np.maximum(samples, floor / domain.area)
    return ScalarField(domain, samples).normalize()
