"""Scenario files: plain-text `key = value` runs configuration.

Keys use dotted section names (`control.D`, `sim.dt`); lines starting
with `#` are comments. Parsing is fail-closed: an unknown key is an
error, as is a malformed or out-of-range value, and every message names
the offending key. A few keys accept `auto` and are resolved to
concrete numbers at run time; the resolved values are written into the
run's manifest, which is itself a valid scenario file, so a run can be
repeated exactly from its manifest alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fields import (
    Domain,
    ScalarField,
    gaussian_mixture_field,
    ingest_image,
    uniform_field,
)
from .kernels import KERNELS, BandwidthPolicy, Kernel, select_bandwidth

__all__ = [
    "ScenarioError",
    "Scenario",
    "parse_scenario",
    "resolve_bandwidth",
    "resolve_dt",
    "resolve_f_floor",
    "resolve_oracle_dt",
    "write_manifest",
]


class ScenarioError(ValueError):
    """Malformed or invalid scenario configuration."""


# -- raw line parsing ----------------------------------------------------


def _parse_lines(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not sep or not key:
            raise ScenarioError(f"line {lineno}: expected `key = value`, got {line!r}")
        if key in out:
            raise ScenarioError(f"line {lineno}: duplicate key {key}")
        out[key] = value
    return out


# -- typed value parsers -------------------------------------------------


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be a finite number")
    return v


def _positive(s: str) -> float:
    v = _float(s)
    if v <= 0:
        raise ValueError("must be positive")
    return v


def _nonnegative(s: str) -> float:
    v = _float(s)
    if v < 0:
        raise ValueError("must be nonnegative")
    return v


def _positive_or_inf(s: str) -> float:
    v = float(s)
    if math.isnan(v) or v <= 0:
        raise ValueError("must be positive (or inf)")
    return v


def _auto(parser):
    def parse(s: str):
        if s == "auto":
            return None
        return parser(s)

    return parse


def _int_min(minimum: int):
    def parse(s: str) -> int:
        v = int(s)
        if v < minimum:
            raise ValueError(f"must be at least {minimum}")
        return v

    return parse


def _seed(s: str) -> int:
    v = int(s)
    if not 0 <= v < 2**64:
        raise ValueError("must fit in an unsigned 64-bit integer")
    return v


def _bool(s: str) -> bool:
    if s in ("true", "false"):
        return s == "true"
    raise ValueError("must be `true` or `false`")


def _enum(*choices: str):
    def parse(s: str) -> str:
        if s not in choices:
            raise ValueError(f"must be one of {', '.join(choices)}")
        return s

    return parse


def _points(s: str) -> np.ndarray:
    pts = []
    for part in s.split(";"):
        coords = part.split(",")
        if len(coords) != 2:
            raise ValueError("must be `x,y` pairs separated by `;`")
        pts.append((float(coords[0]), float(coords[1])))
    return np.asarray(pts)


def _floats(s: str) -> np.ndarray:
    return np.asarray([float(part) for part in s.split(";")])


def _string(s: str) -> str:
    if not s:
        raise ValueError("must not be empty")
    return s


_REQUIRED = object()

# key -> (parser, default); _REQUIRED means the key has no default but is
# only demanded when the chosen kind/mode needs it
_SCHEMA = {
    "name": (_string, None),
    "domain.x0": (_float, 0.0),
    "domain.y0": (_float, 0.0),
    "domain.lx": (_positive, 1.0),
    "domain.ly": (_positive, 1.0),
    "desired.kind": (_enum("uniform", "gaussian-mixture", "image"), "uniform"),
    "desired.nx": (_int_min(2), 128),
    "desired.path": (_string, _REQUIRED),
    "desired.floor": (_nonnegative, 1e-3),
    "desired.invert": (_bool, False),
    "desired.centers": (_points, _REQUIRED),
    "desired.sigmas": (_floats, _REQUIRED),
    "desired.weights": (_floats, None),
    "kernel.name": (_enum(*sorted(KERNELS)), "gaussian"),
    "kernel.cutoff": (_auto(_positive), None),
    "bandwidth.mode": (_enum("fixed", "rule_of_thumb"), "fixed"),
    "bandwidth.h": (_auto(_positive), None),
    "bandwidth.c_nu": (_positive, 1.0),
    "control.D": (_positive, 5.0),
    "control.f_floor": (_auto(_positive), None),
    "control.v_max": (_positive_or_inf, math.inf),
    "control.denominator": (_enum("estimate", "desired"), "estimate"),
    "sim.n": (_int_min(1), 1000),
    "sim.dt": (_auto(_positive), None),
    "sim.t_final": (_nonnegative, 0.05),
    "sim.seed": (_seed, 0),
    "sim.boundary": (_enum("reflect"), "reflect"),
    "sim.init": (_enum("uniform", "desired", "file"), "uniform"),
    "sim.init_path": (_string, _REQUIRED),
    "metrics.nx": (_int_min(2), 64),
    "metrics.every": (_int_min(1), 10),
    "oracle.nx": (_int_min(3), 128),
    "oracle.dt": (_auto(_positive), None),
    "oracle.scheme": (_enum("upwind", "central"), "upwind"),
}


@dataclass(frozen=True)
class Scenario:
    """Validated scenario with constructed field and kernel objects.

    `bandwidth_h`, `dt`, `f_floor`, and `oracle_dt` are None when the
    file said `auto`; the resolve_* helpers turn them into numbers.
    """

    name: str
    domain: Domain
    desired: ScalarField
    desired_spec: dict
    kernel: Kernel
    bandwidth_mode: str
    bandwidth_h: float | None
    c_nu: float
    D: float
    f_floor: float | None
    v_max: float
    denominator: str
    n: int
    dt: float | None
    t_final: float
    seed: int
    boundary: str
    init: str
    init_path: Path | None
    metrics_nx: int
    metrics_every: int
    oracle_nx: int
    oracle_dt: float | None
    oracle_scheme: str


def parse_scenario(path) -> Scenario:
    """Parse and validate a scenario file.

    Relative file references are taken relative to the scenario's own
    directory. The desired density and kernel are constructed here, so
    a returned Scenario is known to be runnable.
    """
    path = Path(path)
    try:
        raw = _parse_lines(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from exc

    unknown = sorted(set(raw) - set(_SCHEMA))
    if unknown:
        raise ScenarioError(f"unknown key{'s' if len(unknown) > 1 else ''}: {', '.join(unknown)}")

    values: dict[str, object] = {}
    for key, (parser, default) in _SCHEMA.items():
        if key in raw:
            try:
                values[key] = parser(raw[key])
            except ValueError as exc:
                raise ScenarioError(f"{key}: {exc} (got {raw[key]!r})") from exc
        else:
            values[key] = None if default is _REQUIRED else default

    domain = Domain(
        values["domain.x0"], values["domain.y0"], values["domain.lx"], values["domain.ly"]
    )
    desired, desired_spec = _build_desired(values, set(raw), domain, path.parent)
    kernel = _build_kernel(values)

    init_path = values["sim.init_path"]
    if values["sim.init"] == "file":
        if init_path is None:
            raise ScenarioError("sim.init_path: required when sim.init = file")
        init_path = _resolve_path(init_path, path.parent)
        if not init_path.exists():
            raise ScenarioError(f"sim.init_path: no such file {init_path}")
    elif init_path is not None:
        raise ScenarioError("sim.init_path: only meaningful when sim.init = file")

    return Scenario(
        name=values["name"] or path.stem,
        domain=domain,
        desired=desired,
        desired_spec=desired_spec,
        kernel=kernel,
        bandwidth_mode=values["bandwidth.mode"],
        bandwidth_h=values["bandwidth.h"],
        c_nu=values["bandwidth.c_nu"],
        D=values["control.D"],
        f_floor=values["control.f_floor"],
        v_max=values["control.v_max"],
        denominator=values["control.denominator"],
        n=values["sim.n"],
        dt=values["sim.dt"],
        t_final=values["sim.t_final"],
        seed=values["sim.seed"],
        boundary=values["sim.boundary"],
        init=values["sim.init"],
        init_path=init_path,
        metrics_nx=values["metrics.nx"],
        metrics_every=values["metrics.every"],
        oracle_nx=values["oracle.nx"],
        oracle_dt=values["oracle.dt"],
        oracle_scheme=values["oracle.scheme"],
    )


def _resolve_path(value: str, base: Path) -> Path:
    p = Path(value)
    return (p if p.is_absolute() else base / p).resolve()


# desired.* keys each kind is allowed to set
_KIND_KEYS = {
    "uniform": {"desired.nx"},
    "gaussian-mixture": {
        "desired.nx",
        "desired.centers",
        "desired.sigmas",
        "desired.weights",
        "desired.floor",
    },
    "image": {"desired.path", "desired.floor", "desired.invert"},
}


def _build_desired(
    values, raw_keys: set, domain: Domain, base: Path
) -> tuple[ScalarField, dict]:
    kind = values["desired.kind"]
    for key in raw_keys:
        if key.startswith("desired.") and key != "desired.kind" and key not in _KIND_KEYS[kind]:
            raise ScenarioError(f"{key}: not meaningful when desired.kind = {kind}")
    spec = {"desired.kind": kind}
    if kind == "image":
        if values["desired.path"] is None:
            raise ScenarioError("desired.path: required when desired.kind = image")
        img = _resolve_path(values["desired.path"], base)
        if not img.exists():
            raise ScenarioError(f"desired.path: no such file {img}")
        spec["desired.path"] = str(img)
        spec["desired.floor"] = values["desired.floor"]
        spec["desired.invert"] = values["desired.invert"]
        try:
            field = ingest_image(
                img, domain, floor=values["desired.floor"], invert=values["desired.invert"]
            )
        except ValueError as exc:
            raise ScenarioError(f"desired.path: {exc}") from exc
        return field, spec
    if kind == "uniform":
        spec["desired.nx"] = values["desired.nx"]
        return uniform_field(domain, values["desired.nx"]), spec
    # gaussian-mixture
    centers = values["desired.centers"]
    sigmas = values["desired.sigmas"]
    if centers is None:
        raise ScenarioError("desired.centers: required when desired.kind = gaussian-mixture")
    if sigmas is None:
        raise ScenarioError("desired.sigmas: required when desired.kind = gaussian-mixture")
    if sigmas.size not in (1, centers.shape[0]):
        raise ScenarioError("desired.sigmas: need one value, or one per center")
    weights = values["desired.weights"]
    if weights is not None and weights.size != centers.shape[0]:
        raise ScenarioError("desired.weights: need one weight per center")
    spec.update(
        {
            "desired.nx": values["desired.nx"],
            "desired.centers": centers,
            "desired.sigmas": sigmas,
            "desired.weights": weights,
            "desired.floor": values["desired.floor"],
        }
    )
    try:
        field = gaussian_mixture_field(
            domain,
            centers,
            sigmas if sigmas.size > 1 else float(sigmas[0]),
            weights=weights,
            nx=values["desired.nx"],
            floor=values["desired.floor"],
        )
    except ValueError as exc:
        raise ScenarioError(f"desired.sigmas: {exc}") from exc
    return field, spec


def _build_kernel(values) -> Kernel:
    cls = KERNELS[values["kernel.name"]]
    cutoff = values["kernel.cutoff"]
    try:
        return cls() if cutoff is None else cls(cutoff=cutoff)
    except ValueError as exc:
        raise ScenarioError(f"kernel.cutoff: {exc}") from exc


# -- auto resolution -----------------------------------------------------


def resolve_bandwidth(sc: Scenario, positions: np.ndarray | None = None) -> float:
    """Concrete bandwidth: fixed value, L/20 fallback, or data-driven rule.

    The rule-of-thumb mode needs the initial positions for its spread
    estimate, so runs resolve the bandwidth right after drawing them.
    """
    if sc.bandwidth_mode == "fixed":
        if sc.bandwidth_h is not None:
            return sc.bandwidth_h
        return min(sc.domain.lx, sc.domain.ly) / 20.0
    if positions is None:
        raise ScenarioError("bandwidth.mode: rule_of_thumb needs initial positions")
    sigma_hat = float(np.std(positions, axis=0, ddof=1).mean())
    policy = BandwidthPolicy(
        mode="rule_of_thumb", sigma_hat=sigma_hat, c_nu=sc.c_nu, order=sc.kernel.order
    )
    return select_bandwidth(policy, len(positions), sc.kernel.dim)


def resolve_dt(sc: Scenario, h: float) -> float:
    """Concrete time step; `auto` scales a diffusion-style bound by h."""
    if sc.dt is not None:
        return sc.dt
    return 0.1 * h * h / sc.D


def resolve_f_floor(sc: Scenario) -> float:
    """Concrete density floor; `auto` is 1% of the uniform level."""
    if sc.f_floor is not None:
        return sc.f_floor
    return 1e-2 / sc.domain.area


def resolve_oracle_dt(sc: Scenario) -> float:
    """Concrete grid-solver step; `auto` is half the diffusion limit."""
    if sc.oracle_dt is not None:
        return sc.oracle_dt
    dx = sc.domain.lx / sc.oracle_nx
    dy = sc.domain.ly / sc.oracle_nx
    return 0.25 / (sc.D * (1.0 / dx**2 + 1.0 / dy**2))


# -- manifests -----------------------------------------------------------


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, np.ndarray):
        if v.ndim == 2:
            return "; ".join(f"{repr(float(x))},{repr(float(y))}" for x, y in v)
        return "; ".join(repr(float(x)) for x in v)
    return str(v)


def write_manifest(
    sc: Scenario,
    path,
    *,
    seed: int,
    h: float,
    dt: float,
    f_floor: float,
    comments: tuple[str, ...] = (),
) -> Path:
    """Write the resolved scenario so the run can be repeated exactly.

    Every `auto` is replaced by the number actually used (the bandwidth
    always comes out as a fixed value, even if it was data-driven), and
    the effective seed is recorded, so running the manifest reproduces
    the metrics byte for byte.
    """
    from . import __version__

    lines = [f"# manifest written by swarmdens {__version__} (numpy {np.__version__})"]
    lines += [f"# {c}" for c in comments]
    pairs: list[tuple[str, object]] = [("name", sc.name)]
    d = sc.domain
    pairs += [
        ("domain.x0", d.x0),
        ("domain.y0", d.y0),
        ("domain.lx", d.lx),
        ("domain.ly", d.ly),
    ]
    pairs += [(k, v) for k, v in sc.desired_spec.items() if v is not None]
    pairs += [
        ("kernel.name", sc.kernel.name),
        ("kernel.cutoff", sc.kernel.cutoff),
        ("bandwidth.mode", "fixed"),
        ("bandwidth.h", h),
        ("bandwidth.c_nu", sc.c_nu),
        ("control.D", sc.D),
        ("control.f_floor", f_floor),
        ("control.v_max", sc.v_max),
        ("control.denominator", sc.denominator),
        ("sim.n", sc.n),
        ("sim.dt", dt),
        ("sim.t_final", sc.t_final),
        ("sim.seed", seed),
        ("sim.boundary", sc.boundary),
        ("sim.init", sc.init),
    ]
    if sc.init_path is not None:
        pairs.append(("sim.init_path", str(sc.init_path)))
    pairs += [
        ("metrics.nx", sc.metrics_nx),
        ("metrics.every", sc.metrics_every),
        ("oracle.nx", sc.oracle_nx),
        ("oracle.dt", resolve_oracle_dt(sc)),
        ("oracle.scheme", sc.oracle_scheme),
    ]
    lines += [f"{k} = {_format_value(v)}" for k, v in pairs]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path
