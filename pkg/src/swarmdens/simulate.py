"""Particle simulation of the density-controlled swarm.

Each step freezes the current positions, estimates the density and its
gradient at every agent from that one snapshot, turns them into velocity
commands, and advances all agents together by explicit Euler. Updating
from a frozen epoch keeps agents decentralized in spirit and makes the
trajectory a pure function of (initial positions, config), which the
determinism guarantees lean on. Walls reflect: an agent that oversteps
a boundary is mirrored back inside, the particle analogue of the
zero-flux condition the error field satisfies.

Metrics are recorded on a fixed evaluation grid: the L1 error between
the estimated and desired densities, the energy 0.5*int |grad Phi|^2,
the mass defect int Phi, and the mean commanded speed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .control import ControlLaw
from .fields import Domain, ScalarField
from .kde import SwarmState, build_neighbor_grid, density_on_grid, estimate_all_agents
from .kernels import Kernel
from .pde import l1_distance, lyapunov

__all__ = [
    "SimConfig",
    "MetricsRecord",
    "init_swarm",
    "reflect_boundary",
    "agent_velocities",
    "step",
    "run",
    "write_metrics_csv",
    "write_trajectory_csv",
]

METRICS_HEADER = "t,E,V_hat,mass_defect,mean_speed"
TRAJECTORY_HEADER = "t,agent_id,x,y,vx,vy"


@dataclass(frozen=True)
class SimConfig:
    """Everything a run needs besides the desired density and the swarm."""

    domain: Domain
    kernel: Kernel
    h: float
    law: ControlLaw
    dt: float
    steps: int
    record_every: int = 10
    metrics_nx: int = 64
    threads: int = 1

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("bandwidth h must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")
        if self.metrics_nx < 2:
            raise ValueError("metrics grid needs at least 2 cells per side")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")


@dataclass(frozen=True)
class MetricsRecord:
    t: float
    e: float
    v_hat: float
    mass_defect: float
    mean_speed: float


def init_swarm(
    n: int | None,
    domain: Domain,
    rng: np.random.Generator,
    mode: str = "uniform",
    desired: ScalarField | None = None,
    path=None,
) -> SwarmState:
    """Draw the initial agent positions.

    "uniform" samples the domain uniformly; "desired" rejection-samples
    the desired density; "file" loads an (n, 2) position table from a
    CSV and checks it against the domain (and against n when given).
    """
    if mode == "uniform":
        if n is None or n < 1:
            raise ValueError("uniform init needs an agent count")
        p = np.column_stack(
            [
                domain.x0 + domain.lx * rng.random(n),
                domain.y0 + domain.ly * rng.random(n),
            ]
        )
        return SwarmState(p)
    if mode == "desired":
        if n is None or n < 1:
            raise ValueError("desired init needs an agent count")
        if desired is None:
            raise ValueError("desired init needs the desired density field")
        top = float(desired.samples.max())
        accepted = []
        count = 0
        while count < n:
            batch = max(n, 1024)
            cand = np.column_stack(
                [
                    domain.x0 + domain.lx * rng.random(batch),
                    domain.y0 + domain.ly * rng.random(batch),
                ]
            )
            keep = rng.random(batch) * top <= desired.sample(cand)
            accepted.append(cand[keep])
            count += int(keep.sum())
        return SwarmState(np.concatenate(accepted)[:n])
    if mode == "file":
        if path is None:
            raise ValueError("file init needs a path")
        p = np.loadtxt(path, delimiter=",", ndmin=2)
        if p.ndim != 2 or p.shape[1] != 2:
            raise ValueError(f"{path}: expected two columns (x, y)")
        if n is not None and p.shape[0] != n:
            raise ValueError(f"{path}: has {p.shape[0]} agents, config says {n}")
        if not np.all(domain.contains(p)):
            raise ValueError(f"{path}: positions outside the domain")
        return SwarmState(p)
    raise ValueError(f"unknown init mode {mode!r}")


def reflect_boundary(p, domain: Domain) -> np.ndarray:
    """Mirror out-of-domain points back across the violated wall.

    Handles any overshoot up to one domain length per axis; a larger
    one means the integration has blown up, so it raises instead of
    folding the position to somewhere meaningless.
    """
    p = np.array(p, dtype=float, ndmin=2)
    for axis, (lo, span) in enumerate(
        [(domain.x0, domain.lx), (domain.y0, domain.ly)]
    ):
        hi = lo + span
        c = p[:, axis]
        if np.any((c < lo - span) | (c > hi + span)):
            raise ValueError(
                "agent overshot the domain by more than its size; dt is too large"
            )
        c = np.where(c < lo, 2 * lo - c, c)
        c = np.where(c > hi, 2 * hi - c, c)
        p[:, axis] = c
    return p


def agent_velocities(
    state: SwarmState, cfg: SimConfig, desired: ScalarField
) -> np.ndarray:
    """Velocity commands for all agents from one frozen estimate epoch."""
    grid = build_neighbor_grid(state, cfg.kernel.cutoff * cfg.h, cfg.domain)
    values, gradients = estimate_all_agents(
        state, cfg.kernel, cfg.h, grid=grid, threads=cfg.threads
    )
    des_values = desired.sample(state.positions)
    des_gradients = desired.gradient(state.positions)
    return cfg.law.velocity_from_arrays(values, gradients, des_values, des_gradients)


def step(state: SwarmState, cfg: SimConfig, desired: ScalarField) -> SwarmState:
    """Advance the swarm by one Euler step with reflecting walls."""
    v = agent_velocities(state, cfg, desired)
    return _advance(state, v, cfg)


def _advance(state: SwarmState, v: np.ndarray, cfg: SimConfig) -> SwarmState:
    p = state.positions + cfg.dt * v
    if not np.all(np.isfinite(p)):
        raise FloatingPointError(
            "non-finite agent position; dt is too large for this configuration"
        )
    return SwarmState(reflect_boundary(p, cfg.domain), t=state.t + cfg.dt)


def _metrics(
    state: SwarmState, v: np.ndarray, cfg: SimConfig, desired_m: ScalarField
) -> tuple[MetricsRecord, ScalarField]:
    f_hat = density_on_grid(
        state, cfg.kernel, cfg.h, cfg.domain, cfg.metrics_nx, cfg.metrics_nx
    )
    phi = ScalarField(cfg.domain, f_hat.samples - desired_m.samples)
    rec = MetricsRecord(
        t=state.t,
        e=l1_distance(f_hat, desired_m),
        v_hat=lyapunov(phi),
        mass_defect=phi.integral(),
        mean_speed=float(np.hypot(v[:, 0], v[:, 1]).mean()),
    )
    return rec, f_hat


def run(
    cfg: SimConfig,
    desired: ScalarField,
    initial: SwarmState,
    snapshot_every: int | None = None,
    snapshot_writer=None,
    log=None,
):
    """Run the simulation and collect metrics and trajectory samples.

    Returns (final state, metrics records, trajectory rows). Metrics and
    trajectory rows are taken every ``record_every`` steps and always at
    the final step; ``snapshot_writer(step, t, field)`` is called every
    ``snapshot_every`` steps (and at the end) with the current density
    estimate.
    """
    desired_m = desired.resample(cfg.metrics_nx, cfg.metrics_nx)
    state = initial
    records: list[MetricsRecord] = []
    trajectory: list[tuple] = []
    for k in range(cfg.steps + 1):
        last = k == cfg.steps
        v = agent_velocities(state, cfg, desired)
        want_record = last or k % cfg.record_every == 0
        want_snap = snapshot_every is not None and (last or k % snapshot_every == 0)
        if want_record or want_snap:
            rec, f_hat = _metrics(state, v, cfg, desired_m)
            if want_record:
                records.append(rec)
                for i, (p, vi) in enumerate(zip(state.positions, v)):
                    trajectory.append((state.t, i, p[0], p[1], vi[0], vi[1]))
                if log:
                    log(
                        f"t={rec.t:g} E={rec.e:.4f} V_hat={rec.v_hat:.4f} "
                        f"mass_defect={rec.mass_defect:+.4f} mean_speed={rec.mean_speed:.4f}"
                    )
            if want_snap and snapshot_writer is not None:
                snapshot_writer(k, state.t, f_hat)
        if not last:
            state = _advance(state, v, cfg)
    return state, records, trajectory


def _fmt(x) -> str:
    return repr(float(x))


def write_metrics_csv(records, path) -> Path:
    """Write metrics rows with full round-trip precision."""
    path = Path(path)
    lines = [METRICS_HEADER]
    for r in records:
        lines.append(
            ",".join(_fmt(v) for v in (r.t, r.e, r.v_hat, r.mass_defect, r.mean_speed))
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def write_trajectory_csv(rows, path) -> Path:
    """Write trajectory samples: one row per (recorded step, agent)."""
    path = Path(path)
    lines = [TRAJECTORY_HEADER]
    for t, agent_id, x, y, vx, vy in rows:
        lines.append(
            ",".join((_fmt(t), str(int(agent_id)), _fmt(x), _fmt(y), _fmt(vx), _fmt(vy)))
        )
    path.write_text("\n".join(lines) + "\n")
    return path
