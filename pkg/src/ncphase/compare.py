"""Closed-form trajectories checked against numerical integration on a shared grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import SpaceSpec
from .analytic import InitialConditions, solution_or_numeric
from .dynamics import IntegratorConfig, PhaseState, Trajectory, default_step, integrate, space_table
from .poisson import Hamiltonian, eliminate_momenta, momenta_from_velocities


@dataclass(frozen=True)
class Comparison:
    times: np.ndarray
    closed: np.ndarray
    numeric: np.ndarray
    deviation: np.ndarray  # per axis
    source: str
    trajectory: Trajectory = field(repr=False)

    @property
    def max_deviation(self) -> float:
        return float(np.max(self.deviation))


def relative_deviation(candidate: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Per-axis ``max |candidate - reference| / max |reference|``.

    An axis whose reference stays at zero is scaled by the largest reference
    magnitude over all axes instead, so a flat axis is not judged on roundoff.
    """
    err = np.max(np.abs(candidate - reference), axis=0)
    scale = np.max(np.abs(reference), axis=0)
    overall = float(np.max(scale)) or 1.0
    return err / np.where(scale > 0, scale, overall)


def grid_config(span: float, samples: int, base: IntegratorConfig | None = None, spec=None, h=None) -> IntegratorConfig:
    """RK4 config whose recorded samples fall exactly on ``samples`` evenly spaced times.

    The step is the default step (or ``base.step``) shrunk so that an integer
    number of steps separates consecutive samples.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    base = base or IntegratorConfig()
    target = base.step if base.step is not None else default_step(span, spec, h)
    intervals = samples - 1
    per_sample = max(1, math.ceil(abs(span) / intervals / target - 1e-9))
    return IntegratorConfig(
        method="rk4",
        step=abs(span) / (intervals * per_sample),
        max_steps=base.max_steps,
        record_every=per_sample,
        precision=base.precision,
    )


def compare_closed_form(
    spec: SpaceSpec,
    h: Hamiltonian,
    ic: InitialConditions,
    t_end: float,
    samples: int = 2000,
    cfg: IntegratorConfig | None = None,
) -> Comparison:
    """Integrate from ``t = 0`` and evaluate the closed form on the recorded samples."""
    grid_cfg = grid_config(t_end, samples, cfg, spec, h)
    table = space_table(spec, h)
    p0 = momenta_from_velocities(table, h, 0.0, ic.x0, ic.v0)
    traj = integrate(table, h, PhaseState(0.0, ic.x0, p0), t_end, grid_cfg, spec=spec)
    closed, source = solution_or_numeric(spec, h, ic, traj.times)
    return Comparison(traj.times, closed, traj.positions, relative_deviation(traj.positions, closed), source, traj)


def closed_form_states(
    spec: SpaceSpec, h: Hamiltonian, ic: InitialConditions, times: np.ndarray
) -> tuple[np.ndarray, np.ndarray, str]:
    """Phase states and energy on a grid from the closed-form positions.

    Velocities come from second-order finite differences of the positions and
    are turned into momenta by the space's velocity-momentum relation, so the
    momentum and energy columns carry the finite-difference error.
    Returns ``(states, energy, source)``.
    """
    times = np.asarray(times, dtype=float)
    positions, source = solution_or_numeric(spec, h, ic, times)
    velocities = np.gradient(positions, times, axis=0, edge_order=2)
    if times[0] == 0:
        velocities[0] = ic.v0
    table = space_table(spec, h)
    point = np.column_stack([times, positions, velocities])
    momenta = np.column_stack([p.evaluate(point) for p in eliminate_momenta(table, h)])
    states = np.column_stack([positions, momenta])
    energy = h.poly(exact=False).evaluate(np.column_stack([times, states]))
    return states, energy, source
