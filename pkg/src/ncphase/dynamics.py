"""Numerical integration of the Hamilton equations and trajectory diagnostics."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import _kernels
from .algebra import BracketTable, SpaceSpec, build_table
from .errors import NonFiniteState, NonUniformStep, StepLimitExceeded
from .poisson import Hamiltonian, hamilton_rhs, newton_rhs
from .poly import Poly

CSV_HEADER = "t,x_k,x_l,x_gamma,p_k,p_l,p_gamma,H"


class Method(str, Enum):
    RK4 = "rk4"
    RK45 = "rk45"


class Precision(str, Enum):
    DOUBLE = "double"
    DOUBLE_DOUBLE = "double-double"


@dataclass(frozen=True)
class IntegratorConfig:
    """Integrator settings.

    ``step=None`` with RK4 picks :func:`default_step`.  ``record_every`` keeps
    every n-th fixed step (the final sample is always kept).  The
    double-double precision path is RK4 only and needs ``span / step`` to be
    an integer.
    """

    method: Method = Method.RK4
    step: float | None = None
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_steps: int = 50_000_000
    record_every: int = 1
    precision: Precision = Precision.DOUBLE

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "precision", Precision(self.precision))
        if self.step is not None and not (self.step > 0 and math.isfinite(self.step)):
            raise ValueError(f"step must be positive, got {self.step}")
        if not self.rel_tol > 0 or not self.abs_tol > 0:
            raise ValueError("tolerances must be positive")
        if int(self.max_steps) <= 0:
            raise ValueError("max_steps must be positive")
        if int(self.record_every) <= 0:
            raise ValueError("record_every must be positive")
        if self.precision is Precision.DOUBLE_DOUBLE and self.method is not Method.RK4:
            raise ValueError("double-double precision is only available for fixed-step RK4")

    def describe(self) -> dict:
        out = {"method": self.method.value, "max_steps": int(self.max_steps)}
        if self.method is Method.RK4:
            out.update(step=self.step, record_every=int(self.record_every), precision=self.precision.value)
        else:
            out.update(rel_tol=self.rel_tol, abs_tol=self.abs_tol)
        return out


@dataclass(frozen=True)
class PhaseState:
    time: float
    position: tuple
    momentum: tuple

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position)
        mom = tuple(float(v) for v in self.momentum)
        if len(pos) != 3 or len(mom) != 3:
            raise ValueError("position and momentum need three components")
        if not all(math.isfinite(v) for v in (float(self.time),) + pos + mom):
            raise ValueError("phase state must be finite")
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "momentum", mom)

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.position + self.momentum)


@dataclass
class Trajectory:
    """Samples of the flow, ordered monotonically in time.

    ``states`` has columns ``x_k, x_l, x_gamma, p_k, p_l, p_gamma``.
    ``state_lows`` / ``time_lows`` are optional low-order parts (compensation
    terms or double-double tails) that refine the stored doubles.
    """

    times: np.ndarray
    states: np.ndarray
    table: BracketTable
    hamiltonian: Hamiltonian
    meta: dict = field(default_factory=dict)
    spec: SpaceSpec | None = None
    state_lows: np.ndarray | None = None
    time_lows: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 2 or self.states.shape[1] != 6 or len(self.times) != len(self.states):
            raise ValueError("states must be (n, 6) with one time per row")
        if len(self.times) < 2:
            raise ValueError("a trajectory needs at least two samples")
        d = np.diff(self.times)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("sample times must be strictly monotonic")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :3]

    @property
    def momenta(self) -> np.ndarray:
        return self.states[:, 3:]

    def sample(self, i: int) -> PhaseState:
        s = self.states[i]
        return PhaseState(self.times[i], s[:3], s[3:])

    @property
    def final(self) -> PhaseState:
        return self.sample(-1)

    def uniform_step(self, rtol: float = 1e-9) -> float:
        d = np.diff(self.times)
        h = (self.times[-1] - self.times[0]) / (len(self.times) - 1)
        if np.max(np.abs(d - h)) > rtol * abs(h):
            raise NonUniformStep("trajectory samples are not evenly spaced")
        return float(h)

    def precise_states(self) -> np.ndarray:
        """States in extended precision (``np.longdouble``) including the low parts."""
        s = self.states.astype(np.longdouble)
        if self.state_lows is not None:
            s = s + self.state_lows.astype(np.longdouble)
        return s


# ---------------------------------------------------------------------------
# compiled vector fields
# ---------------------------------------------------------------------------


def _split_coeff(c) -> tuple[float, float]:
    hi = float(c)
    if isinstance(c, Fraction):
        return hi, float(c - Fraction(hi))
    return hi, 0.0


@dataclass(frozen=True)
class CompiledField:
    """Flat term arrays of a polynomial vector field (see :mod:`ncphase._kernels`)."""

    comp: np.ndarray
    coef_hi: np.ndarray
    coef_lo: np.ndarray
    exps: np.ndarray

    @classmethod
    def from_polys(cls, polys: Sequence[Poly]) -> "CompiledField":
        comp, hi, lo, exps = [], [], [], []
        for i, p in enumerate(polys):
            for e, c in p.sorted_terms():
                comp.append(i)
                h, l = _split_coeff(c)
                hi.append(h)
                lo.append(l)
                exps.append(e)
        nvars = len(polys[0].vars) if polys else 7
        return cls(
            np.array(comp, dtype=np.int64),
            np.array(hi, dtype=float),
            np.array(lo, dtype=float),
            np.array(exps, dtype=np.int64).reshape(len(comp), nvars),
        )

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        out = np.empty(6)
        _kernels.eval_poly_field(float(t), np.asarray(y, dtype=float), self.comp, self.coef_hi, self.exps, out)
        return out


def default_step(span: float, spec: SpaceSpec | None = None, h: Hamiltonian | None = None) -> float:
    """``min(1e-3 * span, period / 1000)`` with period ``2 pi kappa_tilde / F_gamma`` when defined."""
    step = 1e-3 * abs(span)
    if spec is not None and h is not None:
        ikt = float(spec.inv_kappa_tilde)
        fg = float(h.force[spec.axes[2] - 1])
        if ikt != 0 and fg != 0:
            period = 2 * math.pi / abs(fg * ikt)
            step = min(step, period / 1000)
    return step


def _step_plan(span: float, h: float) -> tuple[int, float, float]:
    """Number of full steps, signed step and signed final partial step."""
    ratio = abs(span) / h
    n = round(ratio)
    sign = 1.0 if span > 0 else -1.0
    if n >= 1 and abs(ratio - n) <= 1e-9 * max(ratio, 1.0):
        return n, span / n, 0.0
    n_full = int(math.floor(ratio))
    h_signed = sign * h
    last = span - n_full * h_signed
    if abs(last) <= 1e-12 * abs(span):
        return max(n_full, 1), span / max(n_full, 1), 0.0
    return n_full, h_signed, last


def integrate(
    table: BracketTable,
    h: Hamiltonian,
    initial: PhaseState,
    t_end: float,
    cfg: IntegratorConfig | None = None,
    spec: SpaceSpec | None = None,
) -> Trajectory:
    """Integrate ``xi' = {xi, H}`` from ``initial`` to ``t_end``.

    ``t_end < initial.time`` integrates backwards.  The final sample lands on
    ``t_end`` exactly.
    """
    cfg = cfg or IntegratorConfig()
    t0 = initial.time
    span = float(t_end) - t0
    if span == 0 or not math.isfinite(span):
        raise ValueError("t_end must differ from the initial time")
    compiled = CompiledField.from_polys(hamilton_rhs(table, h))
    y0 = initial.vector
    meta = cfg.describe()
    if cfg.method is Method.RK45:
        times, states = _integrate_rk45(compiled, y0, t0, float(t_end), cfg)
        meta["accepted_steps"] = len(times) - 1
        return Trajectory(times, states, table, h, meta, spec)

    step = cfg.step if cfg.step is not None else default_step(span, spec, h)
    meta["step"] = step
    if cfg.precision is Precision.DOUBLE_DOUBLE:
        return _integrate_dd(compiled, table, h, y0, t0, span, step, cfg, meta, spec)

    n_full, h_signed, h_last = _step_plan(span, step)
    total_steps = n_full + (1 if h_last else 0)
    if total_steps > cfg.max_steps:
        raise StepLimitExceeded(f"{total_steps} steps needed, max_steps is {cfg.max_steps}")
    times, states, lows, status, bad = _kernels.rk4_fixed(
        y0, t0, h_signed, n_full, h_last, int(cfg.record_every), compiled.comp, compiled.coef_hi, compiled.exps
    )
    if status != _kernels.OK:
        raise NonFiniteState(float(t0 + bad * h_signed))
    times[-1] = float(t_end)
    meta.update(steps=total_steps, step_used=h_signed, last_step=h_last)
    return Trajectory(times, states, table, h, meta, spec, state_lows=lows)


def _integrate_dd(compiled, table, h, y0, t0, span, step, cfg, meta, spec) -> Trajectory:
    n = max(1, round(abs(span) / step))
    if abs(abs(span) / step - n) > 1e-9 * n:
        raise ValueError("double-double integration needs span / step to be an integer")
    if n > cfg.max_steps:
        raise StepLimitExceeded(f"{n} steps needed, max_steps is {cfg.max_steps}")
    exact_h = Fraction(span) / n
    hh, hl = _split_coeff(exact_h)
    th, tl, sh, sl, status, bad = _kernels.rk4_fixed_dd(
        y0.astype(float),
        np.zeros(6),
        float(t0),
        0.0,
        hh,
        hl,
        n,
        int(cfg.record_every),
        compiled.comp,
        compiled.coef_hi,
        compiled.coef_lo,
        compiled.exps,
    )
    if status != _kernels.OK:
        raise NonFiniteState(float(t0 + bad * hh))
    meta.update(steps=n, step_used=hh)
    return Trajectory(th, sh, table, h, meta, spec, state_lows=sl, time_lows=tl)


def _integrate_rk45(compiled, y0, t0, t_end, cfg):
    from scipy.integrate import RK45

    solver = RK45(compiled, t0, y0.astype(float), t_end, rtol=cfg.rel_tol, atol=cfg.abs_tol)
    times = [t0]
    states = [y0.astype(float)]
    steps = 0
    while solver.status == "running":
        if steps >= cfg.max_steps:
            raise StepLimitExceeded(f"adaptive integration exceeded max_steps={cfg.max_steps}")
        msg = solver.step()
        steps += 1
        if not np.all(np.isfinite(solver.y)):
            raise NonFiniteState(float(solver.t))
        if solver.status == "failed":
            raise NonFiniteState(float(solver.t), f"adaptive integration failed at t={solver.t!r}: {msg}")
        times.append(solver.t)
        states.append(solver.y.copy())
    return np.array(times), np.array(states)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyReport:
    """Energy along a trajectory.

    ``relative_drift`` divides the worst deviation by the energy scale
    ``max_t sum_i |h_i(t)|`` over the individual terms of ``H`` (kinetic and
    potential parts), which stays meaningful when ``H`` itself is close to
    zero through cancellation.  ``drift_vs_initial`` divides by ``|H(0)|``.
    """

    times: np.ndarray
    values: np.ndarray
    max_drift: float
    scale: float
    relative_drift: float
    drift_vs_initial: float

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.times.tolist(), self.values.tolist()))


def energy_series(traj: Trajectory) -> EnergyReport:
    hpoly = traj.hamiltonian.poly(exact=True) if traj.hamiltonian.exact else traj.hamiltonian.poly()
    terms = list(hpoly.sorted_terms())
    if traj.meta.get("precision") == Precision.DOUBLE_DOUBLE.value:
        values, term_mags = _energy_dd(traj, terms)
    else:
        s = traj.precise_states()
        term_mags = np.zeros(len(s), dtype=np.longdouble)
        values = np.zeros(len(s), dtype=np.longdouble)
        for e, c in terms:
            v = np.full(len(s), np.longdouble(float(c)), dtype=np.longdouble)
            if isinstance(c, Fraction):
                v = v + np.longdouble(float(c - Fraction(float(c))))
            for j in range(6):
                if e[j + 1]:
                    v = v * s[:, j] ** e[j + 1]
            values = values + v
            term_mags = term_mags + np.abs(v)
    drift = np.abs(values - values[0])
    max_drift = float(np.max(drift))
    scale = float(np.max(term_mags))
    h0 = abs(float(values[0]))
    return EnergyReport(
        traj.times.copy(),
        np.asarray(values, dtype=float),
        max_drift,
        scale,
        max_drift / scale if scale > 0 else max_drift,
        max_drift / h0 if h0 > 0 else math.inf if max_drift > 0 else 0.0,
    )


def _energy_dd(traj: Trajectory, terms):
    """Energy in double-double; returned as longdouble arrays (hi + lo)."""
    sh = np.ascontiguousarray(traj.states)
    sl = np.ascontiguousarray(traj.state_lows if traj.state_lows is not None else np.zeros_like(sh))
    n = len(sh)
    th = np.ascontiguousarray(traj.times)
    tl = traj.time_lows if traj.time_lows is not None else np.zeros(n)
    split = [_split_coeff(c) for _, c in terms]
    exps = np.array([e for e, _ in terms], dtype=np.int64).reshape(len(terms), 7)
    ch = np.array([s[0] for s in split])
    cl = np.array([s[1] for s in split])
    vh, vl = _kernels.dd_eval_scalar_poly(th, tl, sh, sl, ch, cl, exps)
    mags = np.zeros(n, dtype=np.longdouble)
    for i in range(len(terms)):
        th_i, tl_i = _kernels.dd_eval_scalar_poly(th, tl, sh, sl, ch[i : i + 1], cl[i : i + 1], exps[i : i + 1])
        mags = mags + np.abs(th_i.astype(np.longdouble) + tl_i)
    # subtract H(0) in double-double before leaving the extended format
    dh, dl = _kernels.dd_minus_first(vh, vl)
    values = np.longdouble(vh[0]) + np.longdouble(vl[0]) + (dh.astype(np.longdouble) + dl)
    return values, mags


@dataclass(frozen=True)
class NewtonResidual:
    """Finite-difference residual of ``m x'' - rhs(t, x, x')`` per axis."""

    absolute: np.ndarray
    scale: np.ndarray
    step: float

    @property
    def relative(self) -> np.ndarray:
        return self.absolute / np.where(self.scale > 0, self.scale, 1.0)


def newton_residual(traj: Trajectory, rhs: Sequence[Poly] | None = None) -> NewtonResidual:
    """Central second differences at interior samples against the Newton equations.

    ``scale`` is the largest sum of absolute term values per axis (including
    ``m x''``); use it to compare runs whose magnitudes differ.
    """
    if len(traj) < 5:
        raise ValueError("need at least 5 samples")
    step = traj.uniform_step()
    if rhs is None:
        rhs = newton_rhs(traj.table, traj.hamiltonian)
    x = traj.precise_states()[:, :3]
    vel = (x[2:] - x[:-2]) / (2 * np.longdouble(step))
    acc = (x[2:] - 2 * x[1:-1] + x[:-2]) / np.longdouble(step) ** 2
    t = traj.times[1:-1].astype(np.longdouble)
    if traj.time_lows is not None:
        t = t + traj.time_lows[1:-1]
    point = np.column_stack([t, x[1:-1], vel])
    mass = np.longdouble(float(traj.hamiltonian.mass))
    absolute = np.empty(3)
    scale = np.empty(3)
    for a in range(3):
        total = mass * acc[:, a]
        mags = np.abs(total)
        for e, c in rhs[a].items():
            v = np.full(len(point), np.longdouble(float(c)))
            for j in range(7):
                if e[j]:
                    v = v * point[:, j] ** e[j]
            total = total - v
            mags = mags + np.abs(v)
        absolute[a] = float(np.max(np.abs(total)))
        scale[a] = float(np.max(mags))
    return NewtonResidual(absolute, scale, step)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def phase_csv(times: np.ndarray, states: np.ndarray, energy: np.ndarray) -> str:
    """Trajectory CSV text with 17 significant digits."""
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for t, s, e in zip(times, states, energy):
        buf.write(",".join(f"{float(v):.17g}" for v in (t, *s, e)) + "\n")
    return buf.getvalue()


def trajectory_csv(traj: Trajectory, energy: EnergyReport | None = None) -> str:
    energy = energy or energy_series(traj)
    return phase_csv(traj.times, traj.states, energy.values)


def space_table(spec: SpaceSpec, h: Hamiltonian) -> BracketTable:
    """Float table for numerics; exact when both inputs are exact."""
    return build_table(spec, exact=spec.exact and h.exact)
