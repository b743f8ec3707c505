"""Closed-form trajectories for the Type I and Type II spaces.

All formulas are written in the role frame ``(k, l, gamma)``; inputs and
outputs use physical slot order and are mapped through ``spec.axes``.  Time
may be a scalar or a 1-D array; positions come back with shape ``(3,)`` or
``(n, 3)``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .algebra import SpaceKind, SpaceSpec
from .errors import (
    CaseBoundary,
    DegenerateFrequency,
    MaxRefinementExceeded,
    UndefinedEpsilon,
)
from .poisson import Hamiltonian

CRITICAL_TOL = 1e-9
SERIES_THRESHOLD = 1e-4
QUAD_ABS_TOL = 1e-10
QUAD_REL_TOL = 1e-12


@dataclass(frozen=True)
class InitialConditions:
    x0: tuple = (0.0, 0.0, 0.0)
    v0: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        x0 = tuple(float(v) for v in self.x0)
        v0 = tuple(float(v) for v in self.v0)
        if len(x0) != 3 or len(v0) != 3:
            raise ValueError("x0 and v0 need three components")
        if not all(math.isfinite(v) for v in x0 + v0):
            raise ValueError("initial conditions must be finite")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "v0", v0)


@dataclass(frozen=True)
class _RoleParams:
    ik: float
    ikt: float
    ikb: float
    m: float
    fk: float
    fl: float
    fg: float
    xk0: float
    xl0: float
    xg0: float
    vk0: float
    vl0: float
    vg0: float


def _role_params(spec: SpaceSpec, h: Hamiltonian, ic: InitialConditions) -> _RoleParams:
    ax = [a - 1 for a in spec.axes]
    return _RoleParams(
        float(spec.inv_kappa),
        float(spec.inv_kappa_tilde),
        float(spec.inv_kappa_bar),
        float(h.mass),
        *(float(h.force[a]) for a in ax),
        *(ic.x0[a] for a in ax),
        *(ic.v0[a] for a in ax),
    )


def _to_physical(spec: SpaceSpec, xk, xl, xg, scalar: bool) -> np.ndarray:
    out = np.empty(np.shape(xk) + (3,))
    for r, val in enumerate((xk, xl, xg)):
        out[..., spec.axes[r] - 1] = val
    return out if not scalar else out.reshape(3)


# ---------------------------------------------------------------------------
# small-argument helpers
# ---------------------------------------------------------------------------


def sin_over(omega: float, t):
    """``sin(omega t) / omega``, series expanded for ``|omega t| < 1e-4``."""
    t = np.asarray(t, dtype=float)
    x = omega * t
    small = np.abs(x) < SERIES_THRESHOLD
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.sin(x) / omega if omega != 0 else np.zeros_like(t)
    series = t * (1 - x * x / 6 + x**4 / 120)
    return np.where(small, series, direct)


def sinh_over(omega: float, t):
    """``sinh(omega t) / omega``, series expanded for ``|omega t| < 1e-4``."""
    t = np.asarray(t, dtype=float)
    x = omega * t
    small = np.abs(x) < SERIES_THRESHOLD
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        direct = np.sinh(x) / omega if omega != 0 else np.zeros_like(t)
    series = t * (1 + x * x / 6 + x**4 / 120)
    return np.where(small, series, direct)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

# 15-point Kronrod nodes on [0, 1] with the embedded 7-point Gauss rule
_XK = np.array(
    [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.0,
    ]
)
_WK = np.array(
    [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ]
)
_WG = np.array(
    [
        0.129484966168869693270611432679082,
        0.279705391489276667901467771423780,
        0.381830050505118944950369775488975,
        0.417959183673469387755102040816327,
    ]
)
_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])  # 15 nodes, ascending
_WEIGHTS_K = np.concatenate([_WK[:-1], _WK[::-1]])
_WEIGHTS_G = np.zeros(15)
# Gauss nodes are the odd-indexed Kronrod nodes (x[1], x[3], x[5], 0)
for _i, _w in zip((1, 3, 5), _WG[:3]):
    _WEIGHTS_G[_i] = _w
    _WEIGHTS_G[14 - _i] = _w
_WEIGHTS_G[7] = _WG[3]


def _gk15(f: Callable, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Kronrod estimate and error bound on each interval ``[a_i, b_i]``."""
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = center[:, None] + half[:, None] * _NODES[None, :]
    y = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
    k = half * (y @ _WEIGHTS_K)
    g = half * (y @ _WEIGHTS_G)
    return k, np.abs(k - g)


def _target(tol: float, rel_tol: float, value: float) -> float:
    return max(tol, rel_tol * abs(value))


def quadrature(
    f: Callable,
    a: float,
    b: float,
    tol: float = QUAD_ABS_TOL,
    rel_tol: float = 0.0,
    max_intervals: int = 10_000,
) -> float:
    """Globally adaptive Gauss-Kronrod (7/15) integral of a vectorised ``f``.

    Stops when the summed error estimate is at most ``max(tol, rel_tol * |I|)``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if a == b:
        return 0.0
    val, err = _gk15(f, np.array([a], float), np.array([b], float))
    heap = [(-err[0], a, b, val[0])]
    total, total_err = val[0], err[0]
    while total_err > _target(tol, rel_tol, total):
        if len(heap) >= max_intervals:
            raise MaxRefinementExceeded(
                f"error estimate {total_err:.3e} above tolerance after {len(heap)} intervals"
            )
        neg_err, lo, hi, v = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        vals, errs = _gk15(f, np.array([lo, mid]), np.array([mid, hi]))
        total += vals.sum() - v
        total_err += errs.sum() + neg_err
        heapq.heappush(heap, (-errs[0], lo, mid, vals[0]))
        heapq.heappush(heap, (-errs[1], mid, hi, vals[1]))
    # recompute the sum from the pieces to shed accumulated rounding
    return float(math.fsum(item[3] for item in heap))


def cumulative_quadrature(
    f: Callable,
    points: np.ndarray,
    tol: float = QUAD_ABS_TOL,
    rel_tol: float = QUAD_REL_TOL,
    max_intervals: int = 10_000,
) -> np.ndarray:
    """``int_{points[0]}^{points[i]} f`` for every ``i``.

    Each gap gets a share of the tolerance proportional to its length; gaps
    that fail the one-shot 15-point rule are refined individually.
    """
    pts = np.asarray(points, dtype=float)
    if pts.size < 2:
        return np.zeros(pts.size)
    a, b = pts[:-1], pts[1:]
    vals, errs = _gk15(f, a, b)
    total_len = float(np.sum(np.abs(b - a))) or 1.0
    share = np.abs(b - a) / total_len
    scale = float(np.sum(np.abs(vals)))
    budget = np.maximum(tol, rel_tol * scale) * share
    for i in np.nonzero(errs > budget)[0]:
        if a[i] == b[i]:
            continue
        vals[i] = quadrature(f, a[i], b[i], tol=max(budget[i], 1e-300), rel_tol=0.0, max_intervals=max_intervals)
    out = np.empty(pts.size)
    out[0] = 0.0
    out[1:] = np.cumsum(vals)
    return out


def _integral_from_zero(f: Callable, t: np.ndarray, tol: float, rel_tol: float) -> np.ndarray:
    grid = np.concatenate([[0.0], t])
    return cumulative_quadrature(f, grid, tol, rel_tol)[1:]


# ---------------------------------------------------------------------------
# commutative and Type I
# ---------------------------------------------------------------------------


def commutative_solution(h: Hamiltonian, ic: InitialConditions, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    x0, v0 = np.array(ic.x0), np.array(ic.v0)
    f = np.array([float(v) for v in h.force]) / float(h.mass)
    return x0 + v0 * t[..., None] + 0.5 * f * t[..., None] ** 2


def typeI_kl(p: _RoleParams, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = p.fg * p.ikt
    if w == 0:
        raise DegenerateFrequency("F_gamma / kappa_tilde vanishes; no oscillatory closed form")
    q = 1.0 / w
    m = p.m
    s, c = np.sin(w * t), np.cos(w * t)
    amp_a = q * q / m * (p.fl + m * (-(p.fk - p.fg) * p.ik + w * w * p.xl0))
    amp_b = q * q / m * (p.fk + m * ((p.fl - p.fg) * p.ik + w * w * p.xk0))
    lin_a = w * (p.xk0 - q * p.vl0 + q * q * p.fk / m)
    lin_b = w * (p.xl0 + q * p.vk0 + q * q * p.fl / m)
    xk = (
        -amp_a * s
        + amp_b * c
        + lin_a * t * s
        + lin_b * t * c
        - q * (p.fk - p.fg) * p.ik * t
        - q * q / m * (p.fk + m * (p.fl - p.fg) * p.ik)
    )
    xl = (
        amp_b * s
        + amp_a * c
        + lin_b * t * s
        - lin_a * t * c
        - q * (p.fl - p.fg) * p.ik * t
        - q * q / m * (p.fl - m * (p.fk - p.fg) * p.ik)
    )
    return xk, xl


def typeI_solution(
    spec: SpaceSpec,
    h: Hamiltonian,
    ic: InitialConditions,
    t,
    tol: float = QUAD_ABS_TOL,
    rel_tol: float = QUAD_REL_TOL,
) -> np.ndarray:
    if spec.kind is not SpaceKind.TYPE_I:
        raise ValueError("typeI_solution needs a Type I space")
    p = _role_params(spec, h, ic)
    scalar = np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    xk, xl = typeI_kl(p, tt)
    xg = (
        p.xg0
        + (p.vg0 - (p.fk * p.xl0 - p.fl * p.xk0) * p.ikt) * tt
        + (p.fg / p.m - (p.fk - p.fl) * p.ik) * tt**2 / 2
    )
    if p.ikt != 0 and (p.fk != 0 or p.fl != 0):

        def integrand(z):
            a, b = typeI_kl(p, z)
            return p.fk * b - p.fl * a

        xg = xg + p.ikt * _integral_from_zero(integrand, tt, tol, rel_tol)
    xk, xl, xg = _pin_origin(tt, (xk, xl, xg), (p.xk0, p.xl0, p.xg0))
    return _to_physical(spec, xk, xl, xg, scalar)


def _pin_origin(t, comps, initial):
    """Return the initial position exactly at ``t == 0`` (no rounding residue)."""
    at_zero = t == 0
    if not np.any(at_zero):
        return comps
    return tuple(np.where(at_zero, x0, c) for c, x0 in zip(comps, initial))


# ---------------------------------------------------------------------------
# Type II
# ---------------------------------------------------------------------------


class Regime(str, Enum):
    SUB = "sub"
    SUPER = "super"
    CRITICAL = "critical"


@dataclass(frozen=True)
class EpsilonCase:
    regime: Regime
    epsilon: float
    tol: float


def epsilon_of(spec: SpaceSpec, h: Hamiltonian) -> float:
    if spec.kind is not SpaceKind.TYPE_II:
        raise UndefinedEpsilon("epsilon is only defined for Type II spaces")
    ikt, ikb = float(spec.inv_kappa_tilde), float(spec.inv_kappa_bar)
    fg = float(h.force[spec.axes[2] - 1])
    if ikt == 0 or ikb == 0:
        raise UndefinedEpsilon("epsilon needs finite kappa_tilde and kappa_bar")
    if fg <= 0:
        raise UndefinedEpsilon(f"epsilon needs F_gamma > 0, got {fg}")
    return fg * float(h.mass) * ikt * ikt / ikb


def classify_epsilon(h: Hamiltonian, spec: SpaceSpec, tol: float = CRITICAL_TOL) -> EpsilonCase:
    eps = epsilon_of(spec, h)
    if abs(eps - 1) <= tol:
        regime = Regime.CRITICAL
    elif eps < 1:
        regime = Regime.SUB
    else:
        regime = Regime.SUPER
    return EpsilonCase(regime, eps, tol)


@dataclass(frozen=True)
class TypeIIConstants:
    """Time-independent quantities of the Type II solutions.

    ``omega2`` exists for ``epsilon < 1`` and ``omega2_prime`` for
    ``epsilon > 1``; ``A``, ``B_k`` and ``B_l`` are undefined at ``epsilon == 1``
    and left as ``None`` there.
    """

    epsilon: float
    omega: float
    omega1: float
    omega2: float | None
    omega2_prime: float | None
    A: float | None
    B_k: float | None
    B_l: float | None
    C: float

    @property
    def omega2_or_prime(self) -> float:
        return self.omega2 if self.omega2 is not None else self.omega2_prime


def _constants(p: _RoleParams, eps: float, critical: bool) -> TypeIIConstants:
    w = p.fg * p.ikt
    ikb = p.m * p.fg * p.ikt**2 if critical else p.ikb
    omega1 = w * math.sqrt((1 + eps) / eps)
    omega2 = w * math.sqrt((1 - eps) / eps) if eps < 1 and not critical else None
    omega2p = w * math.sqrt((eps - 1) / eps) if eps > 1 and not critical else None
    if critical:
        a = bk = bl = None
    else:
        a = -eps / (1 - eps) * p.ik / p.ikt
        pre = 1.0 / (p.fg * (1 - eps))
        bk = pre * ((eps * p.fk + p.fl) / (ikb * (1 + eps)) - eps * p.ik / p.ikt**2)
        bl = pre * ((p.fk + eps * p.fl) / (ikb * (1 + eps)) + eps * p.ik / p.ikt**2)
    c = (
        p.vg0
        + (p.xk0 * p.vl0 + p.xl0 * p.vk0) * ikb
        - (p.fk * p.xl0 - p.fl * p.xk0) * p.ikt
        - p.fg * p.ikt * ikb * (p.xk0**2 - p.xl0**2)
    )
    return TypeIIConstants(eps, w, omega1, omega2, omega2p, a, bk, bl, c)


def type2_constants(
    spec: SpaceSpec, h: Hamiltonian, ic: InitialConditions, tol: float = CRITICAL_TOL
) -> TypeIIConstants:
    case = classify_epsilon(h, spec, tol)
    return _constants(_role_params(spec, h, ic), case.epsilon, case.regime is Regime.CRITICAL)


def _kl_two_frequency(p: _RoleParams, k: TypeIIConstants, t: np.ndarray, hyperbolic: bool):
    eps, w = k.epsilon, k.omega
    X, Y = p.xk0 - k.B_k, p.xl0 - k.B_l
    U, V = p.vk0 - k.A, p.vl0 - k.A
    f1s = sin_over(k.omega1, t)
    f1c = np.cos(k.omega1 * t)
    if hyperbolic:
        f2s = sinh_over(k.omega2, t)
        f2c = np.cosh(k.omega2 * t)
    else:
        f2s = sin_over(k.omega2_prime, t)
        f2c = np.cos(k.omega2_prime * t)
    r = eps / w
    xk = (
        (-w * (X - eps * Y) + (1 + 2 * eps) / 2 * U + V / 2) * f1s
        + ((1 - 2 * eps) / 2 * X + Y / 2 + r * V) * f1c
        + (w * (X - eps * Y) + (1 - 2 * eps) / 2 * U - V / 2) * f2s
        + ((1 + 2 * eps) / 2 * X - Y / 2 - r * V) * f2c
        + k.A * t
        + k.B_k
    )
    xl = (
        (w * (Y - eps * X) + (1 + 2 * eps) / 2 * V + U / 2) * f1s
        + ((1 - 2 * eps) / 2 * Y + X / 2 - r * U) * f1c
        + (-w * (Y - eps * X) + (1 - 2 * eps) / 2 * V - U / 2) * f2s
        + ((1 + 2 * eps) / 2 * Y - X / 2 + r * U) * f2c
        + k.A * t
        + k.B_l
    )
    return xk, xl


def _kl_critical(p: _RoleParams, t: np.ndarray):
    w = p.fg * p.ikt
    q = 1.0 / w
    m = p.m
    r2 = math.sqrt(2.0)
    s, c = np.sin(r2 * w * t), np.cos(r2 * w * t)
    cubic = p.fg**2 * p.ik * p.ikt / 6 * t**3
    xk = (
        (p.fl / m * q * q - (p.xk0 - p.xl0) + q / 2 * (3 * p.vk0 + p.vl0)) / r2 * s
        - ((3 * p.fk + p.fl) / m * q * q + 2 * (p.xk0 - p.xl0 - 2 * q * p.vl0)) / 4 * c
        + cubic
        - (p.fk + p.fl - 2 * m * p.fg * p.ik) / (4 * m) * t**2
        + (w * (p.xk0 - p.xl0) - (p.vk0 + p.vl0) / 2 - p.fl / m * q) * t
        + ((3 * p.fk + p.fl) / m * q * q + 2 * (3 * p.xk0 - p.xl0 - 2 * q * p.vl0)) / 4
    )
    xl = (
        -(p.fk / m * q * q - (p.xl0 - p.xk0) - q / 2 * (3 * p.vl0 + p.vk0)) / r2 * s
        - ((3 * p.fl + p.fk) / m * q * q + 2 * (p.xl0 - p.xk0 + 2 * q * p.vk0)) / 4 * c
        + cubic
        - (p.fl + p.fk + 2 * m * p.fg * p.ik) / (4 * m) * t**2
        + (-w * (p.xl0 - p.xk0) - (p.vl0 + p.vk0) / 2 + p.fk / m * q) * t
        # constant term: +2q v_k0 is what the initial condition x_l(0) = x_l0 requires
        + ((3 * p.fl + p.fk) / m * q * q + 2 * (3 * p.xl0 - p.xk0 + 2 * q * p.vk0)) / 4
    )
    return xk, xl


def typeII_solution(
    spec: SpaceSpec,
    h: Hamiltonian,
    ic: InitialConditions,
    t,
    tol: float = CRITICAL_TOL,
    force_regime: Regime | None = None,
    quad_tol: float = QUAD_ABS_TOL,
    quad_rel_tol: float = QUAD_REL_TOL,
) -> np.ndarray:
    """Type II positions.

    ``force_regime`` selects a branch explicitly; forcing the sub- or
    super-critical formulas inside the critical band raises
    :class:`CaseBoundary`.
    """
    case = classify_epsilon(h, spec, tol)
    regime = case.regime
    if force_regime is not None:
        force_regime = Regime(force_regime)
        if regime is Regime.CRITICAL and force_regime is not Regime.CRITICAL:
            raise CaseBoundary(f"epsilon={case.epsilon!r} is within {tol} of 1")
        if force_regime is Regime.CRITICAL and regime is not Regime.CRITICAL:
            raise CaseBoundary(f"epsilon={case.epsilon!r} is not critical within {tol}")
        if force_regime is not regime:
            raise CaseBoundary(f"epsilon={case.epsilon!r} belongs to the {regime.value} regime")
    p = _role_params(spec, h, ic)
    critical = regime is Regime.CRITICAL
    k = _constants(p, case.epsilon, critical)
    ikb = p.m * p.fg * p.ikt**2 if critical else p.ikb

    if critical:
        kl = lambda z: _kl_critical(p, z)
    else:
        hyperbolic = regime is Regime.SUB
        kl = lambda z: _kl_two_frequency(p, k, z, hyperbolic)

    scalar = np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    xk, xl = kl(tt)

    def integrand(z):
        a, b = kl(z)
        return (p.fk * b - p.fl * a) * p.ikt - p.fg * ikb * (z * (a - b) * p.ik - (a * a - b * b) * p.ikt)

    xg = (
        p.xg0
        + k.C * tt
        + (p.fg / p.m - (p.fk - p.fl) * p.ik) * tt**2 / 2
        - (xk * xl - p.xk0 * p.xl0) * ikb
        + _integral_from_zero(integrand, tt, quad_tol, quad_rel_tol)
    )
    xk, xl, xg = _pin_origin(tt, (xk, xl, xg), (p.xk0, p.xl0, p.xg0))
    return _to_physical(spec, xk, xl, xg, scalar)


def closed_form(spec: SpaceSpec, h: Hamiltonian, ic: InitialConditions, t, **kwargs) -> np.ndarray:
    """Dispatch on the space kind.

    Raises :class:`DegenerateFrequency` or :class:`UndefinedEpsilon` for the
    corners without a closed form; see :func:`solution_or_numeric`.
    """
    if spec.kind is SpaceKind.COMMUTATIVE:
        return commutative_solution(h, ic, t)
    if spec.kind is SpaceKind.TYPE_I:
        if spec.inv_kappa == 0 and spec.inv_kappa_tilde == 0:
            return commutative_solution(h, ic, t)
        return typeI_solution(spec, h, ic, t)
    return typeII_solution(spec, h, ic, t, **kwargs)


def solution_or_numeric(spec: SpaceSpec, h: Hamiltonian, ic: InitialConditions, t) -> tuple[np.ndarray, str]:
    """Closed form where one exists, otherwise a tight DOP853 integration.

    Returns ``(positions, source)`` with ``source`` either ``"closed-form"``
    or ``"numeric"``.
    """
    try:
        return closed_form(spec, h, ic, t), "closed-form"
    except (DegenerateFrequency, UndefinedEpsilon):
        pass
    from scipy.integrate import solve_ivp

    from .dynamics import CompiledField, space_table
    from .poisson import hamilton_rhs, momenta_from_velocities

    tt = np.atleast_1d(np.asarray(t, dtype=float))
    table = space_table(spec, h)
    field = CompiledField.from_polys(hamilton_rhs(table, h))
    y0 = np.concatenate([ic.x0, momenta_from_velocities(table, h, 0.0, ic.x0, ic.v0)])
    out = np.empty((tt.size, 3))
    # integrate forward and backward from t = 0 to cover any grid
    for mask in (tt > 0, tt < 0):
        if not np.any(mask):
            continue
        targets = tt[mask]
        order = np.argsort(np.abs(targets))
        sol = solve_ivp(
            field, (0.0, targets[order][-1]), y0, method="DOP853",
            t_eval=targets[order], rtol=1e-13, atol=1e-14,
        )
        if not sol.success:
            raise RuntimeError(f"numeric fallback failed: {sol.message}")
        vals = np.empty((targets.size, 3))
        vals[order] = sol.y[:3].T
        out[mask] = vals
    out[tt == 0] = ic.x0
    return (out.reshape(3) if np.ndim(t) == 0 else out), "numeric"
