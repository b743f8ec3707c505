"""Poisson brackets of polynomial phase-space functions and the equations of motion.

Functions live over :data:`PHASE_VARS`; ``t`` is carried as a polynomial
variable but is central, so it never enters the derivative sums.  Newton
equations are polynomials over :data:`NEWTON_VARS` where ``v_*`` stand for the
velocities.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Number, Rational
from typing import Sequence, Union

import numpy as np

from .algebra import BASIS, AffineExpr, BracketTable, SpaceSpec, build_table, coerce_scalar
from .errors import EliminationError
from .poly import Poly

PHASE_VARS = ("t",) + BASIS
NEWTON_VARS = ("t", "x_k", "x_l", "x_gamma", "v_k", "v_l", "v_gamma")
POSITION_SLOTS = (1, 2, 3)
MOMENTUM_SLOTS = (4, 5, 6)


def phase_var(name: str, coeff=1) -> Poly:
    return Poly.variable(PHASE_VARS, name, coeff)


def phase_const(c) -> Poly:
    return Poly.constant(PHASE_VARS, c)


def affine_to_poly(expr: AffineExpr) -> Poly:
    return Poly.linear(PHASE_VARS, expr.const, (expr.t_coeff,) + tuple(expr.coords))


@dataclass(frozen=True)
class Hamiltonian:
    """``H = |p|^2 / 2m - F . x`` for a constant force ``F``."""

    mass: Union[Fraction, float]
    force: tuple = (0, 0, 0)

    def __post_init__(self):
        force = tuple(self.force)
        if len(force) != 3:
            raise ValueError("force must have three components")
        for v in (self.mass,) + force:
            if not isinstance(v, Number) or isinstance(v, bool):
                raise TypeError(f"expected a number, got {v!r}")
            if isinstance(v, float) and not np.isfinite(v):
                raise ValueError("mass and force must be finite")
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        object.__setattr__(self, "force", force)

    @property
    def exact(self) -> bool:
        return all(isinstance(v, Rational) for v in (self.mass,) + self.force)

    def coerced(self, exact: bool) -> "Hamiltonian":
        return Hamiltonian(
            coerce_scalar(self.mass, exact), tuple(coerce_scalar(f, exact) for f in self.force)
        )

    def poly(self, exact: bool | None = None) -> Poly:
        if exact is None:
            exact = self.exact
        h = self.coerced(exact)
        half_inv_m = coerce_scalar(1, exact) / (2 * h.mass)
        total = Poly.zero(PHASE_VARS)
        for i, f in enumerate(h.force):
            total = total + phase_var(BASIS[3 + i]) ** 2 * half_inv_m
            total = total - phase_var(BASIS[i]) * f
        return total

    def kinetic_and_potential(self, exact: bool | None = None) -> tuple[Poly, Poly]:
        hp = self.poly(exact)
        kin = Poly(PHASE_VARS, {e: c for e, c in hp.items() if sum(e[4:]) > 0})
        return kin, hp - kin


def _check_phase(p: Poly) -> None:
    if p.vars != PHASE_VARS:
        raise ValueError(f"expected a polynomial over {PHASE_VARS}, got {p.vars}")


def poisson_bracket(f: Poly, g: Poly, table: BracketTable) -> Poly:
    """``sum_ab {xi_a, xi_b} df/dxi_a dg/dxi_b`` over the six phase coordinates."""
    _check_phase(f)
    _check_phase(g)
    df = [f.diff(i + 1) for i in range(6)]
    dg = [g.diff(i + 1) for i in range(6)]
    total = Poly.zero(PHASE_VARS)
    rows = table.entries
    for a in range(6):
        if df[a].is_zero():
            continue
        for b in range(6):
            if a == b or dg[b].is_zero() or rows[a][b].is_zero():
                continue
            total = total + affine_to_poly(rows[a][b]) * df[a] * dg[b]
    return total


def hamilton_rhs(table: BracketTable, h: Hamiltonian) -> tuple[Poly, ...]:
    """Time derivatives ``{xi_a, H}`` of the six phase coordinates."""
    hp = h.poly(table.exact)
    return tuple(poisson_bracket(phase_var(name), hp, table) for name in BASIS)


def _table_for(space, h: Hamiltonian) -> BracketTable:
    if isinstance(space, BracketTable):
        return space
    if isinstance(space, SpaceSpec):
        return build_table(space, exact=space.exact and h.exact)
    raise TypeError(f"expected SpaceSpec or BracketTable, got {type(space).__name__}")


def _det3(m):
    return (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )


def _adj3(m):
    cof = [[None] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(3):
            r = [x for x in range(3) if x != i]
            c = [y for y in range(3) if y != j]
            minor = m[r[0]][c[0]] * m[r[1]][c[1]] - m[r[0]][c[1]] * m[r[1]][c[0]]
            cof[i][j] = minor if (i + j) % 2 == 0 else -minor
    return [[cof[j][i] for j in range(3)] for i in range(3)]


def _to_newton(p: Poly) -> Poly:
    """Re-home a polynomial in (t, x) onto :data:`NEWTON_VARS`."""
    if p.degree_in(MOMENTUM_SLOTS) > 0:
        raise EliminationError("unexpected momentum dependence")
    return Poly(NEWTON_VARS, dict(p.items()))


def eliminate_momenta(space, h: Hamiltonian) -> tuple[Poly, ...]:
    """Momenta as polynomials in ``(t, x, v)`` by inverting ``v = xdot(t, x, p)``.

    The velocity map must be affine in ``p`` with a constant nonzero Jacobian
    determinant so that the inverse stays polynomial.
    """
    table = _table_for(space, h)
    rhs = hamilton_rhs(table, h)
    matrix = [[None] * 3 for _ in range(3)]
    offset = []
    for a in range(3):
        groups = rhs[a].collect(MOMENTUM_SLOTS)
        for key in groups:
            if sum(key) > 1:
                raise EliminationError(f"d{BASIS[a]}/dt is not affine in the momenta")
        offset.append(_to_newton(groups.get((0, 0, 0), Poly.zero(PHASE_VARS))))
        for b in range(3):
            key = tuple(1 if i == b else 0 for i in range(3))
            matrix[a][b] = _to_newton(groups.get(key, Poly.zero(PHASE_VARS)))
    det = _det3(matrix)
    if det.degree() != 0:
        raise EliminationError("velocity map has a non-constant or vanishing Jacobian")
    det_value = det.constant_term()
    adj = _adj3(matrix)
    rhs_vec = [Poly.variable(NEWTON_VARS, 4 + a) - offset[a] for a in range(3)]
    inv = (1 / det_value) if not table.exact else Fraction(1) / det_value
    out = []
    for a in range(3):
        acc = Poly.zero(NEWTON_VARS)
        for b in range(3):
            acc = acc + adj[a][b] * rhs_vec[b]
        out.append(acc * inv)
    return tuple(out)


def newton_rhs(space, h: Hamiltonian) -> tuple[Poly, ...]:
    """``m * x_a''`` as polynomials in ``(t, x, v)``, with the momenta eliminated."""
    table = _table_for(space, h)
    rhs = hamilton_rhs(table, h)
    momenta = eliminate_momenta(table, h)
    mass = coerce_scalar(h.mass, table.exact)
    images = [Poly.variable(NEWTON_VARS, i) for i in range(4)] + list(momenta)
    out = []
    for a in range(3):
        x_dot = rhs[a]
        # total time derivative along the Hamiltonian flow
        total = x_dot.diff(0)
        for b in range(6):
            d = x_dot.diff(b + 1)
            if not d.is_zero():
                total = total + d * rhs[b]
        out.append(total.compose(NEWTON_VARS, images) * mass)
    return tuple(out)


def momenta_from_velocities(space, h: Hamiltonian, t: float, position: Sequence, velocity: Sequence) -> np.ndarray:
    """Numerical momenta matching given positions and velocities at time ``t``."""
    momenta = eliminate_momenta(space, h)
    point = np.array([t, *position, *velocity], dtype=float)
    return np.array([p.evaluate(point) for p in momenta], dtype=float)


def relabel_phase_poly(p: Poly, slots: Sequence[int]) -> Poly:
    """Move coordinate slot ``i`` (0..5 over ``BASIS``) to ``slots[i]``; ``t`` stays put."""
    out = {}
    for exp, c in p.items():
        new = [0] * 7
        new[0] = exp[0]
        for i in range(6):
            new[1 + slots[i]] = exp[1 + i]
        out[tuple(new)] = c
    return Poly(p.vars, out)
