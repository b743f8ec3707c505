"""Hand-written Hamilton and Newton equations for the Type I and Type II spaces.

These are typed in term by term, independently of the bracket machinery in
:mod:`ncphase.poisson`, so that comparing the two catches mistakes on either
side.  Everything is written for the default axis assignment and relabelled
afterwards when the space uses a different one.
"""

from __future__ import annotations

from .algebra import SpaceKind, SpaceSpec, coerce_scalar
from .poisson import NEWTON_VARS, PHASE_VARS, Hamiltonian, relabel_phase_poly
from .poly import Poly


def _params(spec: SpaceSpec, h: Hamiltonian, exact: bool):
    c = lambda v: coerce_scalar(v, exact)
    ik, ikt, ikb = (c(v) for v in spec.inverse_parameters)
    m = c(h.mass)
    # force components in role order (k, l, gamma)
    fk, fl, fg = (c(h.force[a - 1]) for a in spec.axes)
    return ik, ikt, ikb, m, fk, fl, fg


def _role_slots(spec: SpaceSpec) -> tuple[int, ...]:
    return spec.role_slots()


def reference_hamilton(spec: SpaceSpec, h: Hamiltonian, exact: bool | None = None) -> tuple[Poly, ...]:
    if exact is None:
        exact = spec.exact and h.exact
    ik, ikt, ikb, m, fk, fl, fg = _params(spec, h, exact)
    v = lambda name: Poly.variable(PHASE_VARS, name)
    one = Poly.constant(PHASE_VARS, coerce_scalar(1, exact))
    t, xk, xl, xg, pk, pl, pg = (v(n) for n in PHASE_VARS)
    inv_m = coerce_scalar(1, exact) / m
    if spec.kind is SpaceKind.TYPE_II:
        eqs = (
            pk * inv_m + t * (fg * ik) - xl * (fg * ikt),
            pl * inv_m - t * (fg * ik) + xk * (fg * ikt),
            pg * inv_m - (pk * xl + pl * xk) * (ikb * inv_m) - t * ((fk - fl) * ik) + (xl * fk - xk * fl) * ikt,
            one * fk - xl * (fg * ikb) - pl * (fg * ikt),
            one * fl - xk * (fg * ikb) + pk * (fg * ikt),
            one * fg,
        )
    else:
        # the commutative space is the Type I table with vanishing parameters
        eqs = (
            pk * inv_m - t * ((fl - fg) * ik) - xl * (fg * ikt),
            pl * inv_m + t * ((fk - fg) * ik) + xk * (fg * ikt),
            pg * inv_m - t * ((fk - fl) * ik) + (xl * fk - xk * fl) * ikt,
            one * fk - pl * (fg * ikt),
            one * fl + pk * (fg * ikt),
            one * fg,
        )
    slots = _role_slots(spec)
    out = [None] * 6
    for r, eq in enumerate(eqs):
        out[slots[r]] = relabel_phase_poly(eq, slots)
    return tuple(out)


def reference_newton(spec: SpaceSpec, h: Hamiltonian, exact: bool | None = None) -> tuple[Poly, ...]:
    """``m * x''`` for each axis over ``(t, x, v)``."""
    if exact is None:
        exact = spec.exact and h.exact
    ik, ikt, ikb, m, fk, fl, fg = _params(spec, h, exact)
    v = lambda name: Poly.variable(NEWTON_VARS, name)
    one = Poly.constant(NEWTON_VARS, coerce_scalar(1, exact))
    t, xk, xl, xg, vk, vl, vg = (v(n) for n in NEWTON_VARS)
    w = fg * ikt
    if spec.kind is SpaceKind.TYPE_II:
        eq_k = (
            one * (fk + m * fg * ik)
            - t * (m * fg * fg * ik * ikt)
            + xk * (m * w * w)
            - xl * (fg * ikb)
            - vl * (2 * m * w)
        )
        eq_l = (
            one * (fl - m * fg * ik)
            - t * (m * fg * fg * ik * ikt)
            + xl * (m * w * w)
            - xk * (fg * ikb)
            + vk * (2 * m * w)
        )
        acc_k = eq_k * (coerce_scalar(1, exact) / m)
        acc_l = eq_l * (coerce_scalar(1, exact) / m)
        # second time derivative of the product x_k x_l
        prod_dd = acc_k * xl + vk * vl * 2 + xk * acc_l
        eq_g = (
            one * (fg - m * (fk - fl) * ik)
            - prod_dd * (m * ikb)
            - (xk - xl + t * vk - t * vl) * (m * fg * ik * ikb)
            + (vl * fk - vk * fl) * (m * ikt)
            + (xk * vk * 2 - xl * vl * 2) * (m * fg * ikt * ikb)
        )
    else:
        eq_k = (
            one * (fk - m * (fl - fg) * ik)
            + t * (m * (fk - fg) * fg * ik * ikt)
            + xk * (m * w * w)
            - vl * (2 * m * w)
        )
        eq_l = (
            one * (fl + m * (fk - fg) * ik)
            + t * (m * (fl - fg) * fg * ik * ikt)
            + xl * (m * w * w)
            + vk * (2 * m * w)
        )
        eq_g = one * (fg - m * (fk - fl) * ik) + (vl * fk - vk * fl) * (m * ikt)
    slots = _role_slots(spec)
    out = [None] * 3
    for r, eq in enumerate((eq_k, eq_l, eq_g)):
        out[slots[r]] = relabel_phase_poly(eq, slots)
    return tuple(out)
