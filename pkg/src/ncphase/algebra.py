"""Bracket tables, structure constants and Jacobi-identity checks.

Phase-space slots are ordered ``(x_1, x_2, x_3, p_1, p_2, p_3)``.  Under the
default axis assignment the roles ``(k, l, gamma)`` sit on axes ``(1, 2, 3)``, so
the slot names used throughout are ``x_k, x_l, x_gamma, p_k, p_l, p_gamma``.
A non-default ``axes`` permutation moves the role entries onto other slots
while the slot names keep referring to physical positions.

Two arithmetic modes exist: exact (``Fraction`` scalars) and float.  A table
or tensor set is always entirely in one mode.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from numbers import Number, Rational
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

Scalar = Union[Fraction, float]

BASIS = ("x_k", "x_l", "x_gamma", "p_k", "p_l", "p_gamma")
FIELDS = ("const", "t") + BASIS
AXIS_ROLES = ("k", "l", "gamma")
TRIPLES = tuple(itertools.combinations(range(6), 3))
RESIDUAL_LABELS = tuple(
    (tuple(BASIS[i] for i in tri), f) for tri in TRIPLES for f in FIELDS
)
"""Index labels of :func:`jacobi_residual`: lexicographic in (triple, field)."""


def coerce_scalar(x, exact: bool) -> Scalar:
    if exact:
        if isinstance(x, float):
            return Fraction(x)
        if isinstance(x, str):
            return Fraction(x)
        return Fraction(x)
    if isinstance(x, str):
        return float(Fraction(x))
    return float(x)


def _is_exact_value(x) -> bool:
    return isinstance(x, Rational) and not isinstance(x, bool)


def format_scalar(x: Scalar):
    """JSON encoding: rationals as ``"p/q"`` strings, floats as numbers."""
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    return float(x)


def parse_scalar(v, exact: bool) -> Scalar:
    if isinstance(v, str):
        v = Fraction(v)
    return coerce_scalar(v, exact)


def _slot(name: str | int) -> int:
    if isinstance(name, (int, np.integer)):
        if not 0 <= name < 6:
            raise IndexError(f"slot {name} out of range")
        return int(name)
    return BASIS.index(name)


# ---------------------------------------------------------------------------
# Affine expressions and tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineExpr:
    """``const + t_coeff * t + sum(coords[i] * xi_i)``."""

    const: Scalar = 0
    t_coeff: Scalar = 0
    coords: tuple = (0, 0, 0, 0, 0, 0)

    def __post_init__(self):
        if len(self.coords) != 6:
            raise ValueError("coords must have 6 entries")
        object.__setattr__(self, "coords", tuple(self.coords))

    @classmethod
    def zero(cls, exact: bool = True) -> "AffineExpr":
        z = coerce_scalar(0, exact)
        return cls(z, z, (z,) * 6)

    @property
    def fields(self) -> tuple:
        return (self.const, self.t_coeff) + self.coords

    def coerced(self, exact: bool) -> "AffineExpr":
        c = lambda v: coerce_scalar(v, exact)
        return AffineExpr(c(self.const), c(self.t_coeff), tuple(c(v) for v in self.coords))

    def is_zero(self) -> bool:
        return all(v == 0 for v in self.fields)

    def __add__(self, other: "AffineExpr") -> "AffineExpr":
        return AffineExpr(
            self.const + other.const,
            self.t_coeff + other.t_coeff,
            tuple(a + b for a, b in zip(self.coords, other.coords)),
        )

    def __neg__(self) -> "AffineExpr":
        return AffineExpr(-self.const, -self.t_coeff, tuple(-a for a in self.coords))

    def __sub__(self, other: "AffineExpr") -> "AffineExpr":
        return self + (-other)

    def scale(self, c) -> "AffineExpr":
        return AffineExpr(self.const * c, self.t_coeff * c, tuple(a * c for a in self.coords))

    def render(self) -> str:
        parts = []
        for name, v in zip(("1", "t") + BASIS, self.fields):
            if v == 0:
                continue
            parts.append(f"{format_scalar(v)}" if name == "1" else f"{format_scalar(v)}*{name}")
        return " + ".join(parts) if parts else "0"


class BracketTable:
    """Antisymmetric 6x6 table of :class:`AffineExpr` brackets ``{xi_a, xi_b}``.

    Only off-diagonal pairs can be given; an entry supplied as ``(b, a)`` with
    ``b > a`` is stored as its negative at ``(a, b)``.  Unspecified brackets are
    zero.
    """

    __slots__ = ("_entries", "exact")

    def __init__(self, brackets: Mapping[tuple, AffineExpr] | None = None, exact: bool = True):
        self.exact = bool(exact)
        zero = AffineExpr.zero(self.exact)
        upper: dict[tuple[int, int], AffineExpr] = {}
        for (a, b), expr in (brackets or {}).items():
            a, b = _slot(a), _slot(b)
            if a == b:
                raise ValueError(f"diagonal bracket {{{BASIS[a]}, {BASIS[a]}}} is always zero")
            expr = expr.coerced(self.exact)
            if a > b:
                a, b, expr = b, a, -expr
            if (a, b) in upper:
                raise ValueError(f"bracket {{{BASIS[a]}, {BASIS[b]}}} given twice")
            upper[(a, b)] = expr
        rows = [[zero] * 6 for _ in range(6)]
        for (a, b), expr in upper.items():
            rows[a][b] = expr
            rows[b][a] = -expr
        self._entries = tuple(tuple(r) for r in rows)

    @classmethod
    def canonical(cls, exact: bool = True) -> "BracketTable":
        one = coerce_scalar(1, exact)
        zero = coerce_scalar(0, exact)
        return cls({(i, i + 3): AffineExpr(one, zero, (zero,) * 6) for i in range(3)}, exact)

    @property
    def entries(self) -> tuple:
        return self._entries

    def __getitem__(self, key) -> AffineExpr:
        a, b = key
        return self._entries[_slot(a)][_slot(b)]

    def upper(self) -> dict[tuple[int, int], AffineExpr]:
        return {
            (a, b): self._entries[a][b]
            for a in range(6)
            for b in range(a + 1, 6)
            if not self._entries[a][b].is_zero()
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, BracketTable):
            return NotImplemented
        return all(
            self._entries[a][b].fields == other._entries[a][b].fields
            for a in range(6)
            for b in range(6)
        )

    def __hash__(self):
        return hash(tuple(e.fields for row in self._entries for e in row))

    def to_float(self) -> "BracketTable":
        return BracketTable(self.upper(), exact=False)

    def relabel(self, sigma: Sequence[int]) -> "BracketTable":
        """Move physical axis ``j`` (1-based) to axis ``sigma[j-1]``."""
        sigma = _check_axes(sigma)
        slot = [sigma[i] - 1 for i in range(3)] + [3 + sigma[i] - 1 for i in range(3)]
        out = {}
        for (a, b), e in self.upper().items():
            coords = [0] * 6
            for i, v in enumerate(e.coords):
                coords[slot[i]] = v
            out[(slot[a], slot[b])] = AffineExpr(e.const, e.t_coeff, tuple(coords))
        return BracketTable(out, self.exact)

    def render(self) -> str:
        lines = []
        for (a, b), e in sorted(self.upper().items()):
            lines.append(f"{{{BASIS[a]}, {BASIS[b]}}} = {e.render()}")
        return "\n".join(lines)

    def __repr__(self) -> str:
        return f"BracketTable(exact={self.exact}, {len(self.upper())} nonzero)"

    # JSON -------------------------------------------------------------------
    def to_json(self) -> dict:
        brackets = []
        for (a, b), e in sorted(self.upper().items()):
            item = {"pair": [BASIS[a], BASIS[b]]}
            if e.const != 0:
                item["const"] = format_scalar(e.const)
            if e.t_coeff != 0:
                item["t"] = format_scalar(e.t_coeff)
            coords = {BASIS[i]: format_scalar(v) for i, v in enumerate(e.coords) if v != 0}
            if coords:
                item["coords"] = coords
            brackets.append(item)
        return {
            "basis": list(BASIS),
            "mode": "exact" if self.exact else "float",
            "brackets": brackets,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "BracketTable":
        if list(data.get("basis", BASIS)) != list(BASIS):
            raise ValueError(f"basis must be {list(BASIS)}")
        mode = data.get("mode", "exact")
        if mode not in ("exact", "float"):
            raise ValueError(f"unknown mode {mode!r}")
        exact = mode == "exact"
        allowed = {"pair", "const", "t", "coords"}
        brackets = {}
        for item in data.get("brackets", []):
            extra = set(item) - allowed
            if extra:
                raise ValueError(f"unknown bracket key(s): {sorted(extra)}")
            a, b = item["pair"]
            coords = item.get("coords", {})
            if isinstance(coords, Mapping):
                vec = [0] * 6
                for name, v in coords.items():
                    vec[_slot(name)] = parse_scalar(v, exact)
            else:
                vec = [parse_scalar(v, exact) for v in coords]
            expr = AffineExpr(
                parse_scalar(item.get("const", 0), exact),
                parse_scalar(item.get("t", 0), exact),
                tuple(coerce_scalar(v, exact) for v in vec),
            )
            brackets[(a, b)] = expr
        return cls(brackets, exact)


# ---------------------------------------------------------------------------
# Named spaces
# ---------------------------------------------------------------------------


class SpaceKind(str, Enum):
    COMMUTATIVE = "commutative"
    TYPE_I = "type1"
    TYPE_II = "type2"

    @classmethod
    def parse(cls, value) -> "SpaceKind":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("_", "").replace("-", "").replace(" ", "")
        aliases = {
            "commutative": cls.COMMUTATIVE,
            "canonical": cls.COMMUTATIVE,
            "type1": cls.TYPE_I,
            "typei": cls.TYPE_I,
            "type2": cls.TYPE_II,
            "typeii": cls.TYPE_II,
        }
        if key not in aliases:
            raise ValueError(f"unknown space kind {value!r}")
        return aliases[key]


def _check_axes(axes) -> tuple[int, int, int]:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != [1, 2, 3]:
        raise ValueError(f"axes must be a permutation of (1, 2, 3), got {axes}")
    return axes


@dataclass(frozen=True)
class SpaceSpec:
    """A named noncommutative space.

    Parameters are stored as inverses (``1/kappa`` etc.) so that the
    commutative limit is an exact zero.
    """

    kind: SpaceKind
    inv_kappa: Scalar = 0
    inv_kappa_tilde: Scalar = 0
    inv_kappa_bar: Scalar = 0
    axes: tuple[int, int, int] = (1, 2, 3)

    def __post_init__(self):
        object.__setattr__(self, "kind", SpaceKind.parse(self.kind))
        object.__setattr__(self, "axes", _check_axes(self.axes))
        for name in ("inv_kappa", "inv_kappa_tilde", "inv_kappa_bar"):
            v = getattr(self, name)
            if not isinstance(v, Number) or isinstance(v, bool):
                raise TypeError(f"{name} must be a number, got {v!r}")
            if isinstance(v, float) and not np.isfinite(v):
                raise ValueError(f"{name} must be finite")
        if self.kind is SpaceKind.COMMUTATIVE and any(
            v != 0 for v in (self.inv_kappa, self.inv_kappa_tilde, self.inv_kappa_bar)
        ):
            raise ValueError("a commutative space has all inverse parameters equal to zero")
        if self.kind is SpaceKind.TYPE_I and self.inv_kappa_bar != 0:
            raise ValueError("Type I spaces have no kappa_bar parameter (inv_kappa_bar must be 0)")

    @classmethod
    def from_kappas(
        cls,
        kind,
        kappa=None,
        kappa_tilde=None,
        kappa_bar=None,
        axes=(1, 2, 3),
        exact: bool = True,
    ) -> "SpaceSpec":
        """Build from the parameters themselves; ``None`` means infinity."""

        def inv(v):
            if v is None:
                return coerce_scalar(0, exact)
            v = coerce_scalar(v, exact)
            if v == 0:
                raise ValueError("noncommutative parameters must be nonzero (use None for infinity)")
            return 1 / v

        return cls(kind, inv(kappa), inv(kappa_tilde), inv(kappa_bar), axes)

    @property
    def exact(self) -> bool:
        return all(
            _is_exact_value(v) for v in (self.inv_kappa, self.inv_kappa_tilde, self.inv_kappa_bar)
        )

    @property
    def inverse_parameters(self) -> tuple:
        return (self.inv_kappa, self.inv_kappa_tilde, self.inv_kappa_bar)

    def role_slots(self) -> tuple[int, ...]:
        """Physical slot of each role slot ``(x_k, x_l, x_g, p_k, p_l, p_g)``."""
        ax = self.axes
        return tuple(a - 1 for a in ax) + tuple(3 + a - 1 for a in ax)

    def undeformed(self) -> "SpaceSpec":
        return SpaceSpec(SpaceKind.COMMUTATIVE, 0, 0, 0, self.axes)

    def as_float(self) -> "SpaceSpec":
        return SpaceSpec(
            self.kind,
            float(self.inv_kappa),
            float(self.inv_kappa_tilde),
            float(self.inv_kappa_bar),
            self.axes,
        )

    def as_exact(self) -> "SpaceSpec":
        return SpaceSpec(
            self.kind,
            Fraction(self.inv_kappa),
            Fraction(self.inv_kappa_tilde),
            Fraction(self.inv_kappa_bar),
            self.axes,
        )

    def to_json(self) -> dict:
        def kap(v):
            return None if v == 0 else format_scalar(1 / v if _is_exact_value(v) else 1.0 / v)

        return {
            "kind": self.kind.value,
            "kappa": kap(self.inv_kappa),
            "kappa_tilde": kap(self.inv_kappa_tilde),
            "kappa_bar": kap(self.inv_kappa_bar),
            "axes": list(self.axes),
        }


def build_table(spec: SpaceSpec, exact: bool | None = None) -> BracketTable:
    """Bracket table of a named space.

    Inverse parameters multiply in place of divisions, so a zero inverse drops
    the corresponding term.  Brackets the space does not list are zero.
    """
    if exact is None:
        exact = spec.exact
    c = lambda v: coerce_scalar(v, exact)
    ik, ikt, ikb = (c(v) for v in spec.inverse_parameters)
    z = c(0)
    one = c(1)

    def expr(const=z, t=z, **coords):
        vec = [z] * 6
        for name, v in coords.items():
            vec[BASIS.index(name)] = c(v)
        return AffineExpr(const, t, tuple(vec))

    # role frame: slots 0..5 = x_k, x_l, x_gamma, p_k, p_l, p_gamma
    role: dict[tuple[int, int], AffineExpr] = {
        (0, 3): expr(const=one),
        (1, 4): expr(const=one),
        (2, 5): expr(const=one),
    }
    if spec.kind is SpaceKind.TYPE_I:
        role[(0, 2)] = expr(t=-ik, x_l=ikt)
        role[(1, 2)] = expr(t=ik, x_k=-ikt)
        role[(0, 1)] = expr(t=ik)
        # {p_k, x_g} = p_l/kt and {p_l, x_g} = -p_k/kt
        role[(3, 2)] = expr(p_l=ikt)
        role[(4, 2)] = expr(p_k=-ikt)
    elif spec.kind is SpaceKind.TYPE_II:
        role[(0, 2)] = expr(t=-ik, x_l=ikt)
        role[(1, 2)] = expr(t=ik, x_k=-ikt)
        # {p_k, x_g} = x_l/kb + p_l/kt and {p_l, x_g} = x_k/kb - p_k/kt
        role[(3, 2)] = expr(x_l=ikb, p_l=ikt)
        role[(4, 2)] = expr(x_k=ikb, p_k=-ikt)

    slots = spec.role_slots()
    placed = {}
    for (a, b), e in role.items():
        coords = [z] * 6
        for i, v in enumerate(e.coords):
            coords[slots[i]] = v
        placed[(slots[a], slots[b])] = AffineExpr(e.const, e.t_coeff, tuple(coords))
    return BracketTable(placed, exact)


# ---------------------------------------------------------------------------
# Jacobi identity on tables
# ---------------------------------------------------------------------------


def _bracket_with_coordinate(table: BracketTable, e: AffineExpr, c: int) -> AffineExpr:
    """``{e, xi_c}`` by bilinearity; ``t`` and constants are central."""
    acc = AffineExpr.zero(table.exact)
    rows = table.entries
    for d, coef in enumerate(e.coords):
        if coef != 0:
            acc = acc + rows[d][c].scale(coef)
    return acc


def jacobi_terms(table: BracketTable) -> list[tuple[tuple[int, int, int], AffineExpr]]:
    """Jacobiator of every unordered triple of distinct phase coordinates."""
    out = []
    E = table.entries
    for a, b, c in TRIPLES:
        j = (
            _bracket_with_coordinate(table, E[a][b], c)
            + _bracket_with_coordinate(table, E[c][a], b)
            + _bracket_with_coordinate(table, E[b][c], a)
        )
        out.append(((a, b, c), j))
    return out


def jacobi_residual(table: BracketTable) -> tuple:
    """Flat residual vector; identically zero iff the table is admissible.

    Layout is lexicographic in (triple, field) as listed in
    :data:`RESIDUAL_LABELS`: 20 triples times 8 coefficient fields.
    """
    out = []
    for _, j in jacobi_terms(table):
        out.extend(j.fields)
    return tuple(out)


def is_admissible(table: BracketTable) -> bool:
    return all(v == 0 for v in jacobi_residual(table))


def jacobi_violations(table: BracketTable) -> list[tuple[tuple[str, str, str], AffineExpr]]:
    return [
        (tuple(BASIS[i] for i in tri), j) for tri, j in jacobi_terms(table) if not j.is_zero()
    ]


# ---------------------------------------------------------------------------
# Structure-constant tensors
# ---------------------------------------------------------------------------

_ROLE_INDEX = {"k": 0, "l": 1, "g": 2, "gamma": 2, 1: 0, 2: 1, 3: 2}


def _idx(i) -> int:
    if isinstance(i, str):
        return _ROLE_INDEX[i]
    return int(i)


@dataclass(frozen=True, eq=False)
class StructureTensors:
    """Coefficients of the coordinate brackets.

    Array layouts (indices 0..2 are spatial axes):

    * ``theta0[a, b]``: time coefficient of ``{x_a, x_b}``
    * ``theta[a, b, c]``: ``x_c`` coefficient of ``{x_a, x_b}``
    * ``theta_bar[a, b, c]``: ``x_c`` coefficient of ``{x_a, p_b}``
    * ``theta_tilde[a, b, c]``: ``p_c`` coefficient of ``{x_a, p_b}``

    ``theta0`` and ``theta`` are antisymmetric in ``(a, b)``; ``theta_bar`` and
    ``theta_tilde`` vanish for ``a == b`` and carry no symmetry otherwise.
    """

    theta0: np.ndarray
    theta: np.ndarray
    theta_bar: np.ndarray
    theta_tilde: np.ndarray
    exact: bool = field(default=True)

    def __post_init__(self):
        dtype = object if self.exact else float
        conv = (lambda v: coerce_scalar(v, True)) if self.exact else float
        arrays = {}
        for name, shape in (
            ("theta0", (3, 3)),
            ("theta", (3, 3, 3)),
            ("theta_bar", (3, 3, 3)),
            ("theta_tilde", (3, 3, 3)),
        ):
            arr = np.asarray(getattr(self, name), dtype=object)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            arr = np.vectorize(conv, otypes=[dtype])(arr) if arr.size else arr
            arr = np.array(arr, dtype=dtype)
            arr.setflags(write=False)
            arrays[name] = arr
            object.__setattr__(self, name, arr)
        t0, th = arrays["theta0"], arrays["theta"]
        for a in range(3):
            for b in range(3):
                if t0[a, b] != -t0[b, a]:
                    raise ValueError(f"theta0 not antisymmetric at ({a}, {b})")
                for c in range(3):
                    if th[a, b, c] != -th[b, a, c]:
                        raise ValueError(f"theta not antisymmetric at ({a}, {b}; {c})")
        for name in ("theta_bar", "theta_tilde"):
            arr = arrays[name]
            for a in range(3):
                for c in range(3):
                    if arr[a, a, c] != 0:
                        raise ValueError(f"{name} must vanish for equal lower indices ({a}, {a}; {c})")

    @classmethod
    def zeros(cls, exact: bool = True) -> "StructureTensors":
        z = coerce_scalar(0, exact)
        return cls(
            np.full((3, 3), z, dtype=object),
            np.full((3, 3, 3), z, dtype=object),
            np.full((3, 3, 3), z, dtype=object),
            np.full((3, 3, 3), z, dtype=object),
            exact,
        )

    @classmethod
    def build(
        cls,
        theta0: Mapping | None = None,
        theta: Mapping | None = None,
        theta_bar: Mapping | None = None,
        theta_tilde: Mapping | None = None,
        exact: bool = True,
    ) -> "StructureTensors":
        """Create from sparse entries.

        Keys are ``(a, b)`` for ``theta0`` and ``(a, b, c)`` (lower, lower,
        upper) for the rest; indices may be 0..2 or the role letters
        ``'k'``, ``'l'``, ``'g'``.  Antisymmetric partners of ``theta0`` and
        ``theta`` entries are filled in.
        """
        z = coerce_scalar(0, exact)
        t0 = np.full((3, 3), z, dtype=object)
        th = np.full((3, 3, 3), z, dtype=object)
        tb = np.full((3, 3, 3), z, dtype=object)
        tt = np.full((3, 3, 3), z, dtype=object)
        for (a, b), v in (theta0 or {}).items():
            a, b = _idx(a), _idx(b)
            v = coerce_scalar(v, exact)
            t0[a, b], t0[b, a] = v, -v
        for (a, b, c), v in (theta or {}).items():
            a, b, c = _idx(a), _idx(b), _idx(c)
            v = coerce_scalar(v, exact)
            th[a, b, c], th[b, a, c] = v, -v
        for src, dst in ((theta_bar, tb), (theta_tilde, tt)):
            for (a, b, c), v in (src or {}).items():
                dst[_idx(a), _idx(b), _idx(c)] = coerce_scalar(v, exact)
        return cls(t0, th, tb, tt, exact)

    def to_float(self) -> "StructureTensors":
        return StructureTensors(self.theta0, self.theta, self.theta_bar, self.theta_tilde, False)

    def scaled(self, lam) -> "StructureTensors":
        """Tensors seen after the rescaling ``x -> lam x``, ``p -> p / lam``."""
        return StructureTensors(
            self.theta0 * lam * lam,
            self.theta * lam,
            self.theta_bar / lam if self.exact else self.theta_bar / float(lam),
            self.theta_tilde * lam,
            self.exact,
        )

    def permuted(self, sigma: Sequence[int]) -> "StructureTensors":
        """Relabel spatial axis ``j`` (1-based) as ``sigma[j-1]``."""
        s = [a - 1 for a in _check_axes(sigma)]
        inv = [0, 0, 0]
        for i, j in enumerate(s):
            inv[j] = i
        idx = np.array(inv)
        return StructureTensors(
            self.theta0[np.ix_(idx, idx)],
            self.theta[np.ix_(idx, idx, idx)],
            self.theta_bar[np.ix_(idx, idx, idx)],
            self.theta_tilde[np.ix_(idx, idx, idx)],
            self.exact,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, StructureTensors):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, n), getattr(other, n))
            for n in ("theta0", "theta", "theta_bar", "theta_tilde")
        )

    def to_json(self) -> dict:
        def enc(arr):
            return np.vectorize(format_scalar, otypes=[object])(arr).tolist()

        return {
            "mode": "exact" if self.exact else "float",
            "layout": "theta0[a][b], theta*[a][b][c] = coefficient of the c-th coordinate in the (a, b) bracket",
            "theta0": enc(self.theta0),
            "theta": enc(self.theta),
            "theta_bar": enc(self.theta_bar),
            "theta_tilde": enc(self.theta_tilde),
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "StructureTensors":
        exact = data.get("mode", "exact") == "exact"
        dec = lambda arr: np.vectorize(lambda v: parse_scalar(v, exact), otypes=[object])(
            np.array(arr, dtype=object)
        )
        return cls(
            dec(data["theta0"]),
            dec(data["theta"]),
            dec(data["theta_bar"]),
            dec(data["theta_tilde"]),
            exact,
        )


def table_from_tensors(tensors: StructureTensors, delta_on: bool = True) -> BracketTable:
    """Induced table: ``{x_a,x_b} = theta0 t + theta x``, ``{x_a,p_b} = delta + theta_bar x + theta_tilde p``."""
    exact = tensors.exact
    z = coerce_scalar(0, exact)
    one = coerce_scalar(1, exact)
    brackets = {}
    for a in range(3):
        for b in range(a + 1, 3):
            coords = tuple(tensors.theta[a, b, c] for c in range(3)) + (z, z, z)
            brackets[(a, b)] = AffineExpr(z, tensors.theta0[a, b], coords)
    for a in range(3):
        for b in range(3):
            const = one if (a == b and delta_on) else z
            coords = tuple(tensors.theta_bar[a, b, c] for c in range(3)) + tuple(
                tensors.theta_tilde[a, b, c] for c in range(3)
            )
            brackets[(a, 3 + b)] = AffineExpr(const, z, coords)
    return BracketTable(brackets, exact)


def tensors_from_table(table: BracketTable) -> StructureTensors:
    """Read structure constants off a table of the affine Lie-algebraic form.

    Raises ``ValueError`` when the table has terms the tensor form cannot hold
    (momentum brackets, constants off the ``{x_a, p_a}`` diagonal, ...).
    """
    exact = table.exact
    z = coerce_scalar(0, exact)
    t0 = np.full((3, 3), z, dtype=object)
    th = np.full((3, 3, 3), z, dtype=object)
    tb = np.full((3, 3, 3), z, dtype=object)
    tt = np.full((3, 3, 3), z, dtype=object)
    for a in range(3):
        for b in range(3):
            if a != b:
                e = table[a, b]
                if e.const != 0 or any(v != 0 for v in e.coords[3:]):
                    raise ValueError(f"{{{BASIS[a]}, {BASIS[b]}}} is not of the form theta0 t + theta x")
                t0[a, b] = e.t_coeff
                for c in range(3):
                    th[a, b, c] = e.coords[c]
            e = table[a, 3 + b]
            if e.t_coeff != 0:
                raise ValueError(f"{{{BASIS[a]}, {BASIS[3 + b]}}} depends on t")
            expected = 1 if a == b else 0
            if e.const != expected:
                raise ValueError(f"{{{BASIS[a]}, {BASIS[3 + b]}}} has constant {e.const}, expected {expected}")
            for c in range(3):
                tb[a, b, c] = e.coords[c]
                tt[a, b, c] = e.coords[3 + c]
            if not table[3 + a, 3 + b].is_zero():
                raise ValueError("momentum brackets must vanish")
    return StructureTensors(t0, th, tb, tt, exact)


# ---------------------------------------------------------------------------
# Constraint equations written directly in the structure constants
# ---------------------------------------------------------------------------

CONSTRAINT_BLOCKS = (
    ("xxx_time", 3),
    ("xxx_coord", 4),
    ("xpp_const", 3),
    ("xxp_const", 3),
    ("xxp_time", 3),
    ("xpp_coord", 4),
    ("xpp_mom", 4),
    ("xxp_mom", 4),
    ("xxp_coord", 4),
)
"""Blocks of :func:`tensor_constraint_residual` with their number of free indices.

Each block enumerates its free indices lexicographically over ``range(3)``.
Names record which Jacobi triple (x/p pattern) and which coefficient
(time, constant, coordinate, momentum) the relation comes from.
"""


def constraint_block_slices() -> dict[str, slice]:
    out, start = {}, 0
    for name, nfree in CONSTRAINT_BLOCKS:
        out[name] = slice(start, start + 3**nfree)
        start += 3**nfree
    return out


def tensor_constraint_residual(tensors: StructureTensors) -> tuple:
    """Left-hand sides of the quadratic/linear constraints on the structure constants.

    Writing ``T0 = theta0``, ``T^c_ab = theta[a,b,c]``, ``Tb^c_ab =
    theta_bar[a,b,c]`` and ``Tt^c_ab = theta_tilde[a,b,c]`` (repeated indices
    summed):

    * ``xxx_time``   ``T^d_ab T0_dc + T^d_ca T0_db + T^d_bc T0_da``
    * ``xxx_coord``  ``T^e_ab T^d_ec + T^e_ca T^d_eb + T^e_bc T^d_ea``
    * ``xpp_const``  ``Tb^a_cb - Tb^b_ca``
    * ``xxp_const``  ``T^c_ab + Tt^b_ac - Tt^a_bc``
    * ``xxp_time``   ``Tb^d_bc T0_da - Tb^d_ac T0_db``
    * ``xpp_coord``  ``Tb^e_ca Tb^d_eb - Tb^e_cb Tb^d_ea``
    * ``xpp_mom``    ``Tb^e_ca Tt^d_eb - Tb^e_cb Tt^d_ea``
    * ``xxp_mom``    ``T^e_ab Tt^d_ec - Tt^e_bc Tt^d_ae + Tt^e_ac Tt^d_be``
    * ``xxp_coord``  ``T^e_ab Tb^d_ec + Tb^e_bc T^d_ea - Tb^e_ac T^d_eb
      - Tt^e_bc Tb^d_ae + Tt^e_ac Tb^d_be``
    """
    T0 = tensors.theta0
    T = lambda c, a, b: tensors.theta[a, b, c]
    Tb = lambda c, a, b: tensors.theta_bar[a, b, c]
    Tt = lambda c, a, b: tensors.theta_tilde[a, b, c]
    R = range(3)
    zero = coerce_scalar(0, tensors.exact)

    def s(f):
        acc = zero
        for i in R:
            acc = acc + f(i)
        return acc

    out: list = []
    for a, b, c in itertools.product(R, R, R):
        out.append(
            s(lambda d: T(d, a, b) * T0[d, c] + T(d, c, a) * T0[d, b] + T(d, b, c) * T0[d, a])
        )
    for a, b, c, d in itertools.product(R, R, R, R):
        out.append(
            s(lambda e: T(e, a, b) * T(d, e, c) + T(e, c, a) * T(d, e, b) + T(e, b, c) * T(d, e, a))
        )
    for a, b, c in itertools.product(R, R, R):
        out.append(Tb(a, c, b) - Tb(b, c, a))
    for a, b, c in itertools.product(R, R, R):
        out.append(T(c, a, b) + Tt(b, a, c) - Tt(a, b, c))
    for a, b, c in itertools.product(R, R, R):
        out.append(s(lambda d: Tb(d, b, c) * T0[d, a] - Tb(d, a, c) * T0[d, b]))
    for a, b, c, d in itertools.product(R, R, R, R):
        out.append(s(lambda e: Tb(e, c, a) * Tb(d, e, b) - Tb(e, c, b) * Tb(d, e, a)))
    for a, b, c, d in itertools.product(R, R, R, R):
        out.append(s(lambda e: Tb(e, c, a) * Tt(d, e, b) - Tb(e, c, b) * Tt(d, e, a)))
    for a, b, c, d in itertools.product(R, R, R, R):
        out.append(
            s(lambda e: T(e, a, b) * Tt(d, e, c) - Tt(e, b, c) * Tt(d, a, e) + Tt(e, a, c) * Tt(d, b, e))
        )
    for a, b, c, d in itertools.product(R, R, R, R):
        out.append(
            s(
                lambda e: T(e, a, b) * Tb(d, e, c)
                + Tb(e, b, c) * T(d, e, a)
                - Tb(e, a, c) * T(d, e, b)
                - Tt(e, b, c) * Tb(d, a, e)
                + Tt(e, a, c) * Tb(d, b, e)
            )
        )
    return tuple(out)


def residual_norm(values: Iterable) -> float:
    """Euclidean norm, computed exactly for rationals before the final root."""
    vals = list(values)
    if vals and all(isinstance(v, Fraction) for v in vals):
        return float(sum(v * v for v in vals)) ** 0.5
    return float(np.sqrt(sum(float(v) ** 2 for v in vals)))
