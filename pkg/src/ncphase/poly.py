"""Sparse multivariate polynomials with exact or floating coefficients.

A :class:`Poly` is a mapping from exponent tuples to nonzero coefficients over a
fixed, named variable tuple.  Coefficients are whatever numeric type the caller
supplies (``fractions.Fraction`` for exact work, ``float`` for numerics); the
class never converts between them on its own.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Number
from typing import Iterable, Mapping, Sequence

import numpy as np

Exponent = tuple[int, ...]


def _is_zero(c) -> bool:
    return c == 0


class Poly:
    """Immutable sparse polynomial over ``vars``."""

    __slots__ = ("vars", "_terms")

    def __init__(self, vars: Sequence[str], terms: Mapping[Exponent, object] | None = None):
        self.vars = tuple(vars)
        n = len(self.vars)
        clean: dict[Exponent, object] = {}
        for exp, c in (terms or {}).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != n:
                raise ValueError(f"exponent {exp} does not match {n} variables")
            if any(e < 0 for e in exp):
                raise ValueError(f"negative exponent {exp}")
            if _is_zero(c):
                continue
            if exp in clean:
                c = clean[exp] + c
                if _is_zero(c):
                    del clean[exp]
                    continue
            clean[exp] = c
        self._terms = clean

    # construction -----------------------------------------------------------
    @classmethod
    def zero(cls, vars: Sequence[str]) -> "Poly":
        return cls(vars)

    @classmethod
    def constant(cls, vars: Sequence[str], c) -> "Poly":
        return cls(vars, {(0,) * len(vars): c})

    @classmethod
    def variable(cls, vars: Sequence[str], name: str | int, coeff=1) -> "Poly":
        vars = tuple(vars)
        i = vars.index(name) if isinstance(name, str) else int(name)
        exp = [0] * len(vars)
        exp[i] = 1
        return cls(vars, {tuple(exp): coeff})

    @classmethod
    def linear(cls, vars: Sequence[str], const, coeffs: Sequence) -> "Poly":
        """``const + sum(coeffs[i] * vars[i])``."""
        vars = tuple(vars)
        n = len(vars)
        terms: dict[Exponent, object] = {(0,) * n: const}
        for i, c in enumerate(coeffs):
            if _is_zero(c):
                continue
            exp = [0] * n
            exp[i] = 1
            terms[tuple(exp)] = c
        return cls(vars, terms)

    # container protocol -----------------------------------------------------
    @property
    def terms(self) -> dict[Exponent, object]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms)

    def coeff(self, exp: Exponent):
        return self._terms.get(tuple(exp), 0)

    def is_zero(self) -> bool:
        return not self._terms

    def degree(self) -> int:
        return max((sum(e) for e in self._terms), default=-1)

    def degree_in(self, indices: Iterable[int]) -> int:
        idx = list(indices)
        return max((sum(e[i] for i in idx) for e in self._terms), default=-1)

    def constant_term(self):
        return self._terms.get((0,) * len(self.vars), 0)

    # arithmetic -------------------------------------------------------------
    def _check(self, other: "Poly") -> None:
        if self.vars != other.vars:
            raise ValueError(f"variable mismatch: {self.vars} vs {other.vars}")

    def _lift(self, other) -> "Poly":
        if isinstance(other, Poly):
            self._check(other)
            return other
        if isinstance(other, Number):
            return Poly.constant(self.vars, other)
        return NotImplemented

    def __add__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        terms = dict(self._terms)
        for exp, c in other._terms.items():
            terms[exp] = terms[exp] + c if exp in terms else c
        return Poly(self.vars, terms)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly(self.vars, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Number):
            return Poly(self.vars, {e: c * other for e, c in self._terms.items()})
        other = self._lift(other)
        if other is NotImplemented:
            return other
        out: dict[Exponent, object] = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                c = c1 * c2
                out[e] = out[e] + c if e in out else c
        return Poly(self.vars, out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Poly":
        if n < 0:
            raise ValueError("negative power")
        result = Poly.constant(self.vars, 1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def __eq__(self, other) -> bool:
        if isinstance(other, Number):
            other = Poly.constant(self.vars, other)
        if not isinstance(other, Poly):
            return NotImplemented
        return self.vars == other.vars and self._terms == other._terms

    def __hash__(self):
        return hash((self.vars, frozenset(self._terms.items())))

    # calculus and substitution ---------------------------------------------
    def diff(self, var: str | int) -> "Poly":
        i = self.vars.index(var) if isinstance(var, str) else int(var)
        out: dict[Exponent, object] = {}
        for exp, c in self._terms.items():
            k = exp[i]
            if k == 0:
                continue
            e = list(exp)
            e[i] = k - 1
            out[tuple(e)] = c * k
        return Poly(self.vars, out)

    def collect(self, indices: Sequence[int]) -> dict[Exponent, "Poly"]:
        """Split by the exponents of ``indices``.

        Returns ``{sub_exponent: coefficient_poly}`` where each coefficient poly
        no longer depends on the collected variables.
        """
        idx = list(indices)
        groups: dict[Exponent, dict[Exponent, object]] = {}
        for exp, c in self._terms.items():
            key = tuple(exp[i] for i in idx)
            rest = list(exp)
            for i in idx:
                rest[i] = 0
            groups.setdefault(key, {})[tuple(rest)] = c
        return {k: Poly(self.vars, v) for k, v in groups.items()}

    def compose(self, target_vars: Sequence[str], images: Sequence["Poly"]) -> "Poly":
        """Substitute ``vars[i] -> images[i]``; result lives over ``target_vars``."""
        target_vars = tuple(target_vars)
        if len(images) != len(self.vars):
            raise ValueError("one image per variable required")
        for im in images:
            if im.vars != target_vars:
                raise ValueError("image variable mismatch")
        cache: dict[tuple[int, int], Poly] = {}

        def power(i: int, k: int) -> Poly:
            if (i, k) not in cache:
                cache[(i, k)] = images[i] ** k
            return cache[(i, k)]

        total = Poly.zero(target_vars)
        for exp, c in self._terms.items():
            term = Poly.constant(target_vars, c)
            for i, k in enumerate(exp):
                if k:
                    term = term * power(i, k)
            total = total + term
        return total

    def map_coeffs(self, f) -> "Poly":
        return Poly(self.vars, {e: f(c) for e, c in self._terms.items()})

    def to_float(self) -> "Poly":
        return self.map_coeffs(float)

    def to_exact(self) -> "Poly":
        return self.map_coeffs(Fraction)

    # evaluation -------------------------------------------------------------
    def __call__(self, *values):
        if len(values) != len(self.vars):
            raise ValueError(f"expected {len(self.vars)} values")
        total = 0
        for exp, c in self._terms.items():
            term = c
            for v, k in zip(values, exp):
                if k:
                    term = term * v**k
            total = total + term
        return total

    def evaluate(self, values: np.ndarray) -> np.ndarray:
        """Vectorised float evaluation; ``values`` has shape ``(..., nvars)``."""
        values = np.asarray(values, dtype=float)
        out = np.zeros(values.shape[:-1])
        for exp, c in self._terms.items():
            term = np.full(values.shape[:-1], float(c))
            for i, k in enumerate(exp):
                if k:
                    term = term * values[..., i] ** k
            out = out + term
        return out

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Exponent matrix ``(nterms, nvars)`` and float coefficients."""
        items = self.sorted_terms()
        exps = np.array([e for e, _ in items], dtype=np.int64).reshape(len(items), len(self.vars))
        coefs = np.array([float(c) for _, c in items], dtype=float)
        return exps, coefs

    # display ----------------------------------------------------------------
    def sorted_terms(self) -> list[tuple[Exponent, object]]:
        """Terms in graded lexicographic order, highest degree first."""
        return sorted(self._terms.items(), key=lambda kv: (-sum(kv[0]), tuple(-e for e in kv[0])))

    def render(self, names: Sequence[str] | None = None) -> str:
        names = tuple(names) if names is not None else self.vars
        if not self._terms:
            return "0"
        pieces = []
        for exp, c in self.sorted_terms():
            mono = "*".join(
                n if k == 1 else f"{n}^{k}" for n, k in zip(names, exp) if k
            )
            neg = c < 0
            mag = -c if neg else c
            coeff = _format_scalar(mag)
            if not mono:
                body = coeff
            elif mag == 1:
                body = mono
            else:
                body = f"{coeff}*{mono}"
            pieces.append(("-" if neg else "+", body))
        sign, body = pieces[0]
        out = ("-" if sign == "-" else "") + body
        for sign, body in pieces[1:]:
            out += f" {sign} {body}"
        return out

    def __str__(self) -> str:
        return self.render()

    def __repr__(self) -> str:
        return f"Poly({self.render()!r})"


def _format_scalar(c) -> str:
    if isinstance(c, Fraction):
        return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"
    if isinstance(c, float):
        if c.is_integer() and abs(c) < 1e16:
            return str(int(c))
        return repr(c)
    return str(c)
