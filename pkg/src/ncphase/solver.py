"""Numerical search for structure constants that satisfy the Jacobi identity.

Unknown vector layout (48 entries, :data:`UNKNOWN_LABELS` spells it out):

* ``theta0[a, b]`` for ``a < b``                       (3)
* ``theta[a, b, c]`` for ``a < b``, all ``c``            (9)
* ``theta_bar[a, b, c]`` for ``a != b``, all ``c``       (18)
* ``theta_tilde[a, b, c]`` for ``a != b``, all ``c``     (18)

each block enumerated lexicographically.  The residual is the direct table
Jacobi residual of :func:`ncphase.algebra.jacobi_residual`; it is quadratic
in the unknowns, so it is stored as ``r(u) = c + L u + Q[u, u]``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .algebra import (
    TRIPLES,
    SpaceKind,
    SpaceSpec,
    StructureTensors,
    build_table,
    jacobi_residual,
    residual_norm,
    table_from_tensors,
    tensors_from_table,
)
from .errors import NoSolutionsFound

SNAP_THRESHOLD = 1e-8
AXIS_PERMUTATIONS = tuple(itertools.permutations((1, 2, 3)))

_THETA0_PAIRS = ((0, 1), (0, 2), (1, 2))
_OFF_DIAGONAL = tuple((a, b) for a in range(3) for b in range(3) if a != b)


def _labels() -> tuple[str, ...]:
    r = ("k", "l", "g")
    out = [f"theta0[{r[a]}{r[b]}]" for a, b in _THETA0_PAIRS]
    out += [f"theta[{r[a]}{r[b]};{r[c]}]" for a, b in _THETA0_PAIRS for c in range(3)]
    for name in ("theta_bar", "theta_tilde"):
        out += [f"{name}[{r[a]}{r[b]};{r[c]}]" for a, b in _OFF_DIAGONAL for c in range(3)]
    return tuple(out)


UNKNOWN_LABELS = _labels()
N_UNKNOWNS = len(UNKNOWN_LABELS)


def pack(tensors: StructureTensors) -> np.ndarray:
    t = tensors.to_float() if tensors.exact else tensors
    out = [t.theta0[a, b] for a, b in _THETA0_PAIRS]
    out += [t.theta[a, b, c] for a, b in _THETA0_PAIRS for c in range(3)]
    out += [t.theta_bar[a, b, c] for a, b in _OFF_DIAGONAL for c in range(3)]
    out += [t.theta_tilde[a, b, c] for a, b in _OFF_DIAGONAL for c in range(3)]
    return np.array(out, dtype=float) + 0.0  # no negative zeros


def unpack(u: Sequence, exact: bool = False) -> StructureTensors:
    u = list(u)
    if len(u) != N_UNKNOWNS:
        raise ValueError(f"expected {N_UNKNOWNS} unknowns, got {len(u)}")
    conv = Fraction if exact else float
    it = iter(u)
    theta0 = {(a, b): conv(next(it)) for a, b in _THETA0_PAIRS}
    theta = {(a, b, c): conv(next(it)) for a, b in _THETA0_PAIRS for c in range(3)}
    bar = {(a, b, c): conv(next(it)) for a, b in _OFF_DIAGONAL for c in range(3)}
    tilde = {(a, b, c): conv(next(it)) for a, b in _OFF_DIAGONAL for c in range(3)}
    return StructureTensors.build(theta0, theta, bar, tilde, exact=exact)


# ---------------------------------------------------------------------------
# residual as a quadratic form
# ---------------------------------------------------------------------------


def _bracket_arrays() -> tuple[np.ndarray, np.ndarray]:
    """Coefficient arrays ``B[a, b, field]`` of the canonical table and of each unknown.

    Fields are ``(const, t, xi_0..xi_5)``.
    """
    base = np.zeros((6, 6, 8))
    for a in range(3):
        base[a, 3 + a, 0] = 1.0
        base[3 + a, a, 0] = -1.0
    gen = np.zeros((6, 6, 8, N_UNKNOWNS))
    i = 0
    for a, b in _THETA0_PAIRS:
        gen[a, b, 1, i], gen[b, a, 1, i] = 1.0, -1.0
        i += 1
    for a, b in _THETA0_PAIRS:
        for c in range(3):
            gen[a, b, 2 + c, i], gen[b, a, 2 + c, i] = 1.0, -1.0
            i += 1
    for offset in (0, 3):  # theta_bar multiplies x_c, theta_tilde multiplies p_c
        for a, b in _OFF_DIAGONAL:
            for c in range(3):
                gen[a, 3 + b, 2 + offset + c, i] = 1.0
                gen[3 + b, a, 2 + offset + c, i] = -1.0
                i += 1
    return base, gen


_TRIPLE_INDEX = tuple(np.array(idx) for idx in zip(*TRIPLES))


def _jacobiator(S: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Bilinear Jacobi map: ``{{a,b},c}`` with the outer bracket from ``S`` and inner from ``T``, plus cyclic terms.

    ``S`` and ``T`` have shape ``(6, 6, 8, ...)``; trailing axes broadcast as
    independent batches.  Returns the flat 160-entry residual per batch.
    """
    X = np.einsum("abd...,dcf...->abcf...", S[:, :, 2:], T)
    J = X + np.einsum("cabf...->abcf...", X) + np.einsum("bcaf...->abcf...", X)
    a, b, c = _TRIPLE_INDEX
    sel = J[a, b, c]
    return sel.reshape((sel.shape[0] * sel.shape[1],) + sel.shape[2:])


@lru_cache(maxsize=1)
def _quadratic_form() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    base, gen = _bracket_arrays()
    const = _jacobiator(base, base)
    lin = np.einsum("abdi,dcf->abcfi", gen[:, :, 2:], base) + np.einsum("abd,dcfi->abcfi", base[:, :, 2:], gen)
    lin = lin + np.einsum("cabfi->abcfi", lin) + np.einsum("bcafi->abcfi", lin)
    a, b, c = _TRIPLE_INDEX
    lin = lin[a, b, c].reshape(-1, N_UNKNOWNS)
    X = np.einsum("abdi,dcfj->abcfij", gen[:, :, 2:], gen)
    X = X + np.einsum("cabfij->abcfij", X) + np.einsum("bcafij->abcfij", X)
    quad = X[a, b, c].reshape(-1, N_UNKNOWNS, N_UNKNOWNS)
    quad_sym = quad + quad.transpose(0, 2, 1)
    for arr in (const, lin, quad, quad_sym):
        arr.setflags(write=False)
    return const, lin, quad, quad_sym


def residual_and_jacobian(u: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Flat Jacobi residual of the induced table and its exact derivative."""
    u = np.asarray(u, dtype=float)
    const, lin, quad, quad_sym = _quadratic_form()
    qu = quad @ u
    residual = const + lin @ u + qu @ u
    jac = lin + quad_sym @ u
    return residual, jac


# ---------------------------------------------------------------------------
# Levenberg-Marquardt
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    restarts: int = 1000
    seed: int = 42
    damping_init: float = 1e-3
    residual_tol: float = 1e-10
    max_iters: int = 200
    sparsity_prior: tuple | None = None
    init_scale: float = 1.0
    initial_points: tuple = ()

    def __post_init__(self):
        if self.restarts < 0 or (self.restarts == 0 and not self.initial_points):
            raise ValueError("restarts must be at least 1 unless initial points are given")
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if not self.damping_init > 0:
            raise ValueError("damping_init must be positive")
        if self.sparsity_prior is not None:
            mask = tuple(bool(v) for v in self.sparsity_prior)
            if len(mask) != N_UNKNOWNS:
                raise ValueError(f"sparsity_prior needs {N_UNKNOWNS} entries")
            object.__setattr__(self, "sparsity_prior", mask)
        pts = tuple(tuple(float(v) for v in p) for p in self.initial_points)
        for p in pts:
            if len(p) != N_UNKNOWNS:
                raise ValueError(f"initial points need {N_UNKNOWNS} entries")
        object.__setattr__(self, "initial_points", pts)

    def to_json(self) -> dict:
        return {
            "restarts": self.restarts,
            "seed": self.seed,
            "damping_init": self.damping_init,
            "residual_tol": self.residual_tol,
            "max_iters": self.max_iters,
            "sparsity_prior": None if self.sparsity_prior is None else [int(v) for v in self.sparsity_prior],
            "init_scale": self.init_scale,
            "initial_points": [list(p) for p in self.initial_points],
        }


@dataclass(frozen=True)
class LMResult:
    u: np.ndarray
    residual_norm: float
    iterations: int


def levenberg_marquardt(
    u0: np.ndarray,
    mask: np.ndarray | None = None,
    damping_init: float = 1e-3,
    max_iters: int = 200,
    stop_norm: float = 1e-14,
) -> LMResult:
    """Minimise ``|r(u)|^2`` with Nielsen's damping update.

    Entries outside ``mask`` stay fixed.  ``damping_init`` is relative to the
    largest diagonal entry of ``J^T J``.
    """
    u = np.array(u0, dtype=float)
    free = np.ones(N_UNKNOWNS, bool) if mask is None else np.asarray(mask, bool)
    if mask is not None:
        u[~free] = 0.0
    r, J = residual_and_jacobian(u)
    cost = float(r @ r)
    mu = None
    nu = 2.0
    it = 0
    for it in range(1, max_iters + 1):
        if np.sqrt(cost) <= stop_norm:
            it -= 1
            break
        Jf = J[:, free]
        A = Jf.T @ Jf
        g = Jf.T @ r
        if np.max(np.abs(g)) < 1e-300:
            break
        if mu is None:
            mu = damping_init * max(float(np.max(np.diag(A))), 1e-12)
        step = np.linalg.solve(A + mu * np.eye(A.shape[0]), -g)
        if np.linalg.norm(step) <= 1e-16 * (np.linalg.norm(u[free]) + 1e-16):
            break
        trial = u.copy()
        trial[free] += step
        r_new, J_new = residual_and_jacobian(trial)
        cost_new = float(r_new @ r_new)
        predicted = float(step @ (mu * step - g))
        rho = (cost - cost_new) / predicted if predicted > 0 else -1.0
        if rho > 0:
            u, r, J, cost = trial, r_new, J_new, cost_new
            mu *= max(1 / 3, 1 - (2 * rho - 1) ** 3)
            nu = 2.0
        else:
            mu *= nu
            nu *= 2
    return LMResult(u, float(np.sqrt(cost)), it)


# ---------------------------------------------------------------------------
# records, signatures, classification
# ---------------------------------------------------------------------------


def exact_residual_norm(tensors: StructureTensors) -> float:
    """Residual norm of the induced table evaluated in rational arithmetic.

    Float entries are converted to the rationals they represent exactly, so
    the only rounding is the final square root.
    """
    exact = tensors if tensors.exact else unpack([Fraction(v) for v in pack(tensors)], exact=True)
    return residual_norm(jacobi_residual(table_from_tensors(exact)))


def support_mask(u: np.ndarray, threshold: float = SNAP_THRESHOLD) -> tuple[bool, ...]:
    return tuple(bool(abs(v) >= threshold) for v in u)


def _support_key(mask: Iterable[bool]) -> str:
    bits = "".join("1" if b else "0" for b in mask)
    return f"{int(bits, 2):012x}"


def signature(tensors: StructureTensors, threshold: float = SNAP_THRESHOLD) -> str:
    """Support pattern minimised over the six axis relabelings (hex bitmask)."""
    keys = []
    for sigma in AXIS_PERMUTATIONS:
        keys.append(_support_key(support_mask(pack(tensors.permuted(sigma)), threshold)))
    return min(keys)


@dataclass(frozen=True)
class SolutionRecord:
    tensors: StructureTensors
    residual_norm: float
    signature: str
    iterations: int = 0
    start: int = 0

    def to_json(self) -> dict:
        cls = classify(self)
        return {
            "signature": self.signature,
            "label": cls.label,
            "family": cls.family,
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "start": self.start,
            "unknowns": pack(self.tensors).tolist(),
            "tensors": self.tensors.to_json(),
        }


@dataclass(frozen=True)
class Classification:
    family: str  # Canonical, TypeI, TypeII or Unknown
    label: str
    axes: tuple | None = None
    inverse_parameters: tuple | None = None
    note: str = ""


def _fmt_kappa(inv: float) -> str:
    return "inf" if inv == 0 else f"{1 / inv:.12g}"


def _match(tensors: StructureTensors, kind: SpaceKind, axes, rtol: float) -> tuple | None:
    """Read candidate parameters off the tensors, rebuild, and compare."""
    r = [a - 1 for a in axes]
    k, l, g = r
    t = tensors
    ikt = float(t.theta[k, g, l])
    if kind is SpaceKind.TYPE_I:
        ik = float(t.theta0[k, l])
        ikb = 0.0
    else:
        ik = float(t.theta0[l, g])
        ikb = -float(t.theta_bar[g, k, l])
    cand = tensors_from_table(build_table(SpaceSpec(kind, ik, ikt, ikb, tuple(axes)), exact=False))
    a, b = pack(cand), pack(t)
    scale = max(np.max(np.abs(b)), 1e-300)
    if np.max(np.abs(a - b)) <= rtol * scale:
        return ik, ikt, ikb
    return None


def classify(record: SolutionRecord | StructureTensors, rtol: float = 1e-9) -> Classification:
    """Match against the Type I / Type II tables under every axis assignment.

    The families overlap when ``1/kappa`` and ``1/kappa_bar`` both vanish; that
    overlap is reported as Type I with a note.
    """
    tensors = record.tensors if isinstance(record, SolutionRecord) else record
    u = pack(tensors)
    if np.all(np.abs(u) <= SNAP_THRESHOLD):
        return Classification("Canonical", "Canonical")
    for kind, family in ((SpaceKind.TYPE_I, "TypeI"), (SpaceKind.TYPE_II, "TypeII")):
        matches = [(axes, params) for axes in AXIS_PERMUTATIONS if (params := _match(tensors, kind, axes, rtol))]
        if matches:
            # relabelings that flip signs also match; prefer non-negative parameters
            axes, params = max(matches, key=lambda m: sum(v >= 0 for v in m[1]))
            ik, ikt, ikb = params
            if kind is SpaceKind.TYPE_I:
                label = f"TypeI(kappa={_fmt_kappa(ik)}, kappa_tilde={_fmt_kappa(ikt)})"
                note = "also TypeII with 1/kappa = 1/kappa_bar = 0" if ik == 0 else ""
            else:
                name = "TypeII-subfamily" if ik == 0 or ikt == 0 or ikb == 0 else "TypeII"
                label = (
                    f"{name}(kappa={_fmt_kappa(ik)}, kappa_tilde={_fmt_kappa(ikt)}, "
                    f"kappa_bar={_fmt_kappa(ikb)})"
                )
                zero = [n for n, v in (("kappa", ik), ("kappa_tilde", ikt), ("kappa_bar", ikb)) if v == 0]
                note = f"subfamily: {', '.join(zero)} infinite" if zero else ""
            return Classification(family, label, tuple(axes), params, note)
    digest = hashlib.sha1(signature(tensors).encode()).hexdigest()[:10]
    return Classification("Unknown", f"Unknown({digest})")


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def _snap(u: np.ndarray) -> np.ndarray:
    out = u.copy()
    out[np.abs(out) < SNAP_THRESHOLD] = 0.0
    return out


def solve_constraints(cfg: SolverConfig, raise_on_empty: bool = False) -> list[SolutionRecord]:
    """Multi-start search; returns verified solutions, one per signature.

    Each converged point has entries below :data:`SNAP_THRESHOLD` snapped to
    zero, is re-polished on the remaining support, and is kept only if its
    residual recomputed in rational arithmetic is below ``cfg.residual_tol``.
    Output is sorted by signature.
    """
    rng = np.random.default_rng(cfg.seed)
    mask = None if cfg.sparsity_prior is None else np.array(cfg.sparsity_prior, bool)
    starts = [np.array(p) for p in cfg.initial_points]
    starts += [rng.uniform(-cfg.init_scale, cfg.init_scale, N_UNKNOWNS) for _ in range(cfg.restarts)]
    best: dict[str, SolutionRecord] = {}
    for idx, u0 in enumerate(starts):
        if mask is not None:
            u0 = np.where(mask, u0, 0.0)
        res = levenberg_marquardt(u0, mask, cfg.damping_init, cfg.max_iters)
        if not res.residual_norm < cfg.residual_tol:
            continue
        u = _snap(res.u)
        support = np.abs(u) > 0
        if mask is not None:
            support &= mask
        polished = levenberg_marquardt(u, support, cfg.damping_init, max(cfg.max_iters, 20))
        u = _snap(polished.u)
        tensors = unpack(u)
        norm = exact_residual_norm(tensors)
        if not norm < cfg.residual_tol:
            continue
        sig = signature(tensors)
        rec = SolutionRecord(tensors, norm, sig, res.iterations, idx)
        prev = best.get(sig)
        if prev is None or (rec.residual_norm, rec.start) < (prev.residual_norm, prev.start):
            best[sig] = rec
    out = [best[k] for k in sorted(best)]
    if not out and raise_on_empty:
        raise NoSolutionsFound(f"none of {len(starts)} starts reached residual {cfg.residual_tol}")
    return out


def catalogue_lines(records: Sequence[SolutionRecord], cfg: SolverConfig) -> list[str]:
    """JSON lines: a header with the configuration, then one record per line."""
    lines = [json.dumps({"config": cfg.to_json(), "count": len(records)}, sort_keys=True)]
    for rec in records:
        lines.append(json.dumps(rec.to_json(), sort_keys=True))
    return lines


def mask_for(tensors: StructureTensors) -> tuple[bool, ...]:
    """Support of a tensor set as a sparsity prior."""
    return tuple(bool(v != 0) for v in pack(tensors))
