from fractions import Fraction

import numpy as np
import pytest

from ncphase.algebra import SpaceKind, SpaceSpec, build_table, jacobi_residual, tensors_from_table
from ncphase.errors import NoSolutionsFound
from ncphase.solver import (
    N_UNKNOWNS,
    UNKNOWN_LABELS,
    SolverConfig,
    catalogue_lines,
    classify,
    exact_residual_norm,
    levenberg_marquardt,
    mask_for,
    pack,
    residual_and_jacobian,
    signature,
    solve_constraints,
    unpack,
)


def tensors_of(kind, kappa, kappa_tilde, kappa_bar=None, axes=(1, 2, 3), exact=False):
    spec = SpaceSpec.from_kappas(kind, kappa, kappa_tilde, kappa_bar, axes, exact=exact)
    return tensors_from_table(build_table(spec, exact=exact))


def test_layout():
    assert N_UNKNOWNS == 48 == len(set(UNKNOWN_LABELS))
    assert UNKNOWN_LABELS[:3] == ("theta0[kl]", "theta0[kg]", "theta0[lg]")


def test_pack_unpack_roundtrip():
    rng = np.random.default_rng(0)
    u = rng.normal(size=N_UNKNOWNS)
    assert np.array_equal(pack(unpack(u)), u)
    t = tensors_of(SpaceKind.TYPE_II, 7, 3, 5, axes=(3, 1, 2))
    assert np.array_equal(pack(unpack(pack(t))), pack(t))


def test_residual_matches_table_residual():
    rng = np.random.default_rng(1)
    for _ in range(10):
        u = rng.normal(size=N_UNKNOWNS)
        from ncphase.algebra import table_from_tensors

        direct = np.array([float(v) for v in jacobi_residual(table_from_tensors(unpack(u)))])
        r, _ = residual_and_jacobian(u)
        assert np.max(np.abs(r - direct)) < 1e-12 * (1 + np.max(np.abs(direct)))


def test_known_solutions_have_zero_residual():
    assert np.all(residual_and_jacobian(np.zeros(N_UNKNOWNS))[0] == 0)
    r, _ = residual_and_jacobian(pack(tensors_of(SpaceKind.TYPE_I, 1, 1)))
    assert np.max(np.abs(r)) < 1e-15


def test_jacobian_against_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(20):
        u = rng.uniform(-1, 1, N_UNKNOWNS)
        _, J = residual_and_jacobian(u)
        fd = np.empty_like(J)
        d = 1e-6
        for i in range(N_UNKNOWNS):
            e = np.zeros(N_UNKNOWNS)
            e[i] = d
            fd[:, i] = (residual_and_jacobian(u + e)[0] - residual_and_jacobian(u - e)[0]) / (2 * d)
        assert np.all(np.abs(J - fd) < 1e-6 * (1 + np.abs(J)))


@pytest.mark.parametrize("kind", [SpaceKind.TYPE_I, SpaceKind.TYPE_II])
def test_known_families_are_fixed_points(kind):
    rng = np.random.default_rng(3)
    for _ in range(5):
        k = rng.uniform(0.1, 10, 3)
        t = tensors_of(kind, k[0], k[1], k[2] if kind is SpaceKind.TYPE_II else None)
        u0 = pack(t)
        res = levenberg_marquardt(u0)
        assert res.iterations == 0
        assert np.array_equal(res.u, u0)
        assert exact_residual_norm(t) < 1e-10


def test_exact_residual_of_exact_tables_is_zero():
    t = tensors_of(SpaceKind.TYPE_II, 700, 100, 10, exact=True)
    assert exact_residual_norm(t) == 0


def test_signature_invariant_under_relabeling():
    base = tensors_of(SpaceKind.TYPE_II, 7, 3, 5)
    sig = signature(base)
    for axes in [(2, 3, 1), (3, 1, 2), (1, 3, 2)]:
        assert signature(tensors_of(SpaceKind.TYPE_II, 7, 3, 5, axes=axes)) == sig
    assert signature(tensors_of(SpaceKind.TYPE_I, 7, 3)) != sig


def test_masked_search_recovers_type2_support():
    t = tensors_of(SpaceKind.TYPE_II, 7, 3, 5)
    cfg = SolverConfig(restarts=20, seed=5, sparsity_prior=mask_for(t))
    records = solve_constraints(cfg)
    assert records
    assert signature(t) in {r.signature for r in records}
    for r in records:
        assert r.residual_norm < 1e-10
        assert all(v == 0 for v, keep in zip(pack(r.tensors), mask_for(t)) if not keep)


def test_classify_canonical_and_type1():
    assert classify(unpack(np.zeros(N_UNKNOWNS))).family == "Canonical"
    c = classify(tensors_of(SpaceKind.TYPE_I, 410, 10, axes=(2, 3, 1)))
    assert c.family == "TypeI"
    assert c.label == "TypeI(kappa=410, kappa_tilde=10)"


def test_classify_type2_and_subfamily():
    c = classify(tensors_of(SpaceKind.TYPE_II, 700, 100, 10, axes=(3, 1, 2)))
    assert c.label == "TypeII(kappa=700, kappa_tilde=100, kappa_bar=10)"
    sub = classify(tensors_of(SpaceKind.TYPE_II, None, 100, 10))
    assert sub.family == "TypeII"
    assert sub.label.startswith("TypeII-subfamily(kappa=inf")
    overlap = classify(tensors_of(SpaceKind.TYPE_II, None, 100, None))
    assert overlap.family == "TypeI" and "TypeII" in overlap.note


def test_classify_scaling_keeps_family():
    t = tensors_of(SpaceKind.TYPE_II, 700, 100, 10)
    scaled = unpack(3.5 * pack(t))
    a, b = classify(t), classify(scaled)
    assert a.family == b.family == "TypeII"
    assert b.inverse_parameters == pytest.approx(tuple(3.5 * v for v in a.inverse_parameters))


def test_classify_unknown_for_perturbed_tensors():
    u = pack(tensors_of(SpaceKind.TYPE_II, 7, 3, 5))
    u[0] += 0.3
    assert classify(unpack(u)).family == "Unknown"


def test_search_is_deterministic():
    cfg = SolverConfig(restarts=15, seed=9)
    assert catalogue_lines(solve_constraints(cfg), cfg) == catalogue_lines(solve_constraints(cfg), cfg)


def test_initial_point_is_kept():
    t = tensors_of(SpaceKind.TYPE_I, 410, 10, axes=(2, 3, 1))
    records = solve_constraints(SolverConfig(restarts=0, initial_points=(pack(t),)))
    assert len(records) == 1
    assert classify(records[0]).label == "TypeI(kappa=410, kappa_tilde=10)"


def test_no_solutions():
    cfg = SolverConfig(restarts=2, seed=0, max_iters=1, residual_tol=1e-300)
    assert solve_constraints(cfg) == []
    with pytest.raises(NoSolutionsFound):
        solve_constraints(cfg, raise_on_empty=True)


@pytest.mark.parametrize(
    "kwargs",
    [dict(restarts=0), dict(damping_init=0.0), dict(sparsity_prior=(1, 0)), dict(initial_points=((1.0,),))],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_unpack_exact():
    t = unpack([Fraction(1, 3)] + [0] * (N_UNKNOWNS - 1), exact=True)
    assert t.theta0[0, 1] == Fraction(1, 3) and t.theta0[1, 0] == Fraction(-1, 3)
