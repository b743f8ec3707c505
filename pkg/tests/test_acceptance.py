"""One test per acceptance criterion; each prints a PASS/FAIL line with the measured numbers."""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from ncphase.algebra import SpaceKind, SpaceSpec, build_table, jacobi_residual, tensors_from_table
from ncphase.analytic import (
    InitialConditions,
    Regime,
    classify_epsilon,
    closed_form,
    solution_or_numeric,
    type2_constants,
)
from ncphase.compare import compare_closed_form
from ncphase.dynamics import (
    IntegratorConfig,
    PhaseState,
    energy_series,
    integrate,
    newton_residual,
    space_table,
)
from ncphase.equations import reference_hamilton, reference_newton
from ncphase.poisson import Hamiltonian, hamilton_rhs, momenta_from_velocities, newton_rhs, poisson_bracket
from ncphase.presets import PRESETS, get_preset
from ncphase.solver import (
    N_UNKNOWNS,
    SolverConfig,
    classify,
    exact_residual_norm,
    levenberg_marquardt,
    pack,
    residual_and_jacobian,
    solve_constraints,
)
from polygen import random_poly, random_rational, random_space

F = Fraction
PERMS = [(1, 2, 3), (2, 3, 1), (3, 1, 2), (1, 3, 2), (2, 1, 3), (3, 2, 1)]


def nonzero_rational(rng):
    while True:
        r = random_rational(rng)
        if r:
            return r


def test_criterion_01_admissibility(acceptance):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    bad = 0
    for i in range(20):
        ik, ikt, ikb = (nonzero_rational(rng) for _ in range(3))
        axes = PERMS[i % 6]
        for spec in (SpaceSpec(SpaceKind.TYPE_I, ik, ikt, 0, axes), SpaceSpec(SpaceKind.TYPE_II, ik, ikt, ikb, axes)):
            bad += any(v != 0 for v in jacobi_residual(build_table(spec, exact=True)))
    elapsed = time.perf_counter() - start
    ok = bad == 0 and elapsed < 1
    acceptance.record(1, "admissibility (exact)", ok, f"{bad} nonzero residuals over 40 tables, {elapsed:.3f}s")
    assert ok


def test_criterion_02_equation_derivation(acceptance):
    h = Hamiltonian(F(3, 2), (F(1, 3), F(-2), F(7)))
    start = time.perf_counter()
    mismatches = []
    for spec in (
        SpaceSpec.from_kappas(SpaceKind.TYPE_I, 410, 10),
        SpaceSpec.from_kappas(SpaceKind.TYPE_I, F(7, 3), -5, axes=(2, 3, 1)),
        SpaceSpec.from_kappas(SpaceKind.TYPE_II, 700, 100, 10),
        SpaceSpec.from_kappas(SpaceKind.TYPE_II, F(-3, 4), 11, 5, axes=(3, 2, 1)),
    ):
        if hamilton_rhs(build_table(spec), h) != reference_hamilton(spec, h):
            mismatches.append(f"{spec.kind.value} hamilton")
        if newton_rhs(spec, h) != reference_newton(spec, h):
            mismatches.append(f"{spec.kind.value} newton")
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 1
    acceptance.record(2, "equation derivation (exact)", ok, f"mismatches {mismatches or 'none'}, {elapsed:.3f}s")
    assert ok


def _dd_energy(preset, n):
    spec, h = preset.spec(), preset.hamiltonian()
    cfg = IntegratorConfig(step=preset.span / n, precision="double-double", record_every=n // 1000)
    return energy_series(integrate(space_table(spec, h), h, preset.initial_state(), preset.span, cfg, spec))


def test_criterion_03_energy_conservation(acceptance):
    # drift is reported against |H(0)| as stated, and against the energy scale
    # (largest sum of |term| of H along the run) for context
    lines, drift_ok, ratio_ok, band = [], True, True, []
    for key, p in PRESETS.items():
        coarse, fine = _dd_energy(p, 100_000), _dd_energy(p, 200_000)
        ratio = coarse.drift_vs_initial / fine.drift_vs_initial if fine.drift_vs_initial else math.inf
        drift_ok &= coarse.drift_vs_initial < 1e-8
        ratio_ok &= ratio >= 12
        if not 12 <= ratio <= 20:
            band.append(f"{p.name}={ratio:.1f}")
        lines.append(f"{p.name}: |dH|/|H0|={coarse.drift_vs_initial:.2e} scaled={coarse.relative_drift:.2e} ratio={ratio:.1f}")
    ok = drift_ok and ratio_ok
    detail = "; ".join(lines) + (f"; ratios outside 12-20: {', '.join(band)}" if band else "")
    acceptance.record(3, "energy conservation", ok, detail)
    assert ok


def test_criterion_04_closed_form_vs_integration(acceptance):
    lines, ok = [], True
    for key, p in PRESETS.items():
        start = time.perf_counter()
        comp = compare_closed_form(p.spec(), p.hamiltonian(), p.initial_conditions(), p.span, samples=2000)
        elapsed = time.perf_counter() - start
        ok &= comp.max_deviation < 1e-6 and elapsed < 10 and comp.source == "closed-form"
        lines.append(f"{p.name}: {comp.max_deviation:.1e} ({elapsed:.2f}s)")
    acceptance.record(4, "closed form vs integration", ok, "; ".join(lines))
    assert ok


def _integrate_positions(spec, h, ic, t_end, step):
    table = space_table(spec, h)
    p0 = momenta_from_velocities(table, h, 0.0, ic.x0, ic.v0)
    return integrate(table, h, PhaseState(0.0, ic.x0, p0), t_end, IntegratorConfig(step=step), spec)


def test_criterion_05_free_particle_laws(acceptance):
    h0 = Hamiltonian(F(1), (0, 0, 0))
    ic = InitialConditions((0.5, -1.0, 2.0), (0.3, 1.0, -0.7))
    type1 = SpaceSpec.from_kappas(SpaceKind.TYPE_I, 410, 10)
    traj = _integrate_positions(type1, h0, ic, 10.0, 1e-2)
    line = np.array(ic.x0) + np.outer(traj.times, ic.v0)
    dev_num = float(np.max(np.abs(traj.positions - line)))
    # F_gamma = 0 has no oscillatory closed form; this goes through the documented fallback
    fallback, source = solution_or_numeric(type1, h0, ic, traj.times)
    dev_cf = float(np.max(np.abs(fallback - line)))

    type2 = SpaceSpec.from_kappas(SpaceKind.TYPE_II, None, None, 500)
    ic2 = InitialConditions((0, 0, 0), (1, 1, 0))
    xg_num = _integrate_positions(type2, h0, ic2, 10.0, 1e-2).positions[-1, 2]
    xg_fb, source2 = solution_or_numeric(type2, h0, ic2, 10.0)
    xg_fb = float(xg_fb[2])
    ok = dev_num < 1e-10 and dev_cf < 1e-10 and abs(xg_num + 0.2) < 1e-8 and abs(xg_fb + 0.2) < 1e-8
    acceptance.record(
        5,
        "free-particle laws",
        ok,
        f"TypeI line deviation {dev_num:.1e} (integrated) {dev_cf:.1e} ({source}); "
        f"TypeII x_gamma(10) = {xg_num:.12f} (integrated) {xg_fb:.12f} ({source2}), law -t^2/500 gives -0.2",
    )
    assert ok


def test_criterion_06_commutative_limit(acceptance):
    rng = np.random.default_rng(6)
    worst = 0.0
    for kind in (SpaceKind.COMMUTATIVE, SpaceKind.TYPE_I, SpaceKind.TYPE_II):
        m = float(rng.uniform(0.5, 3))
        force = tuple(float(v) for v in rng.normal(size=3))
        h = Hamiltonian(m, force)
        ic = InitialConditions(tuple(rng.normal(size=3)), tuple(rng.normal(size=3)))
        spec = SpaceSpec(kind, 0, 0, 0) if kind is not SpaceKind.COMMUTATIVE else SpaceSpec(kind)
        t = np.linspace(0, 10, 201)
        want = np.array(ic.x0) + np.outer(t, ic.v0) + np.outer(t**2, force) / (2 * m)
        traj = _integrate_positions(spec, h, ic, 10.0, 0.05)
        worst = max(worst, float(np.max(np.abs(traj.positions - want))))
        if kind is not SpaceKind.TYPE_II:
            worst = max(worst, float(np.max(np.abs(closed_form(spec, h, ic, t) - want))))
    ok = worst < 1e-10
    acceptance.record(6, "commutative limit", ok, f"max deviation {worst:.1e} over t in [0, 10]")
    assert ok


def _independent_constants(p, ic):
    kappa, kt, kb = p.kappa, p.kappa_tilde, p.kappa_bar
    m, (fk, fl, fg) = float(p.mass), (0.0, 0.0, float(p.force_gamma))
    eps = fg * m * kb / kt**2
    (xk0, xl0, _), (vk0, vl0, vg0) = ic.x0, ic.v0
    out = {
        "omega1": fg / kt * math.sqrt((1 + eps) / eps),
        "C": vg0 + (xk0 * vl0 + xl0 * vk0) / kb - (fk * xl0 - fl * xk0) / kt - fg * (xk0**2 - xl0**2) / (kt * kb),
    }
    if eps < 1:
        out["omega2"] = fg / kt * math.sqrt((1 - eps) / eps)
    elif eps > 1:
        out["omega2_prime"] = fg / kt * math.sqrt((eps - 1) / eps)
    if eps != 1:
        out["A"] = -eps / (1 - eps) * kt / kappa
        out["B_k"] = (kb * (eps * fk + fl) / (1 + eps) - eps * kt**2 / kappa) / (fg * (1 - eps))
        out["B_l"] = (kb * (fk + eps * fl) / (1 + eps) + eps * kt**2 / kappa) / (fg * (1 - eps))
    return out


def test_criterion_07_epsilon_classification(acceptance):
    expected = {2: Regime.SUB, 3: Regime.SUPER, 4: Regime.CRITICAL}
    worst, wrong, checked = 0.0, [], 0
    ics = [InitialConditions((0, 0, 0), (0, 1, 0)), InitialConditions((0.3, -0.2, 0.1), (0.5, 1.0, -0.4))]
    for (fig, side), p in PRESETS.items():
        if fig == 1:
            continue
        if classify_epsilon(p.hamiltonian(), p.spec()).regime is not expected[fig]:
            wrong.append(p.name)
        for ic in ics:
            got = type2_constants(p.spec(), p.hamiltonian(), ic)
            for name, want in _independent_constants(p, ic).items():
                value = getattr(got, name)
                err = abs(value - want) / abs(want) if want else abs(value)
                worst = max(worst, err)
                checked += 1
    ok = not wrong and worst < 1e-12
    acceptance.record(
        7, "epsilon classification", ok, f"misclassified {wrong or 'none'}; {checked} constants, worst relative error {worst:.1e}"
    )
    assert ok


def test_criterion_08_newton_residual_order(acceptance):
    lines, ok = [], True
    for key, p in PRESETS.items():
        spec, h = p.spec(), p.hamiltonian()
        table = space_table(spec, h)
        res = []
        for n in (2000, 4000):
            traj = integrate(table, h, p.initial_state(), p.span, IntegratorConfig(step=p.span / n), spec)
            res.append(float(np.max(newton_residual(traj).relative)))
        order = math.log2(res[0] / res[1])
        ok &= abs(order - 2.0) <= 0.3
        lines.append(f"{p.name}={order:.2f}")
    acceptance.record(8, "Newton residual order", ok, "observed orders " + ", ".join(lines))
    assert ok


def test_criterion_09_solver_soundness(acceptance):
    cfg = SolverConfig(restarts=1000, seed=42)
    start = time.perf_counter()
    records = solve_constraints(cfg)
    elapsed = time.perf_counter() - start
    worst = max((exact_residual_norm(r.tensors) for r in records), default=0.0)

    rng = np.random.default_rng(9)
    fixed = True
    for _ in range(5):
        k = rng.uniform(0.1, 10, 3)
        for spec in (
            SpaceSpec.from_kappas(SpaceKind.TYPE_I, k[0], k[1], exact=False),
            SpaceSpec.from_kappas(SpaceKind.TYPE_II, k[0], k[1], k[2], exact=False),
        ):
            t = tensors_from_table(build_table(spec, exact=False))
            res = levenberg_marquardt(pack(t))
            fixed &= res.iterations <= 2 and classify(t).family == spec.kind.name.replace("TYPE_", "Type")

    jac_err = 0.0
    for _ in range(5):
        u = rng.uniform(-1, 1, N_UNKNOWNS)
        _, J = residual_and_jacobian(u)
        d = 1e-6
        for i in range(N_UNKNOWNS):
            e = np.zeros(N_UNKNOWNS)
            e[i] = d
            fd = (residual_and_jacobian(u + e)[0] - residual_and_jacobian(u - e)[0]) / (2 * d)
            jac_err = max(jac_err, float(np.max(np.abs(J[:, i] - fd) / (1 + np.abs(J[:, i])))))

    families = sorted({classify(r).family for r in records})
    ok = records and worst < 1e-10 and fixed and jac_err < 1e-6 and elapsed < 60
    acceptance.record(
        9,
        "solver soundness",
        ok,
        f"{len(records)} signatures ({', '.join(families)}), worst exact residual {worst:.1e}, "
        f"fixed points {'held' if fixed else 'moved'}, jacobian error {jac_err:.1e}, {elapsed:.1f}s",
    )
    assert ok


def test_criterion_10_bracket_properties(acceptance):
    failures = {"antisymmetry": 0, "bilinearity": 0, "leibniz": 0, "jacobi": 0}
    n = 100
    for seed in range(n):
        rng = np.random.default_rng(seed)
        table = build_table(random_space(rng), exact=True)
        pb = lambda a, b: poisson_bracket(a, b, table)
        f, g, h = random_poly(rng, 2, 3), random_poly(rng, 2, 3), random_poly(rng, 2, 3)
        alpha, beta = random_rational(rng), random_rational(rng)
        failures["antisymmetry"] += not (pb(f, g) + pb(g, f)).is_zero()
        failures["bilinearity"] += pb(f * alpha + g * beta, h) != pb(f, h) * alpha + pb(g, h) * beta
        failures["leibniz"] += pb(f * g, h) != pb(f, h) * g + f * pb(g, h)
        failures["jacobi"] += not (pb(pb(f, g), h) + pb(pb(h, f), g) + pb(pb(g, h), f)).is_zero()
    ok = not any(failures.values())
    acceptance.record(10, "bracket properties (exact)", ok, f"{n} triples, failures {failures}")
    assert ok
