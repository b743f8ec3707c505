"""Command-line front end.

Exit codes: 0 success, 1 usage or validation error, 2 failed check or
numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import jsonschema
import numpy as np

from . import solver
from .algebra import (
    BracketTable,
    SpaceSpec,
    build_table,
    jacobi_residual,
    jacobi_violations,
    parse_scalar,
    tensors_from_table,
)
from .analytic import InitialConditions
from .compare import closed_form_states, compare_closed_form
from .dynamics import (
    IntegratorConfig,
    PhaseState,
    energy_series,
    integrate,
    phase_csv,
    space_table,
    trajectory_csv,
)
from .equations import reference_hamilton, reference_newton
from .errors import NCPhaseError
from .poisson import Hamiltonian, hamilton_rhs, momenta_from_velocities, newton_rhs
from .presets import PRESETS, get_preset

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2
FIGURE_SAMPLES = 2000


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

_SCALAR = {"type": ["number", "string"]}
_KAPPA = {"type": ["number", "string", "null"]}
_VEC3 = {"type": "array", "items": _SCALAR, "minItems": 3, "maxItems": 3}

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "space": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"type": "string"},
                "kappa": _KAPPA,
                "kappa_tilde": _KAPPA,
                "kappa_bar": _KAPPA,
                "axes": {"type": "array", "items": {"type": "integer"}, "minItems": 3, "maxItems": 3},
            },
        },
        "hamiltonian": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"mass": _SCALAR, "force": _VEC3},
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"x0": _VEC3, "v0": _VEC3},
        },
        "time_span": {
            "oneOf": [
                {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["figure", "side"],
                    "properties": {
                        "figure": {"type": "integer", "minimum": 1, "maximum": 4},
                        "side": {"enum": ["left", "right"]},
                    },
                },
            ]
        },
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["rk4", "rk45"]},
                "step": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "rel_tol": {"type": "number", "exclusiveMinimum": 0},
                "abs_tol": {"type": "number", "exclusiveMinimum": 0},
                "max_steps": {"type": "integer", "minimum": 1},
                "record_every": {"type": "integer", "minimum": 1},
                "precision": {"enum": ["double", "double-double"]},
            },
        },
        "samples": {"type": "integer", "minimum": 2},
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"csv": {"type": "string"}, "sidecar": {"type": "string"}},
        },
    },
    "required": ["time_span"],
}

SOLVER_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "restarts": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer"},
        "damping_init": {"type": "number", "exclusiveMinimum": 0},
        "residual_tol": {"type": "number", "exclusiveMinimum": 0},
        "max_iters": {"type": "integer", "minimum": 0},
        "sparsity_prior": {
            "oneOf": [
                {"type": "null"},
                {"type": "array", "items": {"type": ["boolean", "integer"]}},
                {"type": "object", "additionalProperties": False, "required": ["like"],
                 "properties": {"like": {"$ref": "#/$defs/space"}}},
            ]
        },
        "init_scale": {"type": "number", "exclusiveMinimum": 0},
        "initial_points": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "initial_spaces": {"type": "array", "items": {"$ref": "#/$defs/space"}},
        "output": {"type": "string"},
    },
    "$defs": {"space": RUN_CONFIG_SCHEMA["properties"]["space"]},
}


def _validate(data, schema) -> None:
    try:
        jsonschema.validate(data, schema)
    except jsonschema.ValidationError as exc:
        err = jsonschema.exceptions.best_match([exc])
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise UsageError(f"invalid config at {where}: {err.message}") from None


def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from None


def _kappa(v):
    return None if v is None else parse_scalar(v, exact=True)


def space_from_json(data: dict) -> SpaceSpec:
    try:
        return SpaceSpec.from_kappas(
            data["kind"],
            _kappa(data.get("kappa")),
            _kappa(data.get("kappa_tilde")),
            _kappa(data.get("kappa_bar")),
            tuple(data.get("axes", (1, 2, 3))),
        )
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise UsageError(f"invalid space: {exc}") from None


@dataclass(frozen=True)
class RunSetup:
    spec: SpaceSpec
    hamiltonian: Hamiltonian
    initial: InitialConditions
    t0: float
    t_end: float
    integrator: IntegratorConfig
    samples: int
    outputs: dict
    raw: dict


def parse_run_config(data: dict) -> RunSetup:
    _validate(data, RUN_CONFIG_SCHEMA)
    span = data["time_span"]
    preset = get_preset(span["figure"], span["side"]) if isinstance(span, dict) else None
    try:
        if "space" in data:
            spec = space_from_json(data["space"])
        elif preset is not None:
            spec = preset.spec()
        else:
            raise UsageError("config needs a space unless time_span names a figure preset")
        if "hamiltonian" in data:
            hd = data["hamiltonian"]
            h = Hamiltonian(
                parse_scalar(hd.get("mass", 1), exact=True),
                tuple(parse_scalar(v, exact=True) for v in hd.get("force", (0, 0, 0))),
            )
        else:
            h = preset.hamiltonian() if preset else Hamiltonian(Fraction(1), (0, 0, 0))
        if "initial" in data:
            ic = InitialConditions(
                [float(parse_scalar(v, exact=True)) for v in data["initial"].get("x0", (0, 0, 0))],
                [float(parse_scalar(v, exact=True)) for v in data["initial"].get("v0", (0, 0, 0))],
            )
        else:
            ic = preset.initial_conditions() if preset else InitialConditions()
        t0, t_end = (0.0, preset.span) if preset else (float(span[0]), float(span[1]))
        if not t_end > t0:
            raise UsageError("time_span must have t_end > t0")
        integrator = IntegratorConfig(**data.get("integrator", {}))
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise UsageError(f"invalid config: {exc}") from None
    return RunSetup(spec, h, ic, t0, t_end, integrator, data.get("samples", FIGURE_SAMPLES), data.get("outputs", {}), data)


def _space_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--space", default="commutative", help="commutative, type1 or type2")
    p.add_argument("--kappa")
    p.add_argument("--kappa-tilde")
    p.add_argument("--kappa-bar")
    p.add_argument("--axes", nargs=3, type=int, default=(1, 2, 3), metavar=("K", "L", "GAMMA"))


def _space_from_args(args) -> SpaceSpec:
    return space_from_json(
        {
            "kind": args.space,
            "kappa": args.kappa,
            "kappa_tilde": args.kappa_tilde,
            "kappa_bar": args.kappa_bar,
            "axes": list(args.axes),
        }
    )


def _output_dir(args, default: str = ".") -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    if args.table:
        try:
            table = BracketTable.from_json(_load_json(args.table))
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"invalid table: {exc}") from None
        label = args.table
    else:
        spec = _space_from_args(args)
        table = build_table(spec, exact=True)
        label = spec.kind.value
    if not table.exact:
        # floats convert to the rationals they represent, so the check stays exact
        table = BracketTable.from_json({**table.to_json(), "mode": "exact"})
    residual = jacobi_residual(table)
    worst = max((abs(v) for v in residual), default=0)
    ok = worst <= (args.tol or 0)
    print(f"{'PASS' if ok else 'FAIL'} {label}: max |jacobi residual| = {worst}")
    for names, expr in jacobi_violations(table):
        print(f"  ({', '.join(names)}): {expr.render()}")
    return EXIT_OK if ok else EXIT_FAILED


def _hamiltonian_from_args(args, exact: bool) -> Hamiltonian:
    try:
        return Hamiltonian(
            parse_scalar(args.mass, exact=True), tuple(parse_scalar(f, exact=True) for f in args.force)
        ).coerced(exact)
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise UsageError(f"invalid hamiltonian: {exc}") from None


def cmd_derive(args) -> int:
    spec = _space_from_args(args)
    h_exact = _hamiltonian_from_args(args, exact=True)
    table = build_table(spec, exact=True)
    hamilton = hamilton_rhs(table, h_exact)
    newton = newton_rhs(spec, h_exact)
    shown_h, shown_n = hamilton, newton
    if not args.exact:
        h_float = h_exact.coerced(False)
        shown_h = hamilton_rhs(build_table(spec.as_float(), exact=False), h_float)
        shown_n = newton_rhs(spec.as_float(), h_float)
    names = ("x_k", "x_l", "x_gamma", "p_k", "p_l", "p_gamma")
    print("# Hamilton equations")
    for n, poly in zip(names, shown_h):
        print(f"d/dt {n} = {poly.render()}")
    print("# Newton equations")
    for n, poly in zip(names[:3], shown_n):
        print(f"m {n}'' = {poly.render()}")
    if not args.check:
        return EXIT_OK
    ref_h = reference_hamilton(spec, h_exact, exact=True)
    ref_n = reference_newton(spec, h_exact, exact=True)
    bad = [n for n, a, b in zip(names, hamilton, ref_h) if not (a - b).is_zero()]
    bad += [f"m {n}''" for n, a, b in zip(names, newton, ref_n) if not (a - b).is_zero()]
    if bad:
        print(f"CHECK FAIL: derived and reference equations differ in {', '.join(bad)}")
        return EXIT_FAILED
    print("CHECK PASS: derived equations match the reference equations exactly")
    return EXIT_OK


def _sidecar(setup: RunSetup, extra: dict) -> str:
    body = {
        "config": setup.raw,
        "space": setup.spec.to_json(),
        "hamiltonian": {"mass": str(setup.hamiltonian.mass), "force": [str(f) for f in setup.hamiltonian.force]},
        "initial": {"x0": list(setup.initial.x0), "v0": list(setup.initial.v0)},
        "time_span": [setup.t0, setup.t_end],
        **extra,
    }
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


def _outputs(setup: RunSetup, args, stem: str) -> tuple[Path, Path]:
    base = Path(args.out) if args.out else Path(".")
    csv = Path(setup.outputs.get("csv", base / f"{stem}.csv"))
    side = Path(setup.outputs.get("sidecar", csv.with_suffix(".json")))
    return csv, side


def cmd_simulate(args) -> int:
    setup = parse_run_config(_load_json(args.config))
    table = space_table(setup.spec, setup.hamiltonian)
    p0 = momenta_from_velocities(table, setup.hamiltonian, setup.t0, setup.initial.x0, setup.initial.v0)
    traj = integrate(
        table, setup.hamiltonian, PhaseState(setup.t0, setup.initial.x0, p0), setup.t_end, setup.integrator, setup.spec
    )
    energy = energy_series(traj)
    csv, side = _outputs(setup, args, "trajectory")
    _write(csv, trajectory_csv(traj, energy))
    _write(
        side,
        _sidecar(
            setup,
            {
                "integrator": traj.meta,
                "samples": len(traj),
                "energy": {
                    "max_drift": energy.max_drift,
                    "relative_drift": energy.relative_drift,
                    "drift_vs_initial": energy.drift_vs_initial,
                    "scale": energy.scale,
                },
            },
        ),
    )
    print(f"wrote {csv} ({len(traj)} samples); energy drift {energy.max_drift:.3e} (relative {energy.relative_drift:.3e})")
    return EXIT_OK


def _closed_form_outputs(setup: RunSetup, csv: Path, side: Path, extra: dict | None = None) -> str:
    if setup.t0 != 0:
        raise UsageError("closed forms start at t = 0; set time_span[0] to 0")
    times = np.linspace(0.0, setup.t_end, setup.samples)
    states, energy, source = closed_form_states(setup.spec, setup.hamiltonian, setup.initial, times)
    _write(csv, phase_csv(times, states, energy))
    info = {"source": source, "samples": setup.samples, "momenta": "finite differences of closed-form positions"}
    _write(side, _sidecar(setup, {**info, **(extra or {})}))
    return source


def cmd_analytic(args) -> int:
    setup = parse_run_config(_load_json(args.config))
    csv, side = _outputs(setup, args, "analytic")
    source = _closed_form_outputs(setup, csv, side)
    print(f"wrote {csv} ({setup.samples} samples, {source})")
    return EXIT_OK


def cmd_compare(args) -> int:
    setup = parse_run_config(_load_json(args.config))
    if setup.t0 != 0:
        raise UsageError("closed forms start at t = 0; set time_span[0] to 0")
    tol = 1e-6 if args.tol is None else args.tol
    start = time.perf_counter()
    result = compare_closed_form(
        setup.spec, setup.hamiltonian, setup.initial, setup.t_end, setup.samples, setup.integrator
    )
    elapsed = time.perf_counter() - start
    dev = result.max_deviation
    ok = dev <= tol
    axes = ", ".join(f"{n}={d:.3e}" for n, d in zip(("x_k", "x_l", "x_gamma"), result.deviation))
    print(f"{'PASS' if ok else 'FAIL'} max relative deviation {dev:.3e} (tol {tol:g}); {axes}; "
          f"{result.source}; {elapsed:.2f}s")
    return EXIT_OK if ok else EXIT_FAILED


def _solver_config(data: dict, seed: int | None) -> tuple[solver.SolverConfig, str | None]:
    _validate(data, SOLVER_CONFIG_SCHEMA)
    fields = {k: v for k, v in data.items() if k not in ("output", "initial_spaces")}
    points = [tuple(p) for p in fields.pop("initial_points", [])]
    for sd in data.get("initial_spaces", []):
        points.append(tuple(solver.pack(tensors_from_table(build_table(space_from_json(sd), exact=False)))))
    prior = fields.get("sparsity_prior")
    if isinstance(prior, dict):
        fields["sparsity_prior"] = solver.mask_for(
            tensors_from_table(build_table(space_from_json(prior["like"]), exact=False))
        )
    if seed is not None:
        fields["seed"] = seed
    try:
        return solver.SolverConfig(initial_points=tuple(points), **fields), data.get("output")
    except ValueError as exc:
        raise UsageError(f"invalid solver config: {exc}") from None


def cmd_solve(args) -> int:
    data = _load_json(args.config) if args.config else {}
    cfg, output = _solver_config(data, args.seed)
    start = time.perf_counter()
    records = solver.solve_constraints(cfg)
    elapsed = time.perf_counter() - start
    path = Path(args.out) if args.out else Path(output or "solutions.jsonl")
    try:
        _write(path, "\n".join(solver.catalogue_lines(records, cfg)) + "\n")
    except OSError as exc:
        print(f"cannot write {path}: {exc.strerror}", file=sys.stderr)
        return EXIT_FAILED
    print(f"{len(records)} signature(s) from {cfg.restarts + len(cfg.initial_points)} start(s) in {elapsed:.1f}s -> {path}")
    for rec in records:
        cls = solver.classify(rec)
        note = f" [{cls.note}]" if cls.note else ""
        print(f"  {rec.signature}  {cls.label}{note}  residual {rec.residual_norm:.2e}")
    return EXIT_OK


def figure_config(figure: int, side: str, samples: int = FIGURE_SAMPLES) -> dict:
    """Run configuration that reproduces a figure's deformed curve."""
    preset = get_preset(figure, side)
    h = preset.hamiltonian()
    return {
        "space": preset.spec().to_json(),
        "hamiltonian": {"mass": str(h.mass), "force": [str(f) for f in h.force]},
        "initial": {"x0": list(preset.initial_conditions().x0), "v0": list(preset.initial_conditions().v0)},
        "time_span": [0.0, preset.span],
        "samples": samples,
    }


def cmd_figure(args) -> int:
    if (args.figure, args.side) not in PRESETS:
        raise UsageError(f"unknown figure {args.figure} {args.side}")
    preset = get_preset(args.figure, args.side)
    out = _output_dir(args, f"fig{args.figure}-{args.side}")
    deformed = parse_run_config(figure_config(args.figure, args.side))
    flat = dict(deformed.raw, space={**deformed.raw["space"], "kind": "commutative",
                                     "kappa": None, "kappa_tilde": None, "kappa_bar": None})
    undeformed = parse_run_config(flat)
    extra = {"preset": preset.to_json()}
    _closed_form_outputs(deformed, out / "deformed.csv", out / "deformed.json", extra)
    _closed_form_outputs(undeformed, out / "undeformed.csv", out / "undeformed.json", extra)
    print(f"wrote {out / 'deformed.csv'} and {out / 'undeformed.csv'} ({FIGURE_SAMPLES} samples each)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the flags with suppressed defaults so they never
    # overwrite a value given before the subcommand name
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--exact", action="store_true", help="rational arithmetic where applicable", **kw)
    p.add_argument("--seed", type=int, **kw)
    p.add_argument("--tol", type=float, **kw)
    p.add_argument("--out", **kw)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    parser = argparse.ArgumentParser(
        prog="ncphase", description=__doc__.splitlines()[0], parents=[_global_flags(suppress=False)]
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", parents=[common], help="check the Jacobi identity of a bracket table")
    _space_args(p)
    p.add_argument("--table", help="bracket table JSON file")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("derive", parents=[common], help="print Hamilton and Newton equations")
    _space_args(p)
    p.add_argument("--mass", default="1")
    p.add_argument("--force", nargs=3, default=("0", "0", "0"), metavar=("F_K", "F_L", "F_GAMMA"))
    p.add_argument("--check", action="store_true", help="compare with the built-in reference equations")
    p.set_defaults(func=cmd_derive)

    for name, func, text in (
        ("simulate", cmd_simulate, "integrate a run configuration"),
        ("analytic", cmd_analytic, "evaluate the closed form of a run configuration"),
        ("compare", cmd_compare, "closed form against numerical integration"),
    ):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("config")
        p.set_defaults(func=func)

    p = sub.add_parser("solve", parents=[common], help="search for admissible structure constants")
    p.add_argument("config", nargs="?")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("figure", parents=[common], help="deformed and undeformed curves of a figure")
    p.add_argument("figure", type=int)
    p.add_argument("side", choices=("left", "right"))
    p.set_defaults(func=cmd_figure)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NCPhaseError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
