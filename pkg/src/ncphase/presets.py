"""Parameter sets of the four reference figures.

Every preset starts at the origin with unit mass and unit initial velocity
along ``l``; only ``F_gamma`` is nonzero among the forces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .algebra import SpaceKind, SpaceSpec
from .analytic import InitialConditions
from .dynamics import PhaseState
from .poisson import Hamiltonian


@dataclass(frozen=True)
class FigurePreset:
    figure: int
    side: str
    kind: SpaceKind
    kappa: int
    kappa_tilde: int
    kappa_bar: int | None
    force_gamma: Fraction
    mu: Fraction | None = None
    mass: Fraction = Fraction(1)
    v_l0: Fraction = Fraction(1)

    @property
    def name(self) -> str:
        return f"fig{self.figure}-{self.side}"

    def spec(self) -> SpaceSpec:
        return SpaceSpec.from_kappas(self.kind, self.kappa, self.kappa_tilde, self.kappa_bar)

    def hamiltonian(self) -> Hamiltonian:
        return Hamiltonian(self.mass, (Fraction(0), Fraction(0), self.force_gamma))

    def initial_conditions(self) -> InitialConditions:
        return InitialConditions((0, 0, 0), (0, float(self.v_l0), 0))

    def initial_state(self) -> PhaseState:
        # at the origin and t = 0 every correction to p = m v vanishes
        return PhaseState(0.0, (0, 0, 0), (0, float(self.mass * self.v_l0), 0))

    @property
    def span(self) -> float:
        kt, fg = self.kappa_tilde, float(self.force_gamma)
        if self.figure == 1:
            return 10 * math.pi * kt / fg
        if self.figure == 2:
            kb = self.kappa_bar
            return 6 * math.pi / math.sqrt(fg * (1 / kb - fg / kt**2))
        if self.figure == 3:
            return 10 * math.pi * self.kappa_bar / (math.sqrt(3) * kt)
        return 2 * math.sqrt(2) * math.pi * self.kappa_bar / kt

    def to_json(self) -> dict:
        return {
            "figure": self.figure,
            "side": self.side,
            "kind": self.kind.value,
            "kappa": self.kappa,
            "kappa_tilde": self.kappa_tilde,
            "kappa_bar": self.kappa_bar,
            "force_gamma": str(self.force_gamma),
            "mu": None if self.mu is None else str(self.mu),
            "mass": str(self.mass),
            "v_l0": str(self.v_l0),
            "t_end": self.span,
        }


def _fig2(mu: Fraction, side: str) -> FigurePreset:
    kt, kb = 10, 500
    return FigurePreset(2, side, SpaceKind.TYPE_II, 10, kt, kb, mu * kt * kt / kb, mu)


def _typeII(figure: int, side: str, kappa: int, kt: int, factor: int) -> FigurePreset:
    kb = 10
    return FigurePreset(figure, side, SpaceKind.TYPE_II, kappa, kt, kb, Fraction(factor * kt * kt, kb), Fraction(factor))


PRESETS: dict[tuple[int, str], FigurePreset] = {
    (1, "left"): FigurePreset(1, "left", SpaceKind.TYPE_I, 410, 10, None, Fraction(10)),
    (1, "right"): FigurePreset(1, "right", SpaceKind.TYPE_I, 10, 410, None, Fraction(410)),
    (2, "left"): _fig2(Fraction(2, 5), "left"),
    (2, "right"): _fig2(Fraction(3, 5), "right"),
    (3, "left"): _typeII(3, "left", 700, 100, 4),
    (3, "right"): _typeII(3, "right", 100, 700, 4),
    (4, "left"): _typeII(4, "left", 700, 100, 1),
    (4, "right"): _typeII(4, "right", 100, 700, 1),
}


def get_preset(figure: int, side: str) -> FigurePreset:
    key = (int(figure), str(side).lower())
    if key not in PRESETS:
        raise KeyError(f"no preset for figure {figure} {side}")
    return PRESETS[key]
