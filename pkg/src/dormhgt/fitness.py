"""Closed-form equilibria and invasion fitness.

A resident trait ``(x, y)`` with ``(x+y)/2 < 3`` holds the population at
the equilibrium returned by :func:`equilibrium`.  The initial exponential
growth rate of a rare invader in that background is :func:`invasion_fitness`.
For invaders that can become dormant the rate is the dominant eigenvalue of
a 2x2 mean matrix; for pure-HGT invaders it is a scalar birth/death balance.

The "extended" variant applies when nobody is macroscopic: density-dependent
terms drop out (death rate 1, no dormancy initiation) and only the
birth/transfer balance remains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import GRID_EXTENT, ModelParams, TraitIndex

__all__ = [
    "Equilibrium",
    "FitnessSpec",
    "UnfitResidentError",
    "is_fit",
    "equilibrium",
    "fitness_components",
    "invasion_fitness",
    "fitness_matrix",
    "check_nonzero_fitness",
]

RESIDENT_RELATIVE = "resident-relative"
EXTENDED = "extended"


class UnfitResidentError(ValueError):
    """Raised when a resident-relative fitness is requested against a trait
    with no positive equilibrium."""


@dataclass(frozen=True)
class Equilibrium:
    z_a: float
    z_d: float

    def as_tuple(self) -> tuple[float, float]:
        return self.z_a, self.z_d


@dataclass(frozen=True)
class FitnessSpec:
    """Growth/switching components feeding one fitness evaluation."""

    r1: float
    r2: float
    sigma1: float
    sigma2: float
    mode: str  # resident-relative | extended
    case: str  # one-type | bi-type

    def value(self) -> float:
        if self.case == "one-type":
            return self.r1
        disc = (self.r1 - self.r2) ** 2 + 4.0 * self.sigma1 * self.sigma2
        return 0.5 * (self.r1 + self.r2 + math.sqrt(disc))


def is_fit(trait: TraitIndex, params: ModelParams) -> bool:
    """Whether the trait supports a positive resident equilibrium."""
    x, y = params.coords(trait)
    return 3.0 - (x + y) / 2.0 > 0.0


def equilibrium(trait: TraitIndex, params: ModelParams) -> Equilibrium:
    """Stable equilibrium densities (per K) of a lone resident trait.

    Unfit traits (``(x+y)/2 >= 3``) return ``(0, 0)``.
    """
    x, y = params.coords(trait)
    growth = 3.0 - (x + y) / 2.0
    if growth <= 0.0:
        return Equilibrium(0.0, 0.0)
    ks = params.kappa + params.sigma
    den = params.kappa + (1.0 - params.p * x) * params.sigma
    z_a = growth * ks / (params.C * den)
    z_d = params.p * x * growth * growth * ks / (params.C * den * den)
    return Equilibrium(z_a, z_d)


def _sign(v: float) -> float:
    return float(np.sign(v))


def fitness_components(
    invader: TraitIndex,
    resident: TraitIndex,
    params: ModelParams,
    mode: str = RESIDENT_RELATIVE,
) -> FitnessSpec:
    """Build the (r1, r2, sigma1, sigma2) bundle for one invader/resident pair."""
    xt, yt = params.coords(invader)
    x, y = params.coords(resident)
    sgn = _sign(yt - y)
    tau = params.tau
    ks = params.kappa + params.sigma
    if mode == EXTENDED:
        r1 = 3.0 - (xt + yt) / 2.0 + tau * sgn
        if invader.m == 0:
            return FitnessSpec(r1, 0.0, 0.0, params.sigma, EXTENDED, "one-type")
        return FitnessSpec(r1, -ks, 0.0, params.sigma, EXTENDED, "bi-type")
    if mode != RESIDENT_RELATIVE:
        raise ValueError(f"unknown fitness mode {mode!r}")
    growth = 3.0 - (x + y) / 2.0
    if growth <= 0.0:
        raise UnfitResidentError(
            f"resident {tuple(resident)} has no positive equilibrium; "
            "resident-relative fitness is undefined"
        )
    ratio = ks / (params.kappa + (1.0 - params.p * x) * params.sigma)
    r1 = 3.0 - (xt + yt) / 2.0 - growth * ratio + tau * sgn
    if invader.m == 0:
        return FitnessSpec(r1, 0.0, 0.0, params.sigma, mode, "one-type")
    sigma1 = params.p * xt * growth * ratio
    return FitnessSpec(r1, -ks, sigma1, params.sigma, mode, "bi-type")


def invasion_fitness(
    invader: TraitIndex,
    resident: TraitIndex,
    params: ModelParams,
    mode: str = RESIDENT_RELATIVE,
) -> float:
    """Initial growth rate of a rare invader against the given background.

    In extended mode the bi-type value reduces to
    ``max(r1, -(kappa+sigma))`` and never depends on the resident's density.
    """
    spec = fitness_components(invader, resident, params, mode)
    if spec.mode == EXTENDED and spec.case == "bi-type":
        # sigma1 = 0 collapses the radical to max(r1, r2)
        return max(spec.r1, spec.r2)
    return spec.value()


def fitness_matrix(
    params: ModelParams, mode: str = RESIDENT_RELATIVE
) -> dict[tuple[TraitIndex, TraitIndex], float]:
    """Fitness of every ordered (invader, resident) pair.

    Pairs whose resident is unfit are ``nan`` in resident-relative mode.
    The diagonal is identically zero.
    """
    table: dict[tuple[TraitIndex, TraitIndex], float] = {}
    for resident in params.traits():
        for invader in params.traits():
            if invader == resident:
                table[(invader, resident)] = 0.0
                continue
            try:
                table[(invader, resident)] = invasion_fitness(
                    invader, resident, params, mode
                )
            except UnfitResidentError:
                table[(invader, resident)] = float("nan")
    return table


def check_nonzero_fitness(params: ModelParams, tol: float = 1e-9) -> None:
    """Verify the no-neutral-pair hypothesis: ``S != 0`` for all distinct
    pairs with a fit resident.  Violations are a configuration error."""
    for resident in params.traits():
        if not is_fit(resident, params):
            continue
        for invader in params.traits():
            if invader == resident:
                continue
            s = invasion_fitness(invader, resident, params)
            if abs(s) <= tol:
                raise ValueError(
                    f"fitness of {tuple(invader)} against {tuple(resident)} is "
                    f"{s:.3e}, within {tol:.1e} of zero; the phase construction "
                    "requires strictly signed fitnesses"
                )
