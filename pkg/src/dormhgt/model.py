"""Trait lattice, model parameters, population state and the jump-rate table.

The model lives on the lattice ``{0, delta, ..., L*delta}^2`` with
``L = floor(4/delta)``.  A trait ``(m, n)`` has coordinates
``(x, y) = (m*delta, n*delta)``; ``x`` is the dormancy strength and ``y``
the gene-transfer strength.  Both depress the birth rate
``b(x, y) = 4 - (x + y)/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "GRID_EXTENT",
    "ModelParams",
    "TraitIndex",
    "PopulationState",
    "RateTable",
    "birth_rate",
    "build_rate_table",
    "initial_state",
]

# Extent of the trait square and intercept of the birth rate.  Baked into
# every closed form below, deliberately not configurable.
GRID_EXTENT = 4.0


class TraitIndex(NamedTuple):
    """Lattice index of a trait; coordinates are ``(m*delta, n*delta)``."""

    m: int
    n: int


@dataclass(frozen=True)
class ModelParams:
    """All model constants.

    ``K`` may be ``None`` for pure-limit computations that never touch a
    finite population.
    """

    delta: float
    C: float = 1.0
    p: float = 0.21
    tau: float = 1.3
    kappa: float = 0.0
    sigma: float = 1.0
    alpha: float = 0.5
    K: int | None = None

    def __post_init__(self):
        if not (0.0 < self.delta < GRID_EXTENT):
            raise ValueError(f"delta must lie in (0, {GRID_EXTENT}), got {self.delta}")
        if not (0.0 < self.p < 0.25):
            raise ValueError(f"p must lie in (0, 1/4), got {self.p}")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.kappa < 0.0:
            raise ValueError(f"kappa must be nonnegative, got {self.kappa}")
        if self.tau < 0.0:
            raise ValueError(f"tau must be nonnegative, got {self.tau}")
        if self.C <= 0.0:
            raise ValueError(f"C must be positive, got {self.C}")
        if self.K is not None and (self.K < 1 or int(self.K) != self.K):
            raise ValueError(f"K must be a positive integer, got {self.K}")

    @property
    def L(self) -> int:
        return int(math.floor(GRID_EXTENT / self.delta))

    @property
    def n_traits(self) -> int:
        side = self.L + 1
        return side * side

    def traits(self) -> list[TraitIndex]:
        """All lattice points, ordered by (m, n)."""
        side = self.L + 1
        return [TraitIndex(m, n) for m in range(side) for n in range(side)]

    def trait_id(self, trait: TraitIndex) -> int:
        return trait[0] * (self.L + 1) + trait[1]

    def coords(self, trait: TraitIndex) -> tuple[float, float]:
        return trait[0] * self.delta, trait[1] * self.delta

    def require_K(self) -> int:
        if self.K is None:
            raise ValueError("this operation needs a finite carrying capacity K")
        return self.K


@dataclass
class PopulationState:
    """Integer counts per trait plus the simulation clock (raw time units)."""

    active: np.ndarray  # int64, shape (L+1, L+1)
    dormant: np.ndarray  # int64, shape (L+1, L+1)
    time: float = 0.0

    def total_active(self) -> int:
        return int(self.active.sum())

    def total(self) -> int:
        return int(self.active.sum() + self.dormant.sum())

    def copy(self) -> "PopulationState":
        return PopulationState(self.active.copy(), self.dormant.copy(), self.time)


@dataclass
class RateTable:
    """Per-trait channel rates at one population state (events per raw time).

    ``transfer`` maps recipient trait -> donor trait -> rate at which one
    active recipient individual is converted into the donor's trait.
    """

    birth_clone: dict[TraitIndex, float] = field(default_factory=dict)
    birth_mut_dorm: dict[TraitIndex, float] = field(default_factory=dict)
    birth_mut_hgt: dict[TraitIndex, float] = field(default_factory=dict)
    death_active: dict[TraitIndex, float] = field(default_factory=dict)
    to_dormant: dict[TraitIndex, float] = field(default_factory=dict)
    death_dormant: dict[TraitIndex, float] = field(default_factory=dict)
    wake: dict[TraitIndex, float] = field(default_factory=dict)
    transfer: dict[TraitIndex, dict[TraitIndex, float]] = field(default_factory=dict)

    def total_rate(self) -> float:
        tot = 0.0
        for d in (
            self.birth_clone,
            self.birth_mut_dorm,
            self.birth_mut_hgt,
            self.death_active,
            self.to_dormant,
            self.death_dormant,
            self.wake,
        ):
            tot += sum(d.values())
        for per_donor in self.transfer.values():
            tot += sum(per_donor.values())
        return tot


def birth_rate(trait: TraitIndex, params: ModelParams) -> float:
    """Per-capita birth rate ``4 - (x + y)/2`` of an active individual."""
    x, y = params.coords(trait)
    return GRID_EXTENT - (x + y) / 2.0


def initial_state(params: ModelParams) -> PopulationState:
    """Starting configuration: resident ``(0,0)`` at its equilibrium size,
    every other trait preloaded at the size mutation pressure would build.

    ``(0,0)`` holds ``floor(3K/C)`` active individuals.  Trait ``(0,n)``
    starts with ``floor(K^(1-n*alpha))`` active individuals when
    ``n*alpha < 1``.  Traits with ``m >= 1`` start with
    ``floor(K^(1-(m+n)*alpha))`` in both compartments when
    ``(m+n)*alpha < 1``.  All other counts are zero.
    """
    K = params.require_K()
    side = params.L + 1
    active = np.zeros((side, side), dtype=np.int64)
    dormant = np.zeros((side, side), dtype=np.int64)
    active[0, 0] = int(math.floor(3.0 * K / params.C))
    for n in range(1, side):
        if n * params.alpha < 1.0:
            active[0, n] = int(math.floor(K ** (1.0 - n * params.alpha)))
    for m in range(1, side):
        for n in range(side):
            e = 1.0 - (m + n) * params.alpha
            if (m + n) * params.alpha < 1.0:
                size = int(math.floor(K**e))
                active[m, n] = size
                dormant[m, n] = size
    return PopulationState(active=active, dormant=dormant, time=0.0)


def build_rate_table(state: PopulationState, params: ModelParams) -> RateTable:
    """Instantaneous rates of every jump channel at ``state``.

    Mutation mass ``K^-alpha / 2`` per direction is charged to the clonal
    birth channel whenever the mutated trait would leave the grid.
    Transfer converts one active individual of a trait into a trait with a
    strictly larger second index, at rate ``tau * A_u * A_v / Ntot`` per
    ordered (donor, recipient) pair.
    """
    K = params.require_K()
    table = RateTable()
    ntot = state.total_active()
    if state.total() == 0:
        return table
    L = params.L
    mut = K ** (-params.alpha)
    for trait in params.traits():
        m, n = trait
        a = int(state.active[m, n])
        d = int(state.dormant[m, n])
        if d > 0:
            table.death_dormant[trait] = d * params.kappa
            table.wake[trait] = d * params.sigma
        if a == 0:
            continue
        b = birth_rate(trait, params)
        total_birth = a * b
        frac_dorm = mut / 2.0 if m + 1 <= L else 0.0
        frac_hgt = mut / 2.0 if n + 1 <= L else 0.0
        if frac_dorm > 0.0:
            table.birth_mut_dorm[trait] = total_birth * frac_dorm
        if frac_hgt > 0.0:
            table.birth_mut_hgt[trait] = total_birth * frac_hgt
        table.birth_clone[trait] = total_birth * (1.0 - frac_dorm - frac_hgt)
        x = m * params.delta
        table.death_active[trait] = a * (1.0 + params.C * (1.0 - params.p * x) * ntot / K)
        if m > 0:
            table.to_dormant[trait] = a * params.C * params.p * x * ntot / K
        if params.tau > 0.0 and ntot > 0:
            per_donor: dict[TraitIndex, float] = {}
            for donor in params.traits():
                if donor.n <= n:
                    continue
                a_u = int(state.active[donor.m, donor.n])
                if a_u == 0:
                    continue
                per_donor[donor] = params.tau * a_u * a / ntot
            if per_donor:
                table.transfer[trait] = per_donor
    return table
