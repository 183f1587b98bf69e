"""Event-driven construction of the deterministic log-K limit dynamics.

Population exponents follow piecewise-affine trajectories: within a phase a
single macroscopic resident pins the environment and every other trait's
exponent moves at its invasion-fitness slope, floored by mutation inflow
from its parents (one lattice step down in either coordinate) and by zero.
A phase ends when some trait's exponent meets the resident's; succession
and the stopping rules are applied there.

Everything is computed in closed form (line intersections); no time
stepping is involved, so the output is exactly piecewise affine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fitness import EXTENDED, check_nonzero_fitness, invasion_fitness, is_fit
from .model import ModelParams, TraitIndex
from .pwl import PiecewiseLinear, upper_envelope

__all__ = [
    "Phase",
    "LimitTrajectory",
    "PhaseBuild",
    "build_phase",
    "run_limit",
    "next_event",
    "detect_coexistence",
    "TERMINATION_REASONS",
]

HORIZON_REACHED = "horizon-reached"
NONUNIQUE_ARGMAX = "nonunique-argmax"
FITNESS_SIGN_FAILURE = "fitness-sign-failure"
INVADER_UNFIT = "invader-unfit"
SIMULTANEOUS_EXTINCTION = "simultaneous-extinction"
COEXISTENCE_ACCUMULATION = "coexistence-accumulation"
DEGENERATE_EQUAL_SLOPE = "degenerate-equal-slope"

TERMINATION_REASONS = (
    HORIZON_REACHED,
    NONUNIQUE_ARGMAX,
    FITNESS_SIGN_FAILURE,
    INVADER_UNFIT,
    SIMULTANEOUS_EXTINCTION,
    COEXISTENCE_ACCUMULATION,
    DEGENERATE_EQUAL_SLOPE,
)

MEET_TOL = 1e-9  # phase-end coincidence tolerance on exponent differences
ZERO_TOL = 1e-12
SLOPE_TOL = 1e-9
VIABILITY_SUM = 6.0  # (m+n)*delta below this keeps the invader's equilibrium positive


@dataclass(frozen=True)
class Phase:
    start: float
    end: float
    resident: TraitIndex
    regime: str  # "standard" | "extended"


@dataclass
class LimitTrajectory:
    params: ModelParams
    phases: list[Phase]
    betas: dict[TraitIndex, PiecewiseLinear]
    termination: str
    accumulation_point: float | None = None
    accumulation_traits: list[TraitIndex] | None = None

    @property
    def t_end(self) -> float:
        return self.phases[-1].end if self.phases else 0.0

    def residents(self) -> list[TraitIndex]:
        return [ph.resident for ph in self.phases]


@dataclass
class PhaseBuild:
    """One phase worth of exponent functions plus its breakpoint schedule."""

    params: ModelParams
    t0: float
    cap: float
    focal: TraitIndex
    regime: str
    betas: dict[TraitIndex, PiecewiseLinear]
    slopes: dict[TraitIndex, float]
    events: list[tuple[float, str, TraitIndex | None]] = field(default_factory=list)

    def sorted_events(self):
        return sorted(self.events, key=lambda e: (e[0], e[1]))


def next_event(build: PhaseBuild, after: float | None = None):
    """First scheduled breakpoint strictly after ``after`` (default: phase start)."""
    cut = build.t0 if after is None else after
    for ev in build.sorted_events():
        if ev[0] > cut:
            return ev
    return None


def initial_profile(params: ModelParams) -> dict[TraitIndex, float]:
    return {t: max(1.0 - (t.m + t.n) * params.alpha, 0.0) for t in params.traits()}


def build_phase(
    params: ModelParams,
    t0: float,
    cap: float,
    start_vals: dict[TraitIndex, float],
    focal: TraitIndex,
    regime: str = "standard",
    dead_origin: bool = False,
) -> PhaseBuild:
    """Construct every trait's exponent on ``[t0, cap]`` for one phase.

    Traits are processed in increasing ``m+n`` so parent functions exist
    before their children need them (activation times and mutation floors).
    A trait starting at zero only accrues its own growth once a parent
    exponent first touches ``alpha``; the origin trait has no parents and,
    once extinct, stays extinct.
    """
    mode = EXTENDED if regime == "extended" else "resident-relative"
    slopes = {t: invasion_fitness(t, focal, params, mode=mode) for t in params.traits()}
    alpha = params.alpha
    betas: dict[TraitIndex, PiecewiseLinear] = {}
    events: list[tuple[float, str, TraitIndex | None]] = []
    zero = PiecewiseLinear.constant(t0, cap, 0.0)
    for trait in sorted(params.traits(), key=lambda t: (t.m + t.n, t.m)):
        v0 = start_vals[trait]
        s = slopes[trait]
        if trait == (0, 0):
            if dead_origin or v0 <= ZERO_TOL:
                betas[trait] = PiecewiseLinear.constant(t0, cap, 0.0)
            else:
                own = PiecewiseLinear.line(t0, cap, v0, s)
                betas[trait] = upper_envelope([own, zero])
                _collect_kinks(betas[trait], events, trait)
            continue
        parents = []
        if trait.m > 0:
            parents.append(betas[TraitIndex(trait.m - 1, trait.n)])
        if trait.n > 0:
            parents.append(betas[TraitIndex(trait.m, trait.n - 1)])
        pieces = [p.shift_values(-alpha) for p in parents]
        if v0 > ZERO_TOL:
            own = PiecewiseLinear.line(t0, cap, v0, s)
        else:
            t_act = _activation_time(parents, alpha, t0)
            if t_act is None or t_act >= cap:
                own = None
            elif t_act <= t0:
                own = PiecewiseLinear.line(t0, cap, 0.0, s)
                events.append((t0, "activation", trait))
            else:
                own = PiecewiseLinear(
                    np.array([t0, t_act, cap]),
                    np.array([0.0, 0.0, s * (cap - t_act)]),
                    np.array([0.0, s]),
                )
                events.append((t_act, "activation", trait))
        if own is not None:
            pieces.append(own)
        pieces.append(zero)
        betas[trait] = _clamp_nonneg(upper_envelope(pieces))
        _collect_kinks(betas[trait], events, trait)
    return PhaseBuild(params, t0, cap, focal, regime, betas, slopes, events)


def _clamp_nonneg(f: PiecewiseLinear) -> PiecewiseLinear:
    """Scrub sub-epsilon negative dirt the envelope can leave on flat-zero runs."""
    if float(f.values.min()) >= 0.0:
        return f
    vals = np.maximum(f.values, 0.0)
    return PiecewiseLinear.from_points(f.breakpoints, vals)


def _activation_time(parents: list[PiecewiseLinear], alpha: float, t0: float) -> float | None:
    best = None
    for p in parents:
        if p(t0) >= alpha - MEET_TOL:
            return t0
        t = p.first_touch_any(alpha, after=t0)
        if t is not None and (best is None or t < best):
            best = t
    return best


def _segment_start_value(f: PiecewiseLinear, t: float) -> float:
    """Value at the start of the segment seen approaching ``t`` from the left."""
    i = int(np.clip(np.searchsorted(f.breakpoints, t, side="left") - 1, 0, len(f.slopes) - 1))
    return float(f.values[i])


def _collect_kinks(f: PiecewiseLinear, events, trait) -> None:
    for i in range(1, len(f.breakpoints) - 1):
        t = float(f.breakpoints[i])
        kind = "zero-hit" if f.values[i] <= ZERO_TOL and f.slopes[i - 1] < 0.0 else "kink"
        events.append((t, kind, trait))


def _phase_end(build: PhaseBuild):
    """Earliest meet with the focal exponent; promote event in extended mode."""
    focal_beta = build.betas[build.focal]
    meets: list[tuple[float, TraitIndex]] = []
    for trait, f in build.betas.items():
        if trait == build.focal:
            continue
        t = f.first_crossing(focal_beta, after=build.t0)
        if t is not None:
            meets.append((t, trait))
            build.events.append((t, "meet", trait))
    t_meet = None
    winners: list[TraitIndex] = []
    if meets:
        meets.sort(key=lambda e: e[0])
        t_meet = meets[0][0]
        winners = [tr for t, tr in meets if t - t_meet <= MEET_TOL]
    t_promote = None
    if build.regime == "extended" and is_fit(build.focal, build.params):
        t_promote = focal_beta.first_hit(1.0, after=build.t0)
        if t_promote is not None:
            build.events.append((t_promote, "promote", build.focal))
    return t_meet, winners, t_promote


def detect_coexistence(
    phases: list[Phase],
    incoming: TraitIndex,
    s_k: float,
    values_at_end: dict[TraitIndex, float],
    min_phases: int = 6,
    ratio_ceiling: float = 1.0 - 1e-6,
    ratio_stability: float = 1e-3,
    level_gap: float = 1e-6,
) -> tuple[float, list[TraitIndex]] | None:
    """Geometric accumulation test on residency cycles.

    A cycle spans consecutive takeovers by the trait that is about to become
    resident again (at time ``s_k``).  Fires when the last three full cycles
    repeat the same resident sequence, their durations contract
    geometrically (both ratios below ``ratio_ceiling`` and equal to within
    ``ratio_stability``), and every participant's exponent has collapsed
    onto the meet level to within ``level_gap``.  Returns the extrapolated
    accumulation time and the participating traits.
    """
    if len(phases) < min_phases:
        return None
    starts = [i for i, ph in enumerate(phases) if ph.resident == incoming]
    if len(starts) < 3:
        return None
    j1, j2, j3 = starts[-3], starts[-2], starts[-1]
    seq1 = [phases[j].resident for j in range(j1, j2)]
    seq2 = [phases[j].resident for j in range(j2, j3)]
    seq3 = [phases[j].resident for j in range(j3, len(phases))]
    if not (seq1 == seq2 == seq3):
        return None
    d1 = phases[j2].start - phases[j1].start
    d2 = phases[j3].start - phases[j2].start
    d3 = s_k - phases[j3].start
    if min(d1, d2, d3) <= 0.0:
        return None
    r1, r2 = d2 / d1, d3 / d2
    if not (r1 < ratio_ceiling and r2 < ratio_ceiling):
        return None
    if abs(r2 - r1) > ratio_stability:
        return None
    participants = sorted(set(seq2) | {incoming})
    vals = [values_at_end[t] for t in participants]
    if max(vals) - min(vals) > level_gap:
        return None
    t_inf = s_k + d3 * r2 / (1.0 - r2)
    return t_inf, participants


def _stabilize_dominant(
    params: ModelParams,
    winner: TraitIndex,
    end_vals: dict[TraitIndex, float],
) -> TraitIndex | None:
    """Resolve who is dominant right after a sub-macroscopic handover.

    The meeting trait takes over unless another trait at the same level
    immediately outgrows it under the new dominance, in which case that
    trait takes over instead.  Two at-level traits sharing a negative slope
    leave the succession undefined (``None`` -> degenerate stop).
    """
    level = end_vals[winner]
    at_level = [tr for tr, v in end_vals.items() if abs(v - level) <= MEET_TOL]
    current = winner
    for _ in range(len(at_level) + 1):
        own_slope = invasion_fitness(current, current, params, mode=EXTENDED)
        challenger = None
        for tr in at_level:
            if tr == current:
                continue
            s = invasion_fitness(tr, current, params, mode=EXTENDED)
            if abs(s - own_slope) <= SLOPE_TOL and own_slope < 0.0:
                return None
            if s > own_slope + SLOPE_TOL and (challenger is None or s > challenger[1]):
                challenger = (tr, s)
        if challenger is None:
            return current
        current = challenger[0]
    return current


def _assemble(segments: dict[TraitIndex, list[PiecewiseLinear]]) -> dict[TraitIndex, PiecewiseLinear]:
    out = {}
    for trait, segs in segments.items():
        ts: list[float] = []
        vs: list[float] = []
        for seg in segs:
            for j in range(len(seg.breakpoints)):
                t = float(seg.breakpoints[j])
                v = float(seg.values[j])
                if ts and t - ts[-1] < 1e-15:
                    vs[-1] = v
                    continue
                ts.append(t)
                vs.append(v)
        out[trait] = PiecewiseLinear.from_points(ts, vs).simplified()
    return out


def run_limit(params: ModelParams, horizon: float, mode: str = "standard") -> LimitTrajectory:
    """Compute the limit exponent trajectory up to ``horizon`` (log-K time).

    ``mode='standard'`` follows the strict induction: the run stops at the
    first violated continuation rule.  ``mode='extended'`` additionally
    follows the population through sub-macroscopic stretches (dominant
    trait unfit, or fit but not yet of full order), using the density-free
    fitness until a fit dominant's exponent returns to 1.
    """
    if mode not in ("standard", "extended"):
        raise ValueError(f"unknown mode {mode!r}")
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    check_nonzero_fitness(params)

    start_vals = initial_profile(params)
    resident = TraitIndex(0, 0)
    regime = "standard"
    dead_origin = False
    t0 = 0.0
    phases: list[Phase] = []
    segments: dict[TraitIndex, list[PiecewiseLinear]] = {t: [] for t in params.traits()}
    termination = HORIZON_REACHED
    accumulation_point = None
    accumulation_traits = None

    while t0 < horizon:
        build = build_phase(params, t0, horizon, start_vals, resident, regime, dead_origin)
        t_meet, winners, t_promote = _phase_end(build)

        def close(end: float) -> dict[TraitIndex, float]:
            for trait, f in build.betas.items():
                segments[trait].append(f.truncated(end))
            phases.append(Phase(t0, end, resident, regime))
            return {trait: float(max(f(end), 0.0)) for trait, f in build.betas.items()}

        if t_meet is None and t_promote is None:
            close(horizon)
            termination = HORIZON_REACHED
            break

        if t_promote is not None and (t_meet is None or t_promote <= t_meet):
            end_vals = close(t_promote)
            end_vals[resident] = 1.0
            start_vals = end_vals
            regime = "standard"
            t0 = t_promote
            dead_origin = dead_origin or end_vals[TraitIndex(0, 0)] <= ZERO_TOL
            continue

        s_k = t_meet
        end_vals = close(s_k)
        dead_origin = dead_origin or end_vals[TraitIndex(0, 0)] <= ZERO_TOL
        if len(winners) > 1:
            termination = NONUNIQUE_ARGMAX
            break
        winner = winners[0]

        detection = detect_coexistence(phases, winner, s_k, end_vals)
        if detection is not None:
            termination = COEXISTENCE_ACCUMULATION
            accumulation_point, accumulation_traits = detection
            break

        if regime == "standard":
            extinct_now = [
                tr
                for tr, f in build.betas.items()
                if tr != resident
                and end_vals[tr] <= MEET_TOL
                and f.slope_before(s_k) < -ZERO_TOL
                and _segment_start_value(f, s_k) > MEET_TOL
            ]
            if extinct_now:
                termination = SIMULTANEOUS_EXTINCTION
                break
            if not is_fit(winner, params) or (winner.m + winner.n) * params.delta >= VIABILITY_SUM:
                if mode == "standard":
                    termination = INVADER_UNFIT
                    break
                new_dom = _stabilize_dominant(params, winner, end_vals)
                if new_dom is None:
                    termination = DEGENERATE_EQUAL_SLOPE
                    break
                regime = "extended"
                resident = new_dom
                t0 = s_k
                start_vals = end_vals
                continue
            s_old_vs_new = invasion_fitness(resident, winner, params)
            s_new_vs_old = invasion_fitness(winner, resident, params)
            if not (s_old_vs_new < 0.0 and s_new_vs_old > 0.0):
                termination = FITNESS_SIGN_FAILURE
                break
            end_vals[winner] = end_vals[resident]
            resident = winner
            t0 = s_k
            start_vals = end_vals
            continue

        # extended regime: dominance handover below full order
        if end_vals[resident] <= MEET_TOL:
            termination = SIMULTANEOUS_EXTINCTION
            break
        new_dom = _stabilize_dominant(params, winner, end_vals)
        if new_dom is None:
            termination = DEGENERATE_EQUAL_SLOPE
            break
        end_vals[winner] = end_vals[resident]
        resident = new_dom
        t0 = s_k
        start_vals = end_vals

    betas = _assemble(segments)
    return LimitTrajectory(
        params=params,
        phases=phases,
        betas=betas,
        termination=termination,
        accumulation_point=accumulation_point,
        accumulation_traits=accumulation_traits,
    )
