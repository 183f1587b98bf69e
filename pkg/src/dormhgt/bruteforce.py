"""Grid-scan cross-check for the event-driven limit construction.

Builds the same limit exponents by marching a fine time grid (default step
1e-5), detecting events by bracketing sign changes between grid points and
refining each event time by bisection on pointwise-evaluated exponents.
No envelopes or closed-form intersection scheduling are used, so this path
is an independent check of the event engine's trajectory.  Near a phase
accumulation the scan step shrinks with the phase durations, otherwise
whole phases would fall between grid points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fitness import EXTENDED, invasion_fitness, is_fit
from .limit import (
    COEXISTENCE_ACCUMULATION,
    DEGENERATE_EQUAL_SLOPE,
    FITNESS_SIGN_FAILURE,
    HORIZON_REACHED,
    INVADER_UNFIT,
    MEET_TOL,
    NONUNIQUE_ARGMAX,
    SIMULTANEOUS_EXTINCTION,
    VIABILITY_SUM,
    Phase,
    detect_coexistence,
    _stabilize_dominant,
)
from .model import ModelParams, TraitIndex

__all__ = ["ScanTrajectory", "scan_limit"]

_BISECT_ITERS = 80
_CHUNK = 4096


@dataclass
class _PhaseRecord:
    start: float
    end: float
    resident: TraitIndex
    regime: str
    beta0: np.ndarray  # values at phase start
    slopes: np.ndarray
    t_act: np.ndarray  # activation time per trait (inf = never)
    dead_origin: bool


@dataclass
class ScanTrajectory:
    params: ModelParams
    records: list[_PhaseRecord]
    termination: str
    accumulation_point: float | None

    @property
    def phases(self) -> list[Phase]:
        return [Phase(r.start, r.end, r.resident, r.regime) for r in self.records]

    @property
    def t_end(self) -> float:
        return self.records[-1].end if self.records else 0.0

    def beta_at(self, times) -> np.ndarray:
        """Exponent values, shape (n_traits, len(times))."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.zeros((self.params.n_traits, len(times)))
        ends = np.array([r.end for r in self.records])
        idx = np.clip(np.searchsorted(ends, times, side="left"), 0, len(self.records) - 1)
        order = _trait_order(self.params)
        for k, rec in enumerate(self.records):
            sel = idx == k
            if np.any(sel):
                out[:, sel] = _profile(self.params, order, rec, times[sel])
        return out


def _trait_order(params: ModelParams) -> list[TraitIndex]:
    return sorted(params.traits(), key=lambda t: (t.m + t.n, t.m))


def _profile(params: ModelParams, order, rec: _PhaseRecord, times: np.ndarray) -> np.ndarray:
    """Pointwise exponents under one phase's frozen activation data."""
    alpha = params.alpha
    side = params.L + 1
    out = np.zeros((params.n_traits, len(times)))
    for trait in order:
        i = trait.m * side + trait.n
        own = rec.beta0[i] + rec.slopes[i] * np.maximum(times - rec.t_act[i], 0.0)
        b = np.maximum(own, 0.0)
        if trait == (0, 0):
            if rec.dead_origin or rec.beta0[i] <= 0.0:
                b = np.zeros_like(times)
        else:
            if trait.m > 0:
                b = np.maximum(b, out[(trait.m - 1) * side + trait.n] - alpha)
            if trait.n > 0:
                b = np.maximum(b, out[trait.m * side + trait.n - 1] - alpha)
        out[i] = b
    return out


def _bisect(fn, lo: float, hi: float) -> float:
    flo = fn(lo)
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if (fn(mid) < 0.0) == (flo < 0.0):
            lo = mid
        else:
            hi = mid
    return hi


def scan_limit(
    params: ModelParams,
    horizon: float,
    mode: str = "standard",
    step: float = 1e-5,
) -> ScanTrajectory:
    """Forward grid-scan analogue of :func:`dormhgt.limit.run_limit`."""
    order = _trait_order(params)
    side = params.L + 1
    ids = {t: t.m * side + t.n for t in order}
    parents = {
        t: [
            (p[0] * side + p[1])
            for p in ((t.m - 1, t.n), (t.m, t.n - 1))
            if p[0] >= 0 and p[1] >= 0
        ]
        for t in order
    }
    alpha = params.alpha
    n = params.n_traits

    def slopes_for(focal: TraitIndex, regime: str) -> np.ndarray:
        mode_f = EXTENDED if regime == "extended" else "resident-relative"
        s = np.zeros(n)
        for t in order:
            s[ids[t]] = invasion_fitness(t, focal, params, mode=mode_f)
        return s

    beta0 = np.zeros(n)
    for t in order:
        beta0[ids[t]] = max(1.0 - (t.m + t.n) * alpha, 0.0)
    resident = TraitIndex(0, 0)
    regime = "standard"
    dead_origin = False
    t0 = 0.0
    records: list[_PhaseRecord] = []
    termination = HORIZON_REACHED
    accumulation_point = None
    local_step = step

    while t0 < horizon:
        rec = _PhaseRecord(
            t0, horizon, resident, regime, beta0.copy(),
            slopes_for(resident, regime), np.full(n, np.inf), dead_origin,
        )
        for t in order:
            if beta0[ids[t]] > 0.0:
                rec.t_act[ids[t]] = t0
        focal_id = ids[resident]

        def value(trait_id: int, t: float) -> float:
            return float(_profile(params, order, rec, np.array([t]))[trait_id, 0])

        # parents already at the mutation threshold activate immediately
        prof0 = _profile(params, order, rec, np.array([t0]))[:, 0]
        for t in order:
            i = ids[t]
            if t != (0, 0) and not np.isfinite(rec.t_act[i]):
                if any(prof0[j] >= alpha - MEET_TOL for j in parents[t]):
                    rec.t_act[i] = t0

        armed = np.zeros(n, dtype=bool)
        promote_armed = False
        promote_watch = regime == "extended" and is_fit(resident, params)
        t_cur = t0
        s_k = None
        event = None  # ("meet", trait) | ("promote", None)
        while True:
            k = min(_CHUNK, max(1, int(np.ceil((horizon - t_cur) / local_step))))
            ts = np.concatenate(([t_cur], np.minimum(t_cur + local_step * np.arange(1, k + 1), horizon)))
            ts = np.unique(ts)
            if len(ts) < 2:
                break
            prof = _profile(params, order, rec, ts)
            diff = prof - prof[focal_id]
            below = diff < -MEET_TOL
            armed_cum = np.logical_or.accumulate(below, axis=1) | armed[:, None]
            meet_mask = armed_cum[:, :-1] & (diff[:, :-1] < 0.0) & (diff[:, 1:] >= 0.0)
            meet_mask[focal_id, :] = False
            act_mask = np.zeros_like(meet_mask)
            for t in order:
                i = ids[t]
                if t == (0, 0) or np.isfinite(rec.t_act[i]):
                    continue
                for j in parents[t]:
                    act_mask[i] |= (prof[j, :-1] < alpha) & (prof[j, 1:] >= alpha)
            promote_cols = np.zeros(meet_mask.shape[1], dtype=bool)
            if promote_watch:
                f = prof[focal_id]
                under = f < 1.0 - MEET_TOL
                parmed = np.logical_or.accumulate(under) | promote_armed
                promote_cols = parmed[:-1] & (f[:-1] < 1.0) & (f[1:] >= 1.0)
            any_event = meet_mask.any(axis=0) | act_mask.any(axis=0) | promote_cols
            if not any_event.any():
                armed |= below.any(axis=1)
                if promote_watch:
                    promote_armed = bool(promote_armed or (prof[focal_id] < 1.0 - MEET_TOL).any())
                t_cur = float(ts[-1])
                if t_cur >= horizon:
                    break
                continue
            col = int(np.argmax(any_event))
            a, b = float(ts[col]), float(ts[col + 1])
            armed |= below[:, : col + 1].any(axis=1)
            if promote_watch:
                promote_armed = bool(
                    promote_armed or (prof[focal_id, : col + 1] < 1.0 - MEET_TOL).any()
                )
            best_t, best_ev = None, None
            for i in np.nonzero(meet_mask[:, col])[0]:
                tc = _bisect(lambda u, i=i: value(int(i), u) - value(focal_id, u), a, b)
                if best_t is None or tc < best_t:
                    best_t, best_ev = tc, ("meet", order[0])
                    for t in order:
                        if ids[t] == int(i):
                            best_ev = ("meet", t)
            for t in order:
                i = ids[t]
                if not act_mask[i, col]:
                    continue
                for j in parents[t]:
                    if prof[j, col] < alpha <= prof[j, col + 1]:
                        tc = _bisect(lambda u, j=j: value(j, u) - alpha, a, b)
                        if best_t is None or tc < best_t:
                            best_t, best_ev = tc, ("activate", t)
            if promote_cols[col]:
                tc = _bisect(lambda u: value(focal_id, u) - 1.0, a, b)
                if best_t is None or tc < best_t:
                    best_t, best_ev = tc, ("promote", None)
            if best_ev[0] == "activate":
                rec.t_act[ids[best_ev[1]]] = best_t
                t_cur = best_t
                continue
            s_k = best_t
            event = best_ev
            break
        if s_k is None:
            rec.end = horizon
            records.append(rec)
            termination = HORIZON_REACHED
            break

        rec.end = s_k
        records.append(rec)
        end_prof = _profile(params, order, rec, np.array([s_k]))[:, 0]
        end_vals = {t: float(end_prof[ids[t]]) for t in order}
        local_step = min(step, max((s_k - t0) / 8.0, 1e-9))
        dead_origin = dead_origin or end_vals[TraitIndex(0, 0)] <= 1e-12

        if event[0] == "promote":
            end_prof[focal_id] = 1.0
            beta0 = end_prof
            regime = "standard"
            t0 = s_k
            continue

        winner = event[1]
        ties = [
            t
            for t in order
            if t not in (resident, winner)
            and abs(end_vals[t] - end_vals[resident]) <= MEET_TOL
            and _was_below(params, order, rec, ids[t], focal_id, t0, s_k)
        ]
        if ties:
            termination = NONUNIQUE_ARGMAX
            break
        phases = [Phase(r.start, r.end, r.resident, r.regime) for r in records]
        detection = detect_coexistence(phases, winner, s_k, end_vals)
        if detection is not None:
            termination = COEXISTENCE_ACCUMULATION
            accumulation_point = detection[0]
            break
        if regime == "standard":
            # left-limit positivity: the exponent must decline into zero at
            # s_k itself, not merely have been positive earlier in the phase
            d = max((s_k - t0) * 1e-6, 1e-12)
            prev_prof = _profile(params, order, rec, np.array([s_k - d]))[:, 0]
            extinct = [
                t
                for t in order
                if t != resident
                and end_vals[t] <= MEET_TOL
                and prev_prof[ids[t]] - end_vals[t] > 1e-3 * d
            ]
            if extinct:
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
                beta0 = end_prof
                t0 = s_k
                continue
            if not (
                invasion_fitness(resident, winner, params) < 0.0
                and invasion_fitness(winner, resident, params) > 0.0
            ):
                termination = FITNESS_SIGN_FAILURE
                break
            end_prof[ids[winner]] = end_prof[focal_id]
            beta0 = end_prof
            resident = winner
            t0 = s_k
            continue
        if end_vals[resident] <= MEET_TOL:
            termination = SIMULTANEOUS_EXTINCTION
            break
        new_dom = _stabilize_dominant(params, winner, end_vals)
        if new_dom is None:
            termination = DEGENERATE_EQUAL_SLOPE
            break
        end_prof[ids[winner]] = end_prof[focal_id]
        beta0 = end_prof
        resident = new_dom
        t0 = s_k

    return ScanTrajectory(params, records, termination, accumulation_point)


def _was_below(params, order, rec, trait_id, focal_id, t0, s_k) -> bool:
    """Whether a trait sat strictly below the focal exponent during the phase."""
    probes = np.linspace(t0, s_k, 9)[1:-1]
    if len(probes) == 0:
        return False
    prof = _profile(params, order, rec, probes)
    return bool(np.any(prof[trait_id] - prof[focal_id] < -MEET_TOL))
