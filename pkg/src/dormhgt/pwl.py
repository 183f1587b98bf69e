"""Exact piecewise-affine functions: construction, envelopes, crossings.

All breakpoints are produced by closed-form line intersections, never by
time stepping, so functions built from affine ingredients stay exactly
piecewise affine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PiecewiseLinear", "upper_envelope"]

_MERGE_EPS = 1e-13


@dataclass
class PiecewiseLinear:
    """Continuous piecewise-affine function on ``[breakpoints[0], breakpoints[-1]]``.

    ``values[i]`` is the function value at ``breakpoints[i]``; ``slopes[i]``
    is the slope on ``[breakpoints[i], breakpoints[i+1]]``.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    slopes: np.ndarray

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.slopes = np.asarray(self.slopes, dtype=float)
        if self.breakpoints.ndim != 1 or len(self.breakpoints) < 2:
            raise ValueError("need at least two breakpoints")
        if len(self.values) != len(self.breakpoints):
            raise ValueError("values and breakpoints length mismatch")
        if len(self.slopes) != len(self.breakpoints) - 1:
            raise ValueError("need one slope per segment")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")

    # -- construction -------------------------------------------------

    @classmethod
    def line(cls, t0: float, t1: float, v0: float, slope: float) -> "PiecewiseLinear":
        return cls(
            np.array([t0, t1]),
            np.array([v0, v0 + slope * (t1 - t0)]),
            np.array([slope]),
        )

    @classmethod
    def constant(cls, t0: float, t1: float, v: float) -> "PiecewiseLinear":
        return cls.line(t0, t1, v, 0.0)

    @classmethod
    def from_points(cls, ts, vs) -> "PiecewiseLinear":
        ts = np.asarray(ts, dtype=float)
        vs = np.asarray(vs, dtype=float)
        slopes = np.diff(vs) / np.diff(ts)
        return cls(ts, vs, slopes)

    # -- basics --------------------------------------------------------

    @property
    def t_start(self) -> float:
        return float(self.breakpoints[0])

    @property
    def t_end(self) -> float:
        return float(self.breakpoints[-1])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(
            np.searchsorted(self.breakpoints, t, side="right") - 1,
            0,
            len(self.slopes) - 1,
        )
        out = self.values[idx] + self.slopes[idx] * (t - self.breakpoints[idx])
        return float(out) if out.ndim == 0 else out

    def segment_index(self, t: float) -> int:
        return int(
            np.clip(
                np.searchsorted(self.breakpoints, t, side="right") - 1,
                0,
                len(self.slopes) - 1,
            )
        )

    def slope_before(self, t: float) -> float:
        """Slope of the segment seen approaching ``t`` from the left."""
        i = int(
            np.clip(
                np.searchsorted(self.breakpoints, t, side="left") - 1,
                0,
                len(self.slopes) - 1,
            )
        )
        return float(self.slopes[i])

    def shift_values(self, c: float) -> "PiecewiseLinear":
        return PiecewiseLinear(self.breakpoints.copy(), self.values + c, self.slopes.copy())

    def truncated(self, t1: float) -> "PiecewiseLinear":
        """Restriction to ``[t_start, t1]``."""
        if t1 >= self.t_end:
            return self
        if t1 <= self.t_start:
            raise ValueError("empty truncation")
        i = self.segment_index(t1)
        if t1 - self.breakpoints[i] <= _MERGE_EPS:
            # cut coincides with an existing node
            if i == 0:
                raise ValueError("empty truncation")
            return PiecewiseLinear(
                self.breakpoints[: i + 1].copy(),
                self.values[: i + 1].copy(),
                self.slopes[:i].copy(),
            )
        bps = np.append(self.breakpoints[: i + 1], t1)
        vals = np.append(self.values[: i + 1], self(t1))
        return PiecewiseLinear(bps, vals, self.slopes[: i + 1].copy())

    def simplified(self, tol: float = 1e-12) -> "PiecewiseLinear":
        """Drop interior breakpoints whose adjacent slopes coincide."""
        if len(self.slopes) < 2:
            return self
        keep_segments = [0]
        for i in range(1, len(self.slopes)):
            if abs(self.slopes[i] - self.slopes[keep_segments[-1]]) > tol:
                keep_segments.append(i)
        if len(keep_segments) == len(self.slopes):
            return self
        node_idx = keep_segments + [len(self.breakpoints) - 1]
        bps = self.breakpoints[node_idx]
        vals = self.values[node_idx]
        # recompute slopes from the kept nodes to preserve exact continuity
        slopes = np.diff(vals) / np.diff(bps)
        return PiecewiseLinear(bps, vals, slopes)

    # -- pairwise operations --------------------------------------------

    def _merged_grid(self, other: "PiecewiseLinear") -> np.ndarray:
        lo = max(self.t_start, other.t_start)
        hi = min(self.t_end, other.t_end)
        if hi <= lo:
            raise ValueError("domains do not overlap")
        pts = np.concatenate(
            (
                self.breakpoints[(self.breakpoints > lo) & (self.breakpoints < hi)],
                other.breakpoints[(other.breakpoints > lo) & (other.breakpoints < hi)],
                [lo, hi],
            )
        )
        pts = np.unique(pts)
        if len(pts) > 2:
            keep = [pts[0]]
            for t in pts[1:-1]:
                if t - keep[-1] > _MERGE_EPS:
                    keep.append(t)
            if pts[-1] - keep[-1] <= _MERGE_EPS:
                keep[-1] = pts[-1]
            else:
                keep.append(pts[-1])
            pts = np.array(keep)
        return pts

    def first_crossing(
        self,
        other: "PiecewiseLinear",
        after: float,
        tol: float = 1e-12,
    ) -> float | None:
        """Earliest ``t > after`` where ``self`` reaches ``other`` from below.

        The difference must first drop below ``-tol``; tangential contact at
        ``after`` itself (the two functions starting equal) is skipped.
        """
        grid = self._merged_grid(other)
        lo = max(after, grid[0])
        if lo >= grid[-1]:
            return None
        armed = False
        for i in range(len(grid) - 1):
            b = grid[i + 1]
            if b <= lo:
                continue
            a = max(grid[i], lo)
            fa = self(a) - other(a)
            fb = self(b) - other(b)
            if armed and fa < 0.0 and fb >= 0.0:
                t = a + (0.0 - fa) * (b - a) / (fb - fa)
                return min(max(t, a), b)
            if fa < -tol:
                armed = True
                if fb >= 0.0:
                    t = a + (0.0 - fa) * (b - a) / (fb - fa)
                    return min(max(t, a), b)
        return None

    def first_hit(self, level: float, after: float, tol: float = 1e-12) -> float | None:
        """Earliest ``t > after`` where the function rises to ``level``."""
        flat = PiecewiseLinear.constant(self.t_start, self.t_end, level)
        return self.first_crossing(flat, after, tol=tol)

    def first_touch_any(self, level: float, after: float, tol: float = 1e-12) -> float | None:
        """Earliest ``t > after`` with ``self(t) == level``, either direction."""
        lo = max(after, self.t_start)
        if lo >= self.t_end:
            return None
        grid = self.breakpoints
        for i in range(len(grid) - 1):
            b = grid[i + 1]
            if b <= lo:
                continue
            a = max(float(grid[i]), lo)
            fa = self(a) - level
            fb = self(b) - level
            if abs(fa) <= tol and a > after:
                return a
            if fa * fb < 0.0:
                t = a + (0.0 - fa) * (b - a) / (fb - fa)
                return min(max(t, a), b)
            if abs(fb) <= tol and abs(fa) > tol:
                return b
        return None


def _env_pair(f: PiecewiseLinear, g: PiecewiseLinear) -> PiecewiseLinear:
    grid = f._merged_grid(g)
    ts: list[float] = [float(grid[0])]
    vs: list[float] = [max(f(grid[0]), g(grid[0]))]
    for i in range(len(grid) - 1):
        a, b = float(grid[i]), float(grid[i + 1])
        da = f(a) - g(a)
        db = f(b) - g(b)
        if da * db < 0.0:
            t = a + (0.0 - da) * (b - a) / (db - da)
            if ts[-1] + _MERGE_EPS < t < b - _MERGE_EPS:
                ts.append(t)
                vs.append(0.5 * (f(t) + g(t)))
        if b - ts[-1] > _MERGE_EPS:
            ts.append(b)
            vs.append(max(f(b), g(b)))
        else:
            vs[-1] = max(f(b), g(b))
    if len(ts) < 2:
        return PiecewiseLinear.constant(float(grid[0]), float(grid[-1]), vs[0])
    return PiecewiseLinear.from_points(ts, vs).simplified()


def upper_envelope(functions: list[PiecewiseLinear]) -> PiecewiseLinear:
    """Pointwise maximum of piecewise-affine functions, exactly."""
    if not functions:
        raise ValueError("need at least one function")
    env = functions[0]
    for f in functions[1:]:
        env = _env_pair(env, f)
    return env
