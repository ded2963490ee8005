"""Minimal norm profile N(t) and the minimal time T(M) = inf{t : N(t) <= M}.

The profile is sampled on a grid with adaptive midpoint refinement where N
jumps; crossings of a level M are then located by bisection with fresh
solves.  Levels below the profile minimum over the window get an
over-window +infinity verdict, matching the convention that an empty level
set has infimum +infinity.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .minnorm import UnreachableTargetError, minimal_norm
from .options import SolverOptions, DEFAULT_OPTIONS
from . import targets as tg

__all__ = [
    "NormProfile",
    "MinTimeResult",
    "BlowupReport",
    "ProfileError",
    "NoisyCrossingError",
    "sample_profile",
    "minimal_time",
    "blowup_check",
]


class ProfileError(RuntimeError):
    """Too many profile nodes failed to solve."""


class NoisyCrossingError(RuntimeError):
    """A crossing bracket lost its sign twice; solver noise too large."""


@dataclass
class NormProfile:
    grid: np.ndarray                 # strictly increasing times
    values: np.ndarray               # N(t_i); NaN on invalid nodes
    valid: np.ndarray                # bool per node
    refined: np.ndarray              # bool, True for nodes inserted by refinement
    refined_intervals: list[tuple[float, float]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def window(self) -> tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])

    def valid_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        return self.grid[self.valid], self.values[self.valid]

    def to_csv(self) -> str:
        lines = ["t,N,refined,valid"]
        for t, v, r, ok in zip(self.grid, self.values, self.refined, self.valid):
            lines.append(f"{float(t)!r},{float(v)!r},{int(r)},{int(ok)}")
        return "\n".join(lines) + "\n"


@dataclass
class MinTimeResult:
    level: float
    time: float                       # math.inf marks "no crossing over the window"
    crossing_bracket: tuple[float, float] | None
    certificate: dict = field(default_factory=dict)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.time)


@dataclass
class BlowupReport:
    passed: bool
    times: list[float]
    values: list[float]
    threshold: float
    budget_exceeded: bool = False

    def __bool__(self) -> bool:
        return self.passed


def _solve_value(sys, y0, Q, t, opts):
    try:
        return minimal_norm(sys, y0, Q, t, opts).value, True
    except (UnreachableTargetError, FloatingPointError) as exc:
        return float("nan"), False


def sample_profile(sys, y0, Q, t_min: float, t_max: float, m: int,
                   opts: SolverOptions = DEFAULT_OPTIONS,
                   workers: int = 1) -> NormProfile:
    """Sample N on [t_min, t_max] with midpoint refinement on large jumps."""
    if not (0 < t_min < t_max):
        raise ValueError(f"need 0 < t_min < t_max, got ({t_min}, {t_max})")
    if m < 2:
        raise ValueError(f"need at least 2 grid points, got {m}")
    grid = list(np.linspace(t_min, t_max, m))

    def solve_many(ts):
        if workers > 1 and len(ts) > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                return list(ex.map(lambda t: _solve_value(sys, y0, Q, t, opts), ts))
        return [_solve_value(sys, y0, Q, t, opts) for t in ts]

    results = solve_many(grid)
    values = [r[0] for r in results]
    valid = [r[1] for r in results]
    refined_flag = [False] * m
    intervals: list[tuple[float, float]] = []

    max_nodes = 6 * m
    for _ in range(opts.max_depth):
        vals = np.array(values)
        ok = np.array(valid)
        ts = np.array(grid)
        both = ok[:-1] & ok[1:]
        dN = np.abs(np.diff(vals))
        jump = opts.refine_jump
        if jump is None:
            nz = dN[both & np.isfinite(dN)]
            jump = 0.5 * float(np.median(nz)) if len(nz) else np.inf
        wide = (ts[1:] - ts[:-1]) > 2 * opts.time_tol
        where = np.nonzero(both & wide & (dN > jump) & (dN > 1e-12))[0]
        if len(where) == 0 or len(grid) >= max_nodes:
            break
        mids = [0.5 * (grid[i] + grid[i + 1]) for i in where]
        intervals.extend((grid[i], grid[i + 1]) for i in where)
        new_results = solve_many(mids)
        for t, (v, ok_flag) in sorted(zip(mids, new_results), reverse=True):
            # insert keeping the grid sorted
            idx = int(np.searchsorted(grid, t))
            grid.insert(idx, t)
            values.insert(idx, v)
            valid.insert(idx, ok_flag)
            refined_flag.insert(idx, True)

    valid_arr = np.array(valid)
    if (~valid_arr).mean() >= opts.max_invalid_fraction:
        raise ProfileError(
            f"{(~valid_arr).sum()}/{len(valid_arr)} profile nodes failed to solve")
    return NormProfile(np.array(grid), np.array(values), valid_arr,
                       np.array(refined_flag), intervals,
                       meta={"m": m, "t_min": t_min, "t_max": t_max,
                             "n_slices": opts.n_slices})


def _crossing_slack(M: float, opts: SolverOptions) -> float:
    # the solver resolves N only to its own bisection width
    return opts.tol_bisect * max(1.0, M) + opts.tol_terminal


def minimal_time(sys, y0, Q, M: float, profile: NormProfile,
                 opts: SolverOptions = DEFAULT_OPTIONS) -> MinTimeResult:
    """First time the norm profile dips to level M, refined by bisection.

    Returns an over-window +infinity marker when no profile sample reaches
    the level.  The certificate records N at the crossing, whose agreement
    with M is the consistency identity for the minimal time function.
    """
    if M < 0:
        raise ValueError(f"level must be >= 0, got {M}")
    slack = _crossing_slack(M, opts)
    ts, vals = profile.valid_nodes()
    below = np.nonzero(vals <= M + slack)[0]
    if len(below) == 0:
        return MinTimeResult(M, math.inf, None,
                             {"over_window": True, "window": profile.window()})
    i = int(below[0])
    fresh = {}

    def N_of(t):
        if t not in fresh:
            fresh[t] = minimal_norm(sys, y0, Q, t, opts).value
        return fresh[t]

    if i > 0:
        a, b = float(ts[i - 1]), float(ts[i])
    else:
        # level reached already at the window start; scan backward for a bracket
        b = float(ts[0])
        a = None
        t_try = b / 2
        for _ in range(10):
            if N_of(t_try) > M + slack:
                a = t_try
                break
            t_try /= 2
        if a is None:
            return MinTimeResult(M, b, (0.0, b),
                                 {"window_start": True, "N_at_time": N_of(b),
                                  "residual": abs(N_of(b) - M)})

    # guard the bracket against solver noise, widening once per side
    if N_of(a) <= M + slack:
        idx = max(i - 2, 0)
        a2 = float(ts[idx]) if idx < i - 1 else a / 2
        if a2 >= a or N_of(a2) <= M + slack:
            raise NoisyCrossingError(f"no sign at level {M}: N({a}) <= {M} after widening")
        a = a2
    if N_of(b) > M + slack:
        j = i + 1
        while j < len(ts) and N_of(float(ts[j])) > M + slack:
            j += 1
        if j >= len(ts):
            raise NoisyCrossingError(f"crossing at level {M} vanished on re-solve")
        b = float(ts[j])

    while (b - a) > opts.time_tol:
        mid = 0.5 * (a + b)
        if N_of(mid) <= M + slack:
            b = mid
        else:
            a = mid
    n_at = N_of(b)
    return MinTimeResult(M, b, (a, b),
                         {"N_at_time": n_at, "residual": abs(n_at - M),
                          "N_left": N_of(a), "left_exceeds": N_of(a) > M})


def blowup_check(sys, y0, Q, opts: SolverOptions = DEFAULT_OPTIONS) -> BlowupReport:
    """Geometric-in-time probe of N(t) as t -> 0+.

    Passes when the values are eventually increasing and the last exceeds
    the threshold factor over N(t0); a solve that exhausts its control
    budget counts as exceeding (unreachable-at-budget is the numerical face
    of the blow-up).
    """
    y0 = np.asarray(y0, dtype=float)
    if tg.contains(Q, y0, opts.membership_tol):
        raise ValueError("blow-up check requires the initial state outside the target")
    t0 = opts.blowup_t0
    times, values = [], []
    budget_exceeded = False
    for j in range(opts.blowup_levels + 1):
        t = t0 * 2.0 ** (-j)
        times.append(t)
        try:
            values.append(minimal_norm(sys, y0, Q, t, opts).value)
        except UnreachableTargetError:
            values.append(math.inf)
            budget_exceeded = True
            break
    threshold = opts.blowup_threshold * max(values[0], opts.tol_N)
    if budget_exceeded:
        return BlowupReport(True, times, values, threshold, True)
    tail = values[-min(3, len(values)):]
    increasing = all(b > a for a, b in zip(tail, tail[1:]))
    passed = increasing and values[-1] >= threshold
    return BlowupReport(passed, times, values, threshold, False)
