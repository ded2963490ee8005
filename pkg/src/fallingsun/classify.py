"""Classification of (M, T) pairs into the three equivalence regions.

A pair is EquivalentNull when both the bound and the norm vanish (the free
trajectory already reaches the target at T), EquivalentNontrivial when T
agrees with the minimal time at level M, and NotEquivalent otherwise.  The
verdict always records both witnesses so the failed clause is auditable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .minnorm import minimal_norm
from .mintime import MinTimeResult, NormProfile, minimal_time
from .options import SolverOptions, DEFAULT_OPTIONS
from .spectral import terminal_map

__all__ = [
    "Region",
    "RegionVerdict",
    "RegionMap",
    "SpotcheckReport",
    "classify_pair",
    "region_map",
    "equivalence_spotcheck",
]


class Region(str, Enum):
    EQUIVALENT_NONTRIVIAL = "EquivalentNontrivial"
    EQUIVALENT_NULL = "EquivalentNull"
    NOT_EQUIVALENT = "NotEquivalent"


@dataclass
class RegionVerdict:
    M: float
    T: float
    region: Region
    witnesses: dict = field(default_factory=dict)


@dataclass
class RegionMap:
    M_grid: np.ndarray
    T_grid: np.ndarray
    cells: list[RegionVerdict]
    counts: dict

    def to_csv(self) -> str:
        lines = ["M,T,region,nT_residual,nN_residual"]
        for c in self.cells:
            wt = c.witnesses.get("time_residual")
            wn = c.witnesses.get("norm_residual")
            lines.append(f"{float(c.M)!r},{float(c.T)!r},{c.region.value},"
                         f"{'' if wt is None else repr(float(wt))},"
                         f"{'' if wn is None else repr(float(wn))}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {"counts": dict(self.counts),
                "M_grid": [float(x) for x in self.M_grid],
                "T_grid": [float(x) for x in self.T_grid]}


@dataclass
class SpotcheckReport:
    M: float
    T: float
    passed: bool
    norm_residual: float
    terminal_distance: float
    null_control: bool = False


def classify_pair(sys, y0, Q, M: float, T: float, profile: NormProfile,
                  opts: SolverOptions = DEFAULT_OPTIONS,
                  time_result: MinTimeResult | None = None) -> RegionVerdict:
    """Verdict for one (M, T) pair, with N(T) and T(M) as witnesses."""
    if M < 0 or T <= 0:
        raise ValueError(f"need M >= 0 and T > 0, got ({M}, {T})")
    n_at_T = minimal_norm(sys, y0, Q, T, opts).value
    if M <= opts.tol_M and n_at_T <= opts.tol_N:
        return RegionVerdict(M, T, Region.EQUIVALENT_NULL,
                             {"N_of_T": n_at_T, "tol_M": opts.tol_M, "tol_N": opts.tol_N})
    tm = time_result if time_result is not None else minimal_time(sys, y0, Q, M, profile, opts)
    w = {"N_of_T": n_at_T, "T_of_M": tm.time, "time_tol": opts.time_tol}
    if not tm.finite:
        w["failed_clause"] = "unbounded-time"
        a, b = profile.window()
        if T < a or T > b:
            w["T_outside_window"] = True
        return RegionVerdict(M, T, Region.NOT_EQUIVALENT, w)
    w["time_residual"] = abs(T - tm.time)
    w["norm_residual"] = abs(n_at_T - M) / max(1.0, M)
    if abs(T - tm.time) <= opts.time_tol:
        return RegionVerdict(M, T, Region.EQUIVALENT_NONTRIVIAL, w)
    w["failed_clause"] = ("T_before_crossing" if T < tm.time else "T_past_crossing")
    return RegionVerdict(M, T, Region.NOT_EQUIVALENT, w)


def region_map(sys, y0, Q, M_grid, T_grid, profile: NormProfile,
               opts: SolverOptions = DEFAULT_OPTIONS) -> RegionMap:
    """classify_pair over the M x T product grid, sharing one profile.

    Per-cell failures never abort the sweep; a failed cell is recorded as
    NotEquivalent with an error flag.
    """
    M_grid = np.asarray(M_grid, dtype=float)
    T_grid = np.asarray(T_grid, dtype=float)
    if len(M_grid) == 0 or len(T_grid) == 0 or (T_grid <= 0).any() or (M_grid < 0).any():
        raise ValueError("grids must be nonempty with T > 0 and M >= 0")
    cells: list[RegionVerdict] = []
    time_cache: dict[float, MinTimeResult] = {}
    norm_cache: dict[float, float] = {}
    for M in M_grid:
        M = float(M)
        if M not in time_cache:
            try:
                time_cache[M] = minimal_time(sys, y0, Q, M, profile, opts)
            except Exception as exc:   # per-cell flag, sweep continues
                time_cache[M] = exc
        for T in T_grid:
            T = float(T)
            try:
                if T not in norm_cache:
                    norm_cache[T] = minimal_norm(sys, y0, Q, T, opts).value
                tm = time_cache[M]
                if isinstance(tm, Exception):
                    raise tm
                cells.append(classify_pair(sys, y0, Q, M, T, profile, opts,
                                           time_result=tm))
            except Exception as exc:
                cells.append(RegionVerdict(M, T, Region.NOT_EQUIVALENT,
                                           {"error": str(exc)}))
    counts: dict[str, int] = {}
    for c in cells:
        counts[c.region.value] = counts.get(c.region.value, 0) + 1
    return RegionMap(M_grid, T_grid, cells, counts)


def equivalence_spotcheck(sys, y0, Q, M: float, T: float,
                          opts: SolverOptions = DEFAULT_OPTIONS,
                          verdict: RegionVerdict | None = None) -> SpotcheckReport:
    """Cross-check an equivalent pair: solving at horizon T recovers level M
    and the zero-extended control lands in the target at T."""
    from . import targets as tg
    if verdict is not None and verdict.region is Region.NOT_EQUIVALENT:
        raise ValueError("spotcheck requires an equivalent pair")
    sol = minimal_norm(sys, y0, Q, T, opts)
    if M <= opts.tol_M and sol.value <= opts.tol_N:
        # null-control pair: the free trajectory itself reaches Q at T
        dist = tg.distance(Q, terminal_map(sys, y0, sol.control))
        return SpotcheckReport(M, T, dist <= opts.tol_terminal, 0.0, dist, True)
    norm_residual = abs(sol.value - M) / max(1.0, M)
    dist = tg.distance(Q, terminal_map(sys, y0, sol.control))
    passed = norm_residual <= opts.spotcheck_tol and dist <= opts.bb_terminal_tol
    return SpotcheckReport(M, T, passed, norm_residual, dist)
