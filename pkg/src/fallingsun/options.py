"""Solver option bundle shared by all modules."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and budgets for the norm/time solvers.

    Every tolerance here is deliberately one to two orders of magnitude
    below the corresponding acceptance threshold, so that classification
    noise stays well under reported quantities.
    """

    # spatial truncation / time slicing
    n_slices: int = 64

    # feasibility program (projected gradient + dual certificate)
    tol_terminal: float = 1e-6      # absolute distance in state space
    max_iters: int = 4000           # FISTA iteration cap per feasibility solve
    dual_iters: int = 400           # supergradient ascent iterations for the certificate

    # minimal-norm bisection
    tol_bisect: float = 1e-4        # relative bracket width on the norm level
    m_cap: float = 1e12             # doubling cap before "unreachable" is declared

    # bang-bang extraction
    delta_eta: float = 0.02         # relative backoff below N when extracting eta
    bb_retries: int = 4             # eta-degenerate retries (doubling delta_eta)

    # minimal-time machinery
    time_tol: float = 1e-3          # bisection width on crossing times
    refine_jump: float | None = None  # None -> 0.5 * median(|dN|) per profile
    max_depth: int = 6              # profile refinement rounds
    max_invalid_fraction: float = 0.2

    # blow-up diagnostics.  In a fixed truncation N(t) grows only
    # algebraically as t -> 0, so the probe starts where N is already small
    # (near the feasibility boundary); otherwise the threshold factor over
    # N(t0) is unreachable at any truncation.
    blowup_t0: float = 1.5
    blowup_levels: int = 5
    blowup_threshold: float = 100.0   # factor over N(t0)

    # targets / geometry
    membership_tol: float = 1e-8
    hull_check_tol: float = 1e-6
    hull_check_samples: int = 10_000

    # classification
    tol_M: float = 1e-6             # "M = 0" band for the null-control region
    tol_N: float = 1e-6             # "N(T) = 0" band
    rel_tol_N: float = 0.02         # relative agreement on norm levels
    spotcheck_tol: float = 0.05

    # counterexample tuning
    wave_margin: float = 0.05       # strict-gap margin, relative to N(tau2)
    shrink_candidates: tuple[float, ...] = (
        0.98, 0.96, 0.94, 0.92, 0.90, 0.85, 0.80, 0.70, 0.60, 0.50)

    # truncation self-audit
    convergence_rel: float = 1e-2

    def replace(self, **kwargs) -> "SolverOptions":
        return dataclasses.replace(self, **kwargs)

    def strict(self) -> "SolverOptions":
        """Halved tolerances, used by the CLI --strict flag."""
        return self.replace(
            tol_terminal=self.tol_terminal / 2,
            tol_bisect=self.tol_bisect / 2,
            time_tol=self.time_tol / 2,
            membership_tol=self.membership_tol / 2,
            hull_check_tol=self.hull_check_tol / 2,
            tol_M=self.tol_M / 2,
            tol_N=self.tol_N / 2,
            rel_tol_N=self.rel_tol_N / 2,
        )

    @property
    def bb_terminal_tol(self) -> float:
        return 10.0 * self.tol_terminal

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["shrink_candidates"] = list(self.shrink_candidates)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolverOptions":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown solver options: {sorted(unknown)}")
        if "shrink_candidates" in d:
            d = dict(d, shrink_candidates=tuple(d["shrink_candidates"]))
        return cls(**d)


DEFAULT_OPTIONS = SolverOptions()
