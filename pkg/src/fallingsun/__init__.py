"""Minimal-time / minimal-norm control duality for the 1-D heat equation.

The minimal norm function N(t) (smallest sup-in-time control bound reaching
the target at time t) and the minimal time function T(M) (first time the
target is reachable with bound M) are linked by T(M) = inf{t : N(t) <= M}.
This package computes both on a spectral truncation, classifies (M, T)
pairs by whether the two problems are equivalent, and constructs a convex
target for which N is non-monotone and the graph region disconnects.
"""

from .options import SolverOptions, DEFAULT_OPTIONS
from .spectral import (SpectralSystem, PiecewiseControl, build_system,
                       free_flow, terminal_map, slice_weights)
from .targets import (Ball, Point, HullOfDisksProduct, Disk2, GeometryError,
                      contains, project, distance, tangent_disk,
                      hull_curve_intersection_check)
from .minnorm import (NormSolution, FeasibilityResult, UnreachableTargetError,
                      BangBangError, feasibility_distance, minimal_norm,
                      bangbang_extract, attach_bangbang)
from .mintime import (NormProfile, MinTimeResult, BlowupReport, ProfileError,
                      NoisyCrossingError, sample_profile, minimal_time,
                      blowup_check)
from .classify import (Region, RegionVerdict, RegionMap, SpotcheckReport,
                       classify_pair, region_map, equivalence_spotcheck)
from .scenario import (Scenario, CounterexampleSpec, ScenarioError, TuneResult,
                       build_counterexample, tune_shrink, load_scenario,
                       default_ball_scenario, default_offcenter_scenario,
                       default_counterexample_spec)

__version__ = "0.1.0"
