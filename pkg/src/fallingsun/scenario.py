"""Scenario assembly: system + initial state + target + solve windows.

Includes the constructive counterexample: an initial state riding the curve
x2 = x1^alpha in the (e_1, e_k) spectral plane, with a target built from two
tangent disks whose first disk is shrunk so the free trajectory meets the
target only at the later tangency time.  That geometry produces a norm
profile shaped like a wave, a nonempty null-equivalence region and a
disconnected graph region.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .minnorm import minimal_norm
from .options import SolverOptions, DEFAULT_OPTIONS
from .spectral import SpectralSystem, build_system, free_flow
from . import targets as tg

__all__ = [
    "Scenario",
    "CounterexampleSpec",
    "ScenarioError",
    "TuneResult",
    "build_counterexample",
    "tune_shrink",
    "load_scenario",
    "scenario_from_dict",
    "default_ball_scenario",
    "default_offcenter_scenario",
    "default_counterexample_spec",
]


class ScenarioError(ValueError):
    """Scenario configuration violates a structural requirement."""


@dataclass(frozen=True)
class Scenario:
    system: SpectralSystem
    y0: np.ndarray
    target: tg.Ball | tg.HullOfDisksProduct
    t_min: float
    t_max: float
    M_max: float
    opts: SolverOptions = DEFAULT_OPTIONS
    provenance: tuple[str, ...] = ()
    counterexample: "CounterexampleSpec | None" = None
    landmarks: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "y0", np.asarray(self.y0, dtype=float))
        self.y0.setflags(write=False)

    def to_dict(self) -> dict:
        d = {
            "system": self.system.to_dict(),
            "y0": [float(x) for x in self.y0],
            "target": self.target.to_dict(),
            "windows": {"t_min": float(self.t_min), "t_max": float(self.t_max),
                        "m_max": float(self.M_max)},
            "solver": self.opts.to_dict(),
            "provenance": list(self.provenance),
        }
        if self.counterexample is not None:
            d["counterexample"] = self.counterexample.to_dict()
        if self.landmarks is not None:
            d["landmarks"] = {k: (float(v) if np.isscalar(v) else v)
                              for k, v in self.landmarks.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def digest(self) -> str:
        core = self.to_dict()
        core.pop("provenance", None)
        return hashlib.sha256(
            json.dumps(core, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class CounterexampleSpec:
    """Parameters of the curve/tangent-disk construction."""

    k: int = 2                 # second plane mode; curve exponent alpha = lambda_k/lambda_1
    a0: float = 2.0            # initial abscissa (must stay outside the hull)
    a1: float = 1.2            # first tangency abscissa
    a2: float = 0.6            # second tangency abscissa
    theta1: float = 0.4        # radius fraction of the first tangent disk
    theta2: float = 0.4
    shrink: float = 0.9        # first-disk shrink factor alpha0 in [0, 1)
    complement_radius: float = 1.0

    def __post_init__(self):
        if self.k < 2:
            raise ScenarioError(f"need k >= 2 so the curve exponent is >= 2, got k={self.k}")
        if not (self.a0 > self.a1 > self.a2 > 0):
            raise ScenarioError(f"need a0 > a1 > a2 > 0, got ({self.a0}, {self.a1}, {self.a2})")
        if not (0 <= self.shrink < 1):
            raise ScenarioError(f"shrink factor must be in [0, 1), got {self.shrink}")
        if self.complement_radius <= 0:
            raise ScenarioError("complement radius must be positive")

    @property
    def alpha(self) -> float:
        return float(self.k ** 2)   # lambda_k / lambda_1 with lambda_j = j^2

    def to_dict(self) -> dict:
        return {"k": self.k, "a0": self.a0, "a1": self.a1, "a2": self.a2,
                "theta1": self.theta1, "theta2": self.theta2,
                "shrink": self.shrink, "complement_radius": self.complement_radius}

    @classmethod
    def from_dict(cls, d: dict) -> "CounterexampleSpec":
        return cls(**d)


def _validate_scenario(sc: Scenario) -> Scenario:
    if isinstance(sc.target, tg.Point) or not sc.target.has_interior():
        raise ScenarioError("scenario target must have nonempty interior")
    if tg.contains(sc.target, sc.y0, sc.opts.membership_tol):
        raise ScenarioError("initial state lies inside the target; "
                            "the problems would be trivial")
    if not (0 < sc.t_min < sc.t_max):
        raise ScenarioError(f"bad time window ({sc.t_min}, {sc.t_max})")
    return sc


def build_counterexample(spec: CounterexampleSpec, J: int = 8,
                         opts: SolverOptions = DEFAULT_OPTIONS,
                         t_min: float | None = None,
                         t_max: float | None = None) -> tuple[Scenario, dict]:
    """Construct the wave scenario and its landmark times.

    Free flow of y0 = a0 e_1 + a0^alpha e_k stays on the curve; with the
    first tangent disk shrunk by the factor spec.shrink, the trajectory
    meets the target exactly once, at T2 = ln(a0/a2) / lambda_1.
    """
    if J < spec.k:
        raise ScenarioError(f"truncation J={J} must include plane mode k={spec.k}")
    alpha = spec.alpha
    log: list[str] = [f"curve exponent alpha = k^2 = {alpha:g}"]

    disk1 = tg.tangent_disk(alpha, spec.a1, spec.theta1)
    disk2 = tg.tangent_disk(alpha, spec.a2, spec.theta2)
    log.append(f"tangent disk 1: center {disk1.center.tolist()}, radius {disk1.radius!r}")
    log.append(f"tangent disk 2: center {disk2.center.tolist()}, radius {disk2.radius!r}")

    gap = float(np.linalg.norm(disk1.center - disk2.center)) - disk1.radius - disk2.radius
    if gap <= 0:
        raise tg.GeometryError(
            f"tangent disks overlap (gap {gap:g}); pick better-separated abscissas "
            f"or smaller radius fractions")
    if not tg.hull_curve_intersection_check(disk1, disk2, alpha,
                                            opts.hull_check_tol, opts.hull_check_samples):
        raise tg.GeometryError(
            "the hull of the tangent disks meets the curve away from the tangency "
            "points; pick better-separated abscissas or smaller radius fractions")
    log.append(f"disk gap {gap!r}; hull-curve check passed at tol {opts.hull_check_tol!r}")

    p0 = tg.curve_point(alpha, spec.a0)
    hull = tg._Hull2(disk1, disk2)
    d_p0 = float(np.linalg.norm(p0 - hull.project(p0[None])[0]))
    if d_p0 <= opts.hull_check_tol:
        raise tg.GeometryError(f"starting point at abscissa {spec.a0} lies in the hull")
    log.append(f"starting point clearance from hull: {d_p0!r}")

    shrunk = tg.Disk2(disk1.center, spec.shrink * disk1.radius)
    target = tg.HullOfDisksProduct((1, spec.k), shrunk, disk2, spec.complement_radius)

    y0 = np.zeros(J)
    y0[0] = spec.a0
    y0[spec.k - 1] = spec.a0 ** alpha
    lam1 = 1.0
    T1 = math.log(spec.a0 / spec.a1) / lam1
    T2 = math.log(spec.a0 / spec.a2) / lam1
    log.append(f"landmarks T1 = {T1!r}, T2 = {T2!r}")

    sys = build_system(J, (0.3, 2.8))
    # trajectory identity: modes (1, k) of the free flow stay on the curve
    for t in np.linspace(0.0, T2, 33):
        st = free_flow(sys, y0, t)
        if abs(st[spec.k - 1] - st[0] ** alpha) > 1e-10 * max(1.0, st[spec.k - 1]):
            raise tg.GeometryError("free trajectory left the curve; eigenvalue wiring is wrong")
    # the trajectory meets the shrunk target only at T2
    if not tg.contains(target, free_flow(sys, y0, T2), opts.membership_tol):
        raise tg.GeometryError("free state at T2 missed the target")
    if spec.shrink < 1 and tg.contains(target, free_flow(sys, y0, T1), opts.membership_tol):
        raise tg.GeometryError("free state at T1 still inside the shrunk target")

    landmarks = {
        "alpha": alpha, "T1": T1, "T2": T2,
        "p0": p0.tolist(),
        "p1": tg.curve_point(alpha, spec.a1).tolist(),
        "p2": tg.curve_point(alpha, spec.a2).tolist(),
        "disk1_radius": disk1.radius, "disk2_radius": disk2.radius,
        "shrunk_radius": shrunk.radius,
    }
    t_lo = t_min if t_min is not None else round(T1 / 8, 6)
    t_hi = t_max if t_max is not None else round(1.2 * T2, 6)
    sc = Scenario(sys, y0, target, t_lo, t_hi, M_max=50.0, opts=opts,
                  provenance=tuple(log), counterexample=spec, landmarks=landmarks)
    return _validate_scenario(sc), landmarks


@dataclass
class TuneResult:
    shrink: float
    landmarks: dict                 # tau1, T1, tau2, T2 and their norm values
    margins: dict
    candidates: list[dict]          # per-candidate measurements


def tune_shrink(spec: CounterexampleSpec, J: int = 8,
                opts: SolverOptions = DEFAULT_OPTIONS) -> tuple[Scenario, TuneResult]:
    """Pick the first shrink factor (in decreasing order) whose norm profile
    exhibits the wave ordering 0 = N(T2) <= N(T1) < N(tau2) < inf_(0,tau1] N
    with the configured margins."""
    candidates = [a for a in opts.shrink_candidates if 0 <= a < 1]
    tried: list[dict] = []
    for a0 in candidates:
        cand_spec = CounterexampleSpec(**{**spec.to_dict(), "shrink": a0})
        sc, lm = build_counterexample(cand_spec, J, opts)
        T1, T2 = lm["T1"], lm["T2"]
        tau2 = 0.5 * (T1 + T2)
        n_T1 = minimal_norm(sc.system, sc.y0, sc.target, T1, opts).value
        n_T2 = minimal_norm(sc.system, sc.y0, sc.target, T2, opts).value
        n_tau2 = minimal_norm(sc.system, sc.y0, sc.target, tau2, opts).value
        margin = opts.wave_margin * n_tau2
        record = {"shrink": a0, "N_T1": n_T1, "N_T2": n_T2, "N_tau2": n_tau2}
        if n_T2 > opts.tol_N or n_tau2 <= 0 or (n_tau2 - n_T1) < margin:
            record["rejected"] = "wave ordering at T1/tau2 failed"
            tried.append(record)
            continue
        # backward scan for tau1: largest grid point below T1 whose early
        # norms all clear N(tau2) by the margin
        tau1, early = None, None
        for frac in (0.9, 0.8, 0.7, 0.6, 0.5):
            t_cand = frac * T1
            probes = [t_cand * 2.0 ** (-j) for j in range(4)]
            vals = [minimal_norm(sc.system, sc.y0, sc.target, t, opts).value
                    for t in probes]
            if min(vals) - n_tau2 >= margin:
                tau1, early = t_cand, dict(zip(probes, vals))
                break
        if tau1 is None:
            record["rejected"] = "no tau1 with early norms above N(tau2)"
            tried.append(record)
            continue
        record["tau1"] = tau1
        tried.append(record)
        lm_full = {"tau1": tau1, "T1": T1, "tau2": tau2, "T2": T2,
                   "N_tau1_probes": early, "N_T1": n_T1, "N_tau2": n_tau2, "N_T2": n_T2}
        margins = {"wave_margin": margin,
                   "gap_T1_tau2": n_tau2 - n_T1,
                   "gap_tau2_early": min(early.values()) - n_tau2}
        sc = Scenario(sc.system, sc.y0, sc.target, sc.t_min, sc.t_max, sc.M_max,
                      sc.opts, sc.provenance + (f"tuned shrink = {a0!r}",),
                      cand_spec, {**lm, **lm_full})
        return sc, TuneResult(a0, lm_full, margins, tried)
    raise ScenarioError(
        "no shrink candidate produced the wave ordering; measured orderings: "
        + json.dumps(tried))


# ---------------------------------------------------------------------------
# configuration loading
# ---------------------------------------------------------------------------

def scenario_from_dict(cfg: dict) -> Scenario:
    try:
        solver = SolverOptions.from_dict(cfg.get("solver", {}))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"solver: {exc}") from None

    if "counterexample" in cfg:
        try:
            spec = CounterexampleSpec.from_dict(cfg["counterexample"])
        except TypeError as exc:
            raise ScenarioError(f"counterexample: {exc}") from None
        J = int(cfg.get("system", {}).get("n_modes", 8))
        win = cfg.get("windows", {})
        sc, _ = build_counterexample(spec, J, solver,
                                     t_min=win.get("t_min"), t_max=win.get("t_max"))
        return sc

    for key in ("system", "y0", "target", "windows"):
        if key not in cfg:
            raise ScenarioError(f"missing scenario field: {key!r}")
    sys_cfg = cfg["system"]
    if "n_modes" not in sys_cfg or "omega" not in sys_cfg:
        raise ScenarioError("system needs 'n_modes' and 'omega': [l, r]")
    system = build_system(int(sys_cfg["n_modes"]), tuple(sys_cfg["omega"]))
    y0 = np.zeros(system.n_modes)
    raw = np.asarray(cfg["y0"], dtype=float)
    if len(raw) > system.n_modes:
        raise ScenarioError(f"y0 has {len(raw)} modes, system has {system.n_modes}")
    y0[:len(raw)] = raw
    target = tg.target_from_dict(cfg["target"])
    win = cfg["windows"]
    for key in ("t_min", "t_max"):
        if key not in win:
            raise ScenarioError(f"windows needs {key!r}")
    sc = Scenario(system, y0, target, float(win["t_min"]), float(win["t_max"]),
                  float(win.get("m_max", 50.0)), solver,
                  provenance=("loaded from configuration",))
    return _validate_scenario(sc)


def load_scenario(path_or_text) -> Scenario:
    """Load a scenario from a JSON file path or a JSON string."""
    text = None
    import os
    if isinstance(path_or_text, (str, os.PathLike)) and os.path.exists(path_or_text):
        with open(path_or_text, encoding="utf-8") as fh:
            text = fh.read()
    elif isinstance(path_or_text, str):
        text = path_or_text
    else:
        raise ScenarioError(f"cannot load scenario from {path_or_text!r}")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from None
    return scenario_from_dict(cfg)


# ---------------------------------------------------------------------------
# stock scenarios used by the CLI and the acceptance suite
# ---------------------------------------------------------------------------

def default_ball_scenario(J: int = 8, opts: SolverOptions = DEFAULT_OPTIONS) -> Scenario:
    """Origin-centered ball: the monotone regime, with N hitting zero once
    the free flow decays into the ball."""
    sys = build_system(J, (0.3, 2.8))
    y0 = np.zeros(J)
    y0[:3] = (3.0, 1.0, 0.5)
    target = tg.Ball(np.zeros(J), 0.5)
    return _validate_scenario(Scenario(
        sys, y0, target, 0.1, 2.0, M_max=50.0, opts=opts,
        provenance=("stock scenario: origin ball",)))


def default_offcenter_scenario(J: int = 8, opts: SolverOptions = DEFAULT_OPTIONS) -> Scenario:
    """Off-center ball: N stays positive over the window."""
    sys = build_system(J, (0.3, 2.8))
    y0 = np.zeros(J)
    y0[:2] = (3.0, 1.0)
    center = np.zeros(J)
    center[:3] = (1.5, -0.6, 0.3)
    target = tg.Ball(center, 0.4)
    return _validate_scenario(Scenario(
        sys, y0, target, 0.1, 2.0, M_max=50.0, opts=opts,
        provenance=("stock scenario: off-center ball",)))


def default_counterexample_spec() -> CounterexampleSpec:
    return CounterexampleSpec()
