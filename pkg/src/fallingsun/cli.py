"""Command-line interface: run scenarios, emit CSV/JSON artifacts.

Commands: norm-profile, min-time, classify, counterexample, selftest.
Every run writes a machine-readable report with an invariant-check table;
the exit code is 0 iff all required checks pass.  FS_THREADS caps the
parallelism used for profile sampling.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys as _sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import classify as cls
from . import mintime as mt
from . import scenario as sct
from . import targets as tg
from .minnorm import attach_bangbang, minimal_norm
from .options import DEFAULT_OPTIONS, SolverOptions
from .spectral import build_system, free_flow, terminal_map, PiecewiseControl

__all__ = ["main", "RunReport", "verify_counterexample"]


@dataclass
class RunReport:
    command: str
    scenario_digest: str
    outputs: list[str] = field(default_factory=list)
    checks: list[dict] = field(default_factory=list)
    wall_time_s: float = 0.0

    def add(self, name: str, passed: bool, detail: str = "") -> bool:
        self.checks.append({"name": name, "passed": bool(passed), "detail": detail})
        return passed

    @property
    def exit_code(self) -> int:
        return 0 if all(c["passed"] for c in self.checks) else 1

    def to_dict(self) -> dict:
        return {"command": self.command, "scenario_digest": self.scenario_digest,
                "outputs": self.outputs, "checks": self.checks,
                "wall_time_s": self.wall_time_s, "exit_code": self.exit_code}

    def render(self) -> str:
        lines = [f"== {self.command} (scenario {self.scenario_digest}) =="]
        for c in self.checks:
            mark = "PASS" if c["passed"] else "FAIL"
            detail = f"  [{c['detail']}]" if c["detail"] else ""
            lines.append(f" {mark:4s}  {c['name']}{detail}")
        lines.append(f" wall time {self.wall_time_s:.1f}s; outputs: "
                     + (", ".join(self.outputs) if self.outputs else "none"))
        return "\n".join(lines)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("FS_THREADS", "1")))
    except ValueError:
        return 1


def _write(path: str, text: str, report: RunReport) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    report.outputs.append(path)


def _opts_from_args(args, base: SolverOptions = DEFAULT_OPTIONS) -> SolverOptions:
    over = {}
    for flag in ("tol_terminal", "tol_bisect", "time_tol", "n_slices", "wave_margin"):
        v = getattr(args, flag, None)
        if v is not None:
            over[flag] = v
    opts = base.replace(**over) if over else base
    if getattr(args, "strict", False):
        opts = opts.strict()
    return opts


def _load_scenario(args, opts: SolverOptions) -> sct.Scenario:
    if getattr(args, "scenario", None):
        sc = sct.load_scenario(args.scenario)
        return sct.Scenario(sc.system, sc.y0, sc.target, sc.t_min, sc.t_max,
                            sc.M_max, opts, sc.provenance, sc.counterexample,
                            sc.landmarks)
    stock = getattr(args, "stock", None) or "ball"
    if stock == "ball":
        return sct.default_ball_scenario(opts=opts)
    if stock == "offball":
        return sct.default_offcenter_scenario(opts=opts)
    if stock == "counterexample":
        sc, _ = sct.build_counterexample(sct.default_counterexample_spec(), opts=opts)
        return sc
    raise sct.ScenarioError(f"unknown stock scenario {stock!r}")


def _profile_summary(profile: mt.NormProfile, opts: SolverOptions) -> str:
    ts, vals = profile.valid_nodes()
    i = int(np.argmin(vals))
    zeros = ts[vals <= opts.tol_N]
    z = f"; zeros at t = {', '.join(f'{t:.4f}' for t in zeros)}" if len(zeros) else ""
    return (f"profile: {len(ts)} nodes, min N = {vals[i]:.5g} at t = {ts[i]:.4f}, "
            f"max N = {vals.max():.5g}{z}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_norm_profile(args) -> RunReport:
    t0 = time.perf_counter()
    opts = _opts_from_args(args)
    sc = _load_scenario(args, opts)
    report = RunReport("norm-profile", sc.digest())
    profile = mt.sample_profile(sc.system, sc.y0, sc.target, sc.t_min, sc.t_max,
                                args.points, opts, workers=_workers())
    _write(args.out, profile.to_csv(), report)
    frac = float(profile.valid.mean())
    report.add("profile-nodes-solved", frac >= 1 - opts.max_invalid_fraction,
               f"valid fraction {frac:.2f}")
    report.add("profile-values-finite",
               bool(np.isfinite(profile.values[profile.valid]).all()))
    print(_profile_summary(profile, opts))
    report.wall_time_s = time.perf_counter() - t0
    return report


def cmd_min_time(args) -> RunReport:
    t0 = time.perf_counter()
    opts = _opts_from_args(args)
    sc = _load_scenario(args, opts)
    report = RunReport("min-time", sc.digest())
    profile = mt.sample_profile(sc.system, sc.y0, sc.target, sc.t_min, sc.t_max,
                                args.points, opts, workers=_workers())
    res = mt.minimal_time(sc.system, sc.y0, sc.target, args.level, profile, opts)
    if not res.finite:
        print(f"T({args.level:g}) = +inf over window [{sc.t_min:g}, {sc.t_max:g}] "
              f"(level below the sampled profile)")
        report.add("over-window-marker", True, "no crossing in window")
    else:
        resid = res.certificate.get("residual", math.nan)
        print(f"T({args.level:g}) = {res.time:.6f}  "
              f"(|N(T) - M| = {resid:.3g}, bracket {res.crossing_bracket})")
        report.add("minimal-time-positive", res.time > opts.time_tol,
                   f"T = {res.time:.6f}")
        if not res.certificate.get("window_start"):
            ok = resid <= opts.rel_tol_N * max(1.0, args.level)
            report.add("crossing-certificate", ok,
                       f"|N(T(M)) - M| = {resid:.3g}")
    report.wall_time_s = time.perf_counter() - t0
    return report


def _parse_grid(spec: str) -> np.ndarray:
    if ":" in spec:
        a, b, n = spec.split(":")
        return np.linspace(float(a), float(b), int(n))
    return np.array([float(x) for x in spec.split(",")])


def cmd_classify(args) -> RunReport:
    t0 = time.perf_counter()
    opts = _opts_from_args(args)
    sc = _load_scenario(args, opts)
    report = RunReport("classify", sc.digest())
    M_grid = _parse_grid(args.m_grid)
    T_grid = _parse_grid(args.t_grid)
    profile = mt.sample_profile(sc.system, sc.y0, sc.target, sc.t_min, sc.t_max,
                                args.points, opts, workers=_workers())
    rmap = cls.region_map(sc.system, sc.y0, sc.target, M_grid, T_grid, profile, opts)
    _write(args.out, rmap.to_csv(), report)
    summary_path = os.path.splitext(args.out)[0] + "_summary.json"
    _write(summary_path, json.dumps(rmap.summary(), indent=1, sort_keys=True), report)
    total = len(rmap.cells)
    report.add("region-partition", total == len(M_grid) * len(T_grid),
               f"{total} cells")
    off_row_null = [c for c in rmap.cells
                    if c.region is cls.Region.EQUIVALENT_NULL and c.M > opts.tol_M]
    report.add("null-region-on-zero-row", not off_row_null,
               f"{len(off_row_null)} violations")
    print("region counts:", json.dumps(rmap.counts))
    report.wall_time_s = time.perf_counter() - t0
    return report


def verify_counterexample(sc: sct.Scenario, tune: sct.TuneResult,
                          opts: SolverOptions, points: int = 25,
                          workers: int = 1):
    """Wave ordering, null-pair membership and the graph-region gap.

    Returns (checks, artifacts); checks is a list of (name, passed, detail).
    """
    lm = tune.landmarks
    tau1, T1, tau2, T2 = lm["tau1"], lm["T1"], lm["tau2"], lm["T2"]
    checks: list[tuple[str, bool, str]] = []
    S, y0, Q = sc.system, sc.y0, sc.target

    # (a) wave ordering with strict margins
    n_T1, n_T2, n_tau2 = lm["N_T1"], lm["N_T2"], lm["N_tau2"]
    early = lm["N_tau1_probes"]
    margin = opts.wave_margin * n_tau2
    checks.append(("wave-N(T2)-vanishes", n_T2 <= opts.tol_N, f"N(T2) = {n_T2:.3g}"))
    checks.append(("wave-N(T1)<N(tau2)", n_tau2 - n_T1 >= margin,
                   f"gap {n_tau2 - n_T1:.4g} >= {margin:.4g}"))
    early_min = min(early.values())
    checks.append(("wave-early-norms-dominate", early_min - n_tau2 >= margin,
                   f"min over (0,tau1] probes {early_min:.4g} vs N(tau2) {n_tau2:.4g}"))

    # profile over the window, used by crossings and exported as an artifact
    profile = mt.sample_profile(S, y0, Q, sc.t_min, sc.t_max, points, opts,
                                workers=workers)

    # (b) the pair (0, T2) is a null-equivalence point
    verdict = cls.classify_pair(S, y0, Q, 0.0, T2, profile, opts)
    checks.append(("null-pair-(0,T2)", verdict.region is cls.Region.EQUIVALENT_NULL,
                   f"verdict {verdict.region.value}"))

    # (c) graph-region gap around the wave dip
    M0, T_hat = _refine_profile_min(S, y0, Q, profile, tau1, tau2, opts)
    checks.append(("dip-inside-(tau1,tau2)", tau1 < T_hat < tau2 - opts.time_tol,
                   f"T_hat = {T_hat:.4f}, M0 = {M0:.5g}"))
    hi = mt.minimal_time(S, y0, Q, 1.05 * M0, profile, opts)
    lo = mt.minimal_time(S, y0, Q, 0.95 * M0, profile, opts)
    ok_hi = hi.finite and hi.time <= T_hat + opts.time_tol
    checks.append(("gap-upper-branch", ok_hi,
                   f"T(1.05 M0) = {hi.time:.4f} <= T_hat = {T_hat:.4f}"))
    ok_lo = lo.finite and lo.time >= tau2 - opts.time_tol
    checks.append(("gap-lower-branch", ok_lo,
                   f"T(0.95 M0) = {lo.time:.4f} >= tau2 = {tau2:.4f}"))
    if hi.finite and lo.finite:
        length = lo.time - hi.time
        checks.append(("gap-length", length >= 0.5 * (tau2 - T_hat),
                       f"disconnection length {length:.4f} vs (tau2 - T_hat)/2 = "
                       f"{0.5 * (tau2 - T_hat):.4f}"))
    else:
        checks.append(("gap-length", False, "a crossing was not found"))

    artifacts = {"profile": profile, "M0": M0, "T_hat": T_hat,
                 "T_hi": hi.time, "T_lo": lo.time, "landmarks": lm}
    return checks, artifacts


def _refine_profile_min(S, y0, Q, profile: mt.NormProfile, a: float, b: float,
                        opts: SolverOptions):
    """Golden-section refinement of min N over [a, b], seeded by the profile."""
    ts, vals = profile.valid_nodes()
    inside = (ts >= a) & (ts <= b)
    cache: dict[float, float] = {float(t): float(v) for t, v in zip(ts[inside], vals[inside])}

    def N_of(t):
        t = float(t)
        if t not in cache:
            cache[t] = minimal_norm(S, y0, Q, t, opts).value
        return cache[t]

    if inside.any():
        i = int(np.argmin(vals[inside]))
        t_star = float(ts[inside][i])
    else:
        t_star = 0.5 * (a + b)
        N_of(t_star)
    lo = max(a, t_star - (b - a) / 4)
    hi = min(b, t_star + (b - a) / 4)
    phi = (np.sqrt(5) - 1) / 2
    while hi - lo > 2 * opts.time_tol:
        m1 = hi - phi * (hi - lo)
        m2 = lo + phi * (hi - lo)
        if N_of(m1) <= N_of(m2):
            hi = m2
        else:
            lo = m1
    t_min = min(cache, key=cache.get)
    return cache[t_min], t_min


def cmd_counterexample(args) -> RunReport:
    t0 = time.perf_counter()
    opts = _opts_from_args(args)
    spec = sct.CounterexampleSpec(
        k=args.k, a0=args.a0, a1=args.a1, a2=args.a2,
        theta1=args.theta1, theta2=args.theta2,
        shrink=args.shrink, complement_radius=args.complement_radius)
    if args.no_tune:
        sc, lm = sct.build_counterexample(spec, args.modes, opts)
        # landmark norms still need measuring for the verification suite
        T1, T2 = lm["T1"], lm["T2"]
        tau2 = 0.5 * (T1 + T2)
        tau1 = 0.7 * T1
        probes = {tau1 * 2.0 ** (-j): minimal_norm(sc.system, sc.y0, sc.target,
                                                   tau1 * 2.0 ** (-j), opts).value
                  for j in range(4)}
        tune = sct.TuneResult(spec.shrink, {
            "tau1": tau1, "T1": T1, "tau2": tau2, "T2": T2,
            "N_T1": minimal_norm(sc.system, sc.y0, sc.target, T1, opts).value,
            "N_T2": minimal_norm(sc.system, sc.y0, sc.target, T2, opts).value,
            "N_tau2": minimal_norm(sc.system, sc.y0, sc.target, tau2, opts).value,
            "N_tau1_probes": probes}, {}, [])
    else:
        sc, tune = sct.tune_shrink(spec, args.modes, opts)
    report = RunReport("counterexample", sc.digest())
    checks, artifacts = verify_counterexample(sc, tune, opts, args.points,
                                              workers=_workers())
    for name, ok, detail in checks:
        report.add(name, ok, detail)

    out_dir = args.out_dir
    _write(os.path.join(out_dir, "scenario.json"), sc.to_json(), report)
    _write(os.path.join(out_dir, "profile.csv"), artifacts["profile"].to_csv(), report)
    payload = {"shrink": tune.shrink, "landmarks": tune.landmarks,
               "margins": tune.margins, "M0": artifacts["M0"],
               "T_hat": artifacts["T_hat"], "T_hi": artifacts["T_hi"],
               "T_lo": artifacts["T_lo"]}
    _write(os.path.join(out_dir, "landmarks.json"),
           json.dumps(payload, indent=1, sort_keys=True, default=float), report)
    report.wall_time_s = time.perf_counter() - t0
    return report


def cmd_selftest(args) -> RunReport:
    t0 = time.perf_counter()
    opts = _opts_from_args(args)
    report = RunReport("selftest", "builtin")
    rng = np.random.default_rng(0)

    S = build_system(3, (0.0, np.pi))
    report.add("gram-identity-full-window",
               bool(np.allclose(S.gram, np.eye(3), atol=1e-12)))

    S2 = build_system(4, (0.4, 2.0))
    y = rng.normal(size=4)
    s_t = rng.uniform(0, 2, size=2)
    lhs = free_flow(S2, free_flow(S2, y, s_t[0]), s_t[1])
    rhs = free_flow(S2, y, s_t.sum())
    report.add("semigroup-law", bool(np.allclose(lhs, rhs, atol=1e-10)))

    ball = tg.Ball(np.array([1.0, 0.0, 0.0, 0.0]), 0.5)
    z1, z2 = rng.normal(size=4) * 3, rng.normal(size=4) * 3
    p1, p2 = ball.project(z1), ball.project(z2)
    report.add("projection-nonexpansive",
               float(np.linalg.norm(p1 - p2)) <= float(np.linalg.norm(z1 - z2)) + 1e-12)
    report.add("projection-idempotent",
               float(np.linalg.norm(ball.project(p1) - p1)) <= 1e-12)

    # analytic point-target check: one slice, two modes
    S3 = build_system(2, (0.0, np.pi))
    opts1 = opts.replace(n_slices=1)
    q = np.array([0.3, -0.2])
    y0 = np.array([1.0, 1.0])
    T = 0.8
    from .spectral import slice_weights
    G = np.diag(slice_weights(S3, T, 1)[0]) @ S3.gram
    v_exact = np.linalg.solve(G, q - free_flow(S3, y0, T))
    sol = minimal_norm(S3, y0, tg.Point(q), T, opts1)
    rel = abs(sol.value - np.linalg.norm(v_exact)) / np.linalg.norm(v_exact)
    report.add("point-target-analytic", rel < 5e-3, f"rel err {rel:.2e}")

    disk = tg.tangent_disk(4.0, 1.0, 0.3)
    p = tg.curve_point(4.0, 1.0)
    report.add("tangent-disk-residual",
               abs(float(np.linalg.norm(p - disk.center)) - disk.radius) <= 1e-10)
    report.wall_time_s = time.perf_counter() - t0
    return report


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, scenario: bool = True):
    if scenario:
        p.add_argument("--scenario", help="scenario JSON file")
        p.add_argument("--stock", choices=["ball", "offball", "counterexample"],
                       help="use a stock scenario instead of a file")
    p.add_argument("--tol-terminal", dest="tol_terminal", type=float, default=None)
    p.add_argument("--tol-bisect", dest="tol_bisect", type=float, default=None)
    p.add_argument("--time-tol", dest="time_tol", type=float, default=None)
    p.add_argument("--n-slices", dest="n_slices", type=int, default=None)
    p.add_argument("--strict", action="store_true", help="halve all tolerances")
    p.add_argument("--report", default=None, help="path for the JSON run report")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fallingsun",
        description="Minimal-time / minimal-norm control solvers for the 1-D heat equation")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("norm-profile", help="sample the minimal norm function N(t)")
    _add_common(p)
    p.add_argument("--points", type=int, default=33)
    p.add_argument("--out", default="profile.csv")
    p.set_defaults(fn=cmd_norm_profile)

    p = sub.add_parser("min-time", help="minimal time T(M) at a level M")
    _add_common(p)
    p.add_argument("-M", "--level", type=float, required=True)
    p.add_argument("--points", type=int, default=33)
    p.set_defaults(fn=cmd_min_time)

    p = sub.add_parser("classify", help="region map over an (M, T) grid")
    _add_common(p)
    p.add_argument("--m-grid", required=True, help="comma list or start:stop:count")
    p.add_argument("--t-grid", required=True, help="comma list or start:stop:count")
    p.add_argument("--points", type=int, default=33)
    p.add_argument("--out", default="regions.csv")
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("counterexample",
                       help="build, tune and verify the wave scenario")
    _add_common(p, scenario=False)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--a0", type=float, default=2.0)
    p.add_argument("--a1", type=float, default=1.2)
    p.add_argument("--a2", type=float, default=0.6)
    p.add_argument("--theta1", type=float, default=0.4)
    p.add_argument("--theta2", type=float, default=0.4)
    p.add_argument("--shrink", type=float, default=0.9)
    p.add_argument("--complement-radius", dest="complement_radius",
                   type=float, default=1.0)
    p.add_argument("--modes", type=int, default=8)
    p.add_argument("--points", type=int, default=25)
    p.add_argument("--no-tune", action="store_true",
                   help="use --shrink as-is instead of searching")
    p.add_argument("--wave-margin", dest="wave_margin", type=float, default=None)
    p.add_argument("--out-dir", default="counterexample_out")
    p.set_defaults(fn=cmd_counterexample)

    p = sub.add_parser("selftest", help="quick built-in invariant battery")
    _add_common(p, scenario=False)
    p.set_defaults(fn=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report: RunReport = args.fn(args)
    except (sct.ScenarioError, tg.GeometryError, ValueError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2
    print(report.render())
    path = args.report or f"report_{report.command}.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=1, sort_keys=True)
    return report.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
