import math

import numpy as np
import pytest

from fallingsun.minnorm import minimal_norm
from fallingsun.mintime import (ProfileError, blowup_check, minimal_time,
                                sample_profile)
from fallingsun.options import DEFAULT_OPTIONS
from fallingsun.spectral import build_system, free_flow
from fallingsun.targets import Ball, contains

OPTS = DEFAULT_OPTIONS.replace(n_slices=32)


@pytest.fixture(scope="module")
def ball_setup():
    sys = build_system(4, (0.3, 2.8))
    y0 = np.array([3.0, 1.0, 0.5, 0.0])
    Q = Ball(np.zeros(4), 0.5)
    return sys, y0, Q


@pytest.fixture(scope="module")
def ball_profile(ball_setup):
    sys, y0, Q = ball_setup
    return sample_profile(sys, y0, Q, 0.1, 2.5, 17, OPTS)


def test_profile_grid_sorted_and_finite(ball_profile):
    assert (np.diff(ball_profile.grid) > 0).all()
    assert ball_profile.valid.all()
    assert np.isfinite(ball_profile.values).all()


def test_profile_hits_zero_after_free_decay(ball_setup, ball_profile):
    sys, y0, Q = ball_setup
    ts, vals = ball_profile.valid_nodes()
    zero_ts = ts[vals <= 1e-12]
    assert len(zero_ts) > 0
    for t in zero_ts:
        assert contains(Q, free_flow(sys, y0, float(t)), OPTS.tol_terminal)


def test_profile_rejects_bad_window():
    sys = build_system(2, (0.3, 2.8))
    with pytest.raises(ValueError):
        sample_profile(sys, np.array([1.0, 0.0]), Ball(np.zeros(2), 0.1), 1.0, 0.5, 5, OPTS)
    with pytest.raises(ValueError):
        sample_profile(sys, np.array([1.0, 0.0]), Ball(np.zeros(2), 0.1), 0.5, 1.0, 1, OPTS)


def test_profile_refinement_inserts_nodes(ball_setup):
    sys, y0, Q = ball_setup
    opts = OPTS.replace(refine_jump=0.2, max_depth=3)
    prof = sample_profile(sys, y0, Q, 0.1, 2.0, 6, opts)
    assert prof.refined.any()
    assert len(prof.refined_intervals) > 0
    assert len(prof.grid) > 6


def test_profile_csv_schema(ball_profile):
    lines = ball_profile.to_csv().strip().splitlines()
    assert lines[0] == "t,N,refined,valid"
    assert len(lines) == len(ball_profile.grid) + 1
    cells = lines[1].split(",")
    assert len(cells) == 4
    float(cells[0]), float(cells[1]), int(cells[2]), int(cells[3])


def test_minimal_time_certificate(ball_setup, ball_profile):
    sys, y0, Q = ball_setup
    ts, vals = ball_profile.valid_nodes()
    for M in (0.5, 1.5, 4.0):
        res = minimal_time(sys, y0, Q, M, ball_profile, OPTS)
        assert res.finite
        assert res.time > OPTS.time_tol
        # consistency: N at the crossing matches the level
        assert res.certificate["residual"] <= 0.02 * max(1.0, M)
        # falling sun: no earlier profile sample at or below the level
        early = ts < res.time - OPTS.time_tol
        assert (vals[early] > M).all()


def test_minimal_time_monotone_level_sets(ball_setup, ball_profile):
    sys, y0, Q = ball_setup
    levels = [0.3, 0.8, 2.0, 5.0]
    times = [minimal_time(sys, y0, Q, M, ball_profile, OPTS).time for M in levels]
    for t1, t2 in zip(times, times[1:]):
        assert t2 <= t1 + OPTS.time_tol


def test_minimal_time_over_window_marker(ball_setup):
    sys, y0, Q = ball_setup
    # window stops before the profile reaches the level
    prof = sample_profile(sys, y0, Q, 0.1, 0.4, 6, OPTS)
    ts, vals = prof.valid_nodes()
    M = 0.5 * float(vals.min())
    res = minimal_time(sys, y0, Q, M, prof, OPTS)
    assert not res.finite
    assert math.isinf(res.time)
    assert res.certificate["over_window"]


def test_minimal_time_zero_level(ball_setup, ball_profile):
    # M = 0 crossing is the first time the free flow enters the target
    sys, y0, Q = ball_setup
    res = minimal_time(sys, y0, Q, 0.0, ball_profile, OPTS)
    assert res.finite
    assert contains(Q, free_flow(sys, y0, res.time), 1e-5)
    assert not contains(Q, free_flow(sys, y0, res.time - 5 * OPTS.time_tol), OPTS.tol_terminal)


def test_minimal_time_below_window_backscan(ball_setup):
    sys, y0, Q = ball_setup
    # profile starts late: every sample is already below the level
    prof = sample_profile(sys, y0, Q, 1.0, 2.0, 5, OPTS)
    M = 8.0
    res = minimal_time(sys, y0, Q, M, prof, OPTS)
    assert res.finite
    assert res.time < 1.0
    assert minimal_norm(sys, y0, Q, res.time, OPTS).value <= M + 2 * OPTS.tol_bisect * max(1, M)


def test_lipschitz_quotient_stable_under_halving(ball_setup):
    sys, y0, Q = ball_setup
    a, b = 0.3, 1.2

    def quotient(m):
        prof = sample_profile(sys, y0, Q, a, b, m, OPTS.replace(max_depth=0))
        ts, vals = prof.valid_nodes()
        return float(np.max(np.abs(np.diff(vals) / np.diff(ts))))

    q1, q2 = quotient(9), quotient(17)
    assert q2 / q1 < 2.0
    assert q1 / q2 < 2.0


def test_blowup_check_on_ball(ball_setup):
    sys, y0, Q = ball_setup
    report = blowup_check(sys, y0, Q, OPTS)
    assert report.passed
    assert bool(report)
    finite = [v for v in report.values if math.isfinite(v)]
    assert finite[-1] >= report.threshold or report.budget_exceeded


def test_blowup_check_rejects_initial_state_inside():
    sys = build_system(2, (0.3, 2.8))
    Q = Ball(np.zeros(2), 1.0)
    with pytest.raises(ValueError):
        blowup_check(sys, np.array([0.1, 0.0]), Q, OPTS)
