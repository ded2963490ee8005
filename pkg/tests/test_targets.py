import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fallingsun.targets import (Ball, Disk2, GeometryError, HullOfDisksProduct,
                                Point, contains, curve_curvature, curve_point,
                                distance, hull_curve_intersection_check,
                                project, tangent_disk, target_from_dict)
from oracles import (capsule_signed_distance, hull_grid_points,
                     hull_grid_projection)


def hull_target(c1, r1, c2, r2, rho=1.0, modes=(1, 2)):
    return HullOfDisksProduct(modes, Disk2(np.array(c1), r1),
                              Disk2(np.array(c2), r2), rho)


# ---------------------------------------------------------------------------
# membership / projection basics
# ---------------------------------------------------------------------------

def test_ball_membership():
    Q = Ball(np.zeros(3), 1.0)
    assert contains(Q, np.zeros(3), 0.0)
    assert not contains(Q, np.array([2.0, 0.0, 0.0]), 1e-9)


def test_ball_projection_closed_form():
    Q = Ball(np.array([1.0, -1.0]), 0.5)
    z = np.array([3.0, -1.0])
    assert project(Q, z) == pytest.approx([1.5, -1.0], abs=1e-14)


def test_projection_idempotent_on_member():
    Q = Ball(np.array([0.2, 0.1, 0.0, 0.0]), 0.7)
    z = np.array([0.3, 0.2, 0.1, -0.1])
    assert contains(Q, z, 0.0)
    assert np.array_equal(project(Q, z), z)


def test_point_projection():
    Q = Point(np.array([0.3, -0.2]))
    assert project(Q, np.array([5.0, 5.0])) == pytest.approx([0.3, -0.2])
    assert not Q.has_interior()


def test_hull_product_deep_interior_membership():
    Q = hull_target([0.0, 0.0], 1.0, [4.0, 0.0], 1.0)
    z = np.zeros(4)   # disk1 center, zero complement
    assert contains(Q, z, 0.0)


def test_hull_tangent_segment_projection():
    # two unit disks centered (0,0), (4,0): upper tangent segment is y = 1
    Q = hull_target([0.0, 0.0], 1.0, [4.0, 0.0], 1.0)
    z = np.array([2.0, 3.0])
    assert project(Q, z)[:2] == pytest.approx([2.0, 1.0], abs=1e-12)
    _, d_grid = hull_grid_projection(Q.disk1, Q.disk2, z[:2], pitch=0.01)
    assert abs(d_grid - distance(Q, z)) <= 0.02


def test_hull_complement_clipping():
    Q = hull_target([0.0, 0.0], 1.0, [4.0, 0.0], 1.0, rho=0.5, modes=(1, 2))
    z = np.array([0.0, 0.0, 3.0, 4.0])
    out = project(Q, z)
    assert np.linalg.norm(out[2:]) == pytest.approx(0.5, rel=1e-12)
    assert out[2:] == pytest.approx([0.3, 0.4], rel=1e-12)


def test_hull_product_split_commutes():
    # plane and complement projections act independently
    Q = hull_target([0.0, 2.0], 0.5, [2.0, 0.5], 0.3, rho=1.0, modes=(1, 3))
    rng = np.random.default_rng(5)
    for _ in range(20):
        z = rng.normal(size=5) * 2
        out = project(Q, z)
        z_plane_only = z.copy()
        z_plane_only[[1, 3, 4]] = 0.0
        out_plane = project(Q, z_plane_only)
        assert out[[0, 2]] == pytest.approx(out_plane[[0, 2]], abs=1e-12)


def test_degenerate_nested_disks_project_like_single_disk():
    # disk2 inside disk1: hull is disk1
    Q = hull_target([0.0, 0.0], 2.0, [0.5, 0.0], 0.3)
    z = np.array([5.0, 0.0])
    assert project(Q, z)[:2] == pytest.approx([2.0, 0.0], abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_projection_nonexpansive_and_idempotent(seed):
    rng = np.random.default_rng(seed)
    Q = hull_target([0.0, 1.5], 0.8, [2.5, 0.2], 0.4, rho=0.7)
    z1, z2 = rng.normal(size=4) * 3, rng.normal(size=4) * 3
    p1, p2 = project(Q, z1), project(Q, z2)
    assert np.linalg.norm(p1 - p2) <= np.linalg.norm(z1 - z2) + 1e-12
    assert np.linalg.norm(project(Q, p1) - p1) <= 1e-12


def test_hull_projection_against_grid_oracle():
    rng = np.random.default_rng(11)
    d1 = Disk2(np.array([0.0, 1.5]), 0.8)
    d2 = Disk2(np.array([2.5, 0.2]), 0.4)
    Q = HullOfDisksProduct((1, 2), d1, d2, 1.0)
    pitch = 0.01
    grid = hull_grid_points(d1, d2, pitch)
    for _ in range(30):
        z = rng.normal(size=2) * 3
        _, d_grid = hull_grid_projection(d1, d2, z, pitch, grid=grid)
        d_cand = distance(Q, np.array([z[0], z[1]]))
        assert d_cand <= d_grid + 1e-9          # candidate at least as close
        assert abs(d_cand - d_grid) <= 2 * pitch


def test_hull_candidate_projection_is_member():
    rng = np.random.default_rng(12)
    d1 = Disk2(np.array([0.0, 1.5]), 0.8)
    d2 = Disk2(np.array([2.5, 0.2]), 0.4)
    Q = HullOfDisksProduct((1, 2), d1, d2, 1.0)
    for _ in range(50):
        z = rng.normal(size=2) * 4
        p = project(Q, z)
        assert capsule_signed_distance(d1, d2, p[:2]) <= 1e-9


def test_support_function_matches_projection_geometry():
    # support point must realize the support value and lie in the set
    rng = np.random.default_rng(4)
    Q = hull_target([0.0, 1.5], 0.8, [2.5, 0.2], 0.4, rho=0.9)
    for _ in range(20):
        eta = rng.normal(size=4)
        sp = Q.support_point(eta)
        assert Q.support(eta) == pytest.approx(float(sp @ eta), rel=1e-12, abs=1e-12)
        assert contains(Q, sp, 1e-9)


# ---------------------------------------------------------------------------
# tangent disks and the hull-curve check
# ---------------------------------------------------------------------------

def test_tangent_disk_plugin_formula():
    # alpha=2, a=1: h'=2, h''=2, kappa = 2/5^{3/2}; r = theta 5^{3/2}/2
    theta = 0.3
    disk = tangent_disk(2.0, 1.0, theta)
    kappa = 2.0 / 5 ** 1.5
    r_expected = theta / kappa
    assert disk.radius == pytest.approx(r_expected, rel=1e-12)
    center_expected = np.array([1.0, 1.0]) + r_expected * np.array([-2.0, 1.0]) / np.sqrt(5)
    assert disk.center == pytest.approx(center_expected, rel=1e-12)


def test_tangent_disk_tangency_residual():
    disk = tangent_disk(4.0, 0.8, 0.5)
    p = curve_point(4.0, 0.8)
    assert abs(np.linalg.norm(p - disk.center) - disk.radius) <= 1e-10


def test_tangent_disk_center_above_curve():
    for a in (0.5, 1.0, 1.6):
        disk = tangent_disk(4.0, a, 0.4)
        cx, cy = disk.center
        if cx > 0:
            assert cy > cx ** 4.0


def test_tangent_disk_containment_sampling():
    disk = tangent_disk(2.0, 1.0, 0.3)
    xs = np.linspace(1e-6, 10.0, 10_000)
    d = np.linalg.norm(curve_point(2.0, xs) - disk.center, axis=1)
    assert (d >= disk.radius - 1e-9).all()


def test_tangent_disk_shrinks_theta_when_needed():
    # at alpha=4, a=1.2 the nominal theta=0.4 disk crosses the curve near the
    # origin; the constructor must halve theta instead of failing
    disk = tangent_disk(4.0, 1.2, 0.4)
    kappa = curve_curvature(4.0, 1.2)
    assert disk.radius < 0.4 / kappa - 1e-9
    xs = np.linspace(1e-6, 3.0, 10_000)
    d = np.linalg.norm(curve_point(4.0, xs) - disk.center, axis=1)
    assert (d >= disk.radius - 1e-9).all()


def test_tangent_disk_validates_arguments():
    with pytest.raises(ValueError):
        tangent_disk(1.5, 1.0, 0.3)
    with pytest.raises(ValueError):
        tangent_disk(2.0, -1.0, 0.3)
    with pytest.raises(ValueError):
        tangent_disk(2.0, 1.0, 1.1)


def test_hull_curve_check_passes_for_separated_disks():
    d1 = tangent_disk(4.0, 1.0, 0.3)
    d2 = tangent_disk(4.0, 0.5, 0.3)
    assert hull_curve_intersection_check(d1, d2, 4.0, tol=1e-6)


def test_hull_curve_check_fails_for_chord_cutting_disks():
    # disks tangent at nearby points with radii large relative to the local
    # curvature gap: the connecting hull face cuts the curve
    p1, p2 = curve_point(4.0, 1.0), curve_point(4.0, 0.9)
    d1 = Disk2(p1 + np.array([0.0, 1.5]), 1.5)
    d2 = Disk2(p2 + np.array([0.0, 1.2]), 1.2)
    assert not hull_curve_intersection_check(d1, d2, 4.0, tol=1e-6)


def test_hull_curve_check_single_tangency_degenerate():
    # second disk far inside the epigraph: only one tangency neighborhood
    d1 = tangent_disk(4.0, 1.0, 0.3)
    d2 = Disk2(np.array([0.3, 3.0]), 0.05)
    assert hull_curve_intersection_check(d1, d2, 4.0, tol=1e-6)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_target_round_trip():
    for Q in (Ball(np.array([1.0, 2.0]), 0.3),
              Point(np.array([0.5])),
              hull_target([0.0, 1.5], 0.8, [2.5, 0.2], 0.4, rho=0.9, modes=(1, 3))):
        Q2 = target_from_dict(Q.to_dict())
        assert Q.to_dict() == Q2.to_dict()


def test_contains_rejects_negative_tol():
    with pytest.raises(ValueError):
        contains(Ball(np.zeros(2), 1.0), np.zeros(2), -1e-3)
