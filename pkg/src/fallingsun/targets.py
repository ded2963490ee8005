"""Convex target sets with exact membership and Euclidean projection oracles.

Three variants: balls, single points (analytic-oracle device only), and the
product of a planar hull-of-two-disks with a complement ball.  The planar
geometry lives on the convex curve x2 = x1^alpha, where disks tangent to the
curve generate non-monotone norm profiles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Disk2",
    "Ball",
    "Point",
    "HullOfDisksProduct",
    "GeometryError",
    "contains",
    "project",
    "distance",
    "tangent_disk",
    "hull_curve_intersection_check",
    "curve_point",
    "curve_curvature",
    "target_from_dict",
]


class GeometryError(RuntimeError):
    """A constructive geometric requirement failed numerically."""


# ---------------------------------------------------------------------------
# curve helpers: h(x) = x^alpha on x > 0
# ---------------------------------------------------------------------------

def curve_point(alpha: float, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.stack([x, x ** alpha], axis=-1)


def curve_curvature(alpha: float, x: float) -> float:
    hp = alpha * x ** (alpha - 1)
    hpp = alpha * (alpha - 1) * x ** (alpha - 2)
    return hpp / (1.0 + hp * hp) ** 1.5


@dataclass(frozen=True)
class Disk2:
    """Closed disk in the (e_1, e_k) spectral plane."""

    center: np.ndarray   # shape (2,)
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(2))
        self.center.setflags(write=False)
        if not np.isfinite(self.center).all() or not np.isfinite(self.radius):
            raise ValueError("disk parameters must be finite")
        if self.radius < 0:
            raise ValueError(f"disk radius must be >= 0, got {self.radius}")

    def to_dict(self) -> dict:
        return {"center": [float(self.center[0]), float(self.center[1])], "radius": float(self.radius)}

    @classmethod
    def from_dict(cls, d: dict) -> "Disk2":
        return cls(np.asarray(d["center"], dtype=float), float(d["radius"]))


# ---------------------------------------------------------------------------
# planar hull of two disks
# ---------------------------------------------------------------------------

class _Hull2:
    """conv(D1 u D2) in the plane: two disks plus the outer tangent trapezoid.

    When one disk contains the other the hull degenerates to the larger disk.
    All methods accept (m, 2) point arrays.
    """

    def __init__(self, d1: Disk2, d2: Disk2):
        self.c1, self.r1 = d1.center, d1.radius
        self.c2, self.r2 = d2.center, d2.radius
        sep = self.c2 - self.c1
        dist_centers = float(np.linalg.norm(sep))
        self.degenerate = dist_centers <= abs(self.r1 - self.r2) + 1e-15
        if self.degenerate:
            if self.r1 < self.r2:
                self.c1, self.r1 = self.c2, self.r2
            self.segments = []
            self.quad = None
            self._freeze_scalars()
            return
        dh = sep / dist_centers
        nh = np.array([-dh[1], dh[0]])
        # common outer tangent: a unit normal n with n . (c2 - c1) = r2 - r1
        # touches both circles at c_i - r_i n on the same side
        a = (self.r2 - self.r1) / dist_centers
        b = np.sqrt(max(0.0, 1.0 - a * a))
        segs = []
        for s in (+1.0, -1.0):
            n = a * dh + s * b * nh
            q1 = self.c1 - self.r1 * n
            q2 = self.c2 - self.r2 * n
            segs.append((q1, q2))
        self.segments = segs
        # boundary order: tangent segment (+), chord of D2, segment (-), chord of D1
        (q1p, q2p), (q1m, q2m) = segs
        quad = np.array([q1p, q2p, q2m, q1m])
        area2 = 0.0
        for i in range(4):
            x1, y1 = quad[i]
            x2, y2 = quad[(i + 1) % 4]
            area2 += x1 * y2 - x2 * y1
        self.quad = None if abs(area2) < 1e-14 else (quad if area2 > 0 else quad[::-1])
        self._freeze_scalars()

    def _freeze_scalars(self):
        """Plain-float copies of the geometry for the scalar projection path."""
        self._s1 = (float(self.c1[0]), float(self.c1[1]), float(self.r1))
        self._s2 = (float(self.c2[0]), float(self.c2[1]), float(self.r2))
        self._edges = None
        if self.quad is not None:
            self._edges = []
            for i in range(4):
                ax, ay = self.quad[i]
                bx, by = self.quad[(i + 1) % 4]
                self._edges.append((float(ax), float(ay), float(bx - ax), float(by - ay)))
        self._segs = []
        for sa, sb in self.segments:
            abx, aby = float(sb[0] - sa[0]), float(sb[1] - sa[1])
            self._segs.append((float(sa[0]), float(sa[1]), abx, aby,
                               abx * abx + aby * aby))

    def project_single(self, x: float, y: float) -> tuple[float, float]:
        """Scalar candidate-method projection; hot path of the solvers."""
        from math import sqrt
        c1x, c1y, r1 = self._s1
        d1x, d1y = x - c1x, y - c1y
        n1 = sqrt(d1x * d1x + d1y * d1y)
        if n1 <= r1:
            return x, y
        if self.degenerate:
            s = r1 / n1
            return c1x + d1x * s, c1y + d1y * s
        c2x, c2y, r2 = self._s2
        d2x, d2y = x - c2x, y - c2y
        n2 = sqrt(d2x * d2x + d2y * d2y)
        if n2 <= r2:
            return x, y
        if self._edges is not None:
            inside = True
            for ax, ay, ex, ey in self._edges:
                if ex * (y - ay) - ey * (x - ax) < -1e-12:
                    inside = False
                    break
            if inside:
                return x, y
        s = r1 / n1 if n1 > 0 else 0.0
        bx, by = c1x + d1x * s, c1y + d1y * s
        best = (x - bx) ** 2 + (y - by) ** 2
        s = r2 / n2 if n2 > 0 else 0.0
        px, py = c2x + d2x * s, c2y + d2y * s
        d = (x - px) ** 2 + (y - py) ** 2
        if d < best:
            best, bx, by = d, px, py
        for ax, ay, abx, aby, ab2 in self._segs:
            if ab2 == 0.0:
                px, py = ax, ay
            else:
                t = ((x - ax) * abx + (y - ay) * aby) / ab2
                t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
                px, py = ax + t * abx, ay + t * aby
            d = (x - px) ** 2 + (y - py) ** 2
            if d < best:
                best, bx, by = d, px, py
        return bx, by

    def _in_quad(self, pts: np.ndarray) -> np.ndarray:
        if self.quad is None:
            return np.zeros(len(pts), dtype=bool)
        ok = np.ones(len(pts), dtype=bool)
        for i in range(4):
            a, b = self.quad[i], self.quad[(i + 1) % 4]
            e = b - a
            cross = e[0] * (pts[:, 1] - a[1]) - e[1] * (pts[:, 0] - a[0])
            ok &= cross >= -1e-12
        return ok

    def contains_mask(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        m = np.linalg.norm(pts - self.c1, axis=1) <= self.r1
        if not self.degenerate:
            m |= np.linalg.norm(pts - self.c2, axis=1) <= self.r2
            m |= self._in_quad(pts)
        return m

    @staticmethod
    def _proj_disk(c, r, pts):
        v = pts - c
        nv = np.linalg.norm(v, axis=1, keepdims=True)
        scale = np.where(nv > r, r / np.maximum(nv, 1e-300), 1.0)
        return c + v * scale

    @staticmethod
    def _proj_segment(a, b, pts):
        ab = b - a
        denom = float(ab @ ab)
        if denom == 0.0:
            return np.broadcast_to(a, pts.shape).copy()
        t = np.clip((pts - a) @ ab / denom, 0.0, 1.0)
        return a + np.outer(t, ab)

    def project(self, pts: np.ndarray) -> np.ndarray:
        """Candidate method: inside test, per-disk and per-tangent-segment
        projections, nearest feasible candidate wins."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = pts.copy()
        inside = self.contains_mask(pts)
        todo = ~inside
        if todo.any():
            sub = pts[todo]
            cands = [self._proj_disk(self.c1, self.r1, sub)]
            if not self.degenerate:
                cands.append(self._proj_disk(self.c2, self.r2, sub))
                for a, b in self.segments:
                    cands.append(self._proj_segment(a, b, sub))
            cands = np.stack(cands)                       # (k, m, 2)
            d = np.linalg.norm(cands - sub, axis=2)       # (k, m)
            best = d.argmin(axis=0)
            out[todo] = cands[best, np.arange(len(sub))]
        return out

    def support(self, e: np.ndarray) -> float:
        ne = float(np.linalg.norm(e))
        s1 = float(self.c1 @ e) + self.r1 * ne
        if self.degenerate:
            return s1
        return max(s1, float(self.c2 @ e) + self.r2 * ne)

    def support_point(self, e: np.ndarray) -> np.ndarray:
        ne = float(np.linalg.norm(e))
        if ne == 0.0:
            return self.c1.copy()
        s1 = float(self.c1 @ e) + self.r1 * ne
        s2 = -np.inf if self.degenerate else float(self.c2 @ e) + self.r2 * ne
        c, r = (self.c1, self.r1) if s1 >= s2 else (self.c2, self.r2)
        return c + r * e / ne


# ---------------------------------------------------------------------------
# target variants
# ---------------------------------------------------------------------------

def _pad(vec: np.ndarray, n: int) -> np.ndarray:
    """Embed a coefficient vector into the first n modes (zero-extend)."""
    vec = np.asarray(vec, dtype=float)
    if len(vec) > n:
        if np.any(vec[n:] != 0.0):
            raise ValueError(f"state dimension {n} too small for target defined on {len(vec)} modes")
        return vec[:n]
    if len(vec) < n:
        return np.concatenate([vec, np.zeros(n - len(vec))])
    return vec


@dataclass(frozen=True)
class Ball:
    """Closed L2 ball; nonempty interior iff radius > 0."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        self.center.setflags(write=False)
        if self.radius < 0:
            raise ValueError(f"ball radius must be >= 0, got {self.radius}")

    def project(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        c = _pad(self.center, len(z))
        v = z - c
        nv = float(np.linalg.norm(v))
        if nv <= self.radius:
            return z.copy()
        return c + self.radius * v / nv

    def support(self, eta: np.ndarray) -> float:
        c = _pad(self.center, len(eta))
        return float(c @ eta) + self.radius * float(np.linalg.norm(eta))

    def support_point(self, eta: np.ndarray) -> np.ndarray:
        c = _pad(self.center, len(eta))
        ne = float(np.linalg.norm(eta))
        if ne == 0.0:
            return c.copy()
        return c + self.radius * eta / ne

    def has_interior(self) -> bool:
        return self.radius > 0

    def to_dict(self) -> dict:
        return {"variant": "ball", "center": [float(x) for x in self.center],
                "radius": float(self.radius)}


@dataclass(frozen=True)
class Point:
    """Singleton target.  Analytic-oracle device; has no interior, so it is
    rejected as a scenario target."""

    center: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        self.center.setflags(write=False)

    def project(self, z: np.ndarray) -> np.ndarray:
        return _pad(self.center, len(np.asarray(z)))

    def support(self, eta: np.ndarray) -> float:
        return float(_pad(self.center, len(eta)) @ eta)

    def support_point(self, eta: np.ndarray) -> np.ndarray:
        return _pad(self.center, len(eta))

    def has_interior(self) -> bool:
        return False

    def to_dict(self) -> dict:
        return {"variant": "point", "center": [float(x) for x in self.center]}


@dataclass(frozen=True)
class HullOfDisksProduct:
    """conv(disk1 u disk2) in the (e_j1, e_j2) plane, times the closed ball of
    radius complement_radius in the remaining modes."""

    plane_modes: tuple[int, int]      # 1-based mode indices, e.g. (1, k)
    disk1: Disk2
    disk2: Disk2
    complement_radius: float

    def __post_init__(self):
        j1, j2 = self.plane_modes
        if not (1 <= j1 < j2):
            raise ValueError(f"plane modes must satisfy 1 <= j1 < j2, got {self.plane_modes}")
        if self.complement_radius < 0:
            raise ValueError("complement radius must be >= 0")
        object.__setattr__(self, "plane_modes", (int(j1), int(j2)))
        object.__setattr__(self, "_hull", _Hull2(self.disk1, self.disk2))
        object.__setattr__(self, "_masks", {})

    def _split(self, z: np.ndarray):
        j1, j2 = self.plane_modes
        n = len(z)
        if n < j2:
            raise ValueError(f"state needs >= {j2} modes for plane {self.plane_modes}")
        if n not in self._masks:
            mask = np.ones(n, dtype=bool)
            mask[j1 - 1] = mask[j2 - 1] = False
            self._masks[n] = mask
        return j1 - 1, j2 - 1, self._masks[n]

    def project(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        i1, i2, mask = self._split(z)
        out = z.copy()
        zi1, zi2 = float(z[i1]), float(z[i2])
        out[i1], out[i2] = self._hull.project_single(zi1, zi2)
        nc2 = float(z @ z) - zi1 * zi1 - zi2 * zi2
        rho = self.complement_radius
        if nc2 > rho * rho:
            scale = rho / np.sqrt(nc2)
            out[mask] *= scale
        return out

    def support(self, eta: np.ndarray) -> float:
        i1, i2, mask = self._split(np.asarray(eta, dtype=float))
        ep = np.array([eta[i1], eta[i2]])
        return self._hull.support(ep) + self.complement_radius * float(np.linalg.norm(eta[mask]))

    def support_point(self, eta: np.ndarray) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        i1, i2, mask = self._split(eta)
        out = np.zeros_like(eta)
        out[i1], out[i2] = self._hull.support_point(np.array([eta[i1], eta[i2]]))
        ec = eta[mask]
        nec = float(np.linalg.norm(ec))
        if nec > 0:
            out[mask] = self.complement_radius * ec / nec
        return out

    def has_interior(self) -> bool:
        if self.complement_radius <= 0:
            return False
        # planar hull has interior unless it degenerates to a point
        return (self.disk1.radius > 0 or self.disk2.radius > 0
                or float(np.linalg.norm(self.disk1.center - self.disk2.center)) > 0)

    def to_dict(self) -> dict:
        return {"variant": "hull_product",
                "plane_modes": [int(self.plane_modes[0]), int(self.plane_modes[1])],
                "disk1": self.disk1.to_dict(), "disk2": self.disk2.to_dict(),
                "complement_radius": float(self.complement_radius)}


TargetSet = Ball | Point | HullOfDisksProduct


def target_from_dict(d: dict) -> TargetSet:
    variant = d.get("variant")
    if variant == "ball":
        return Ball(np.asarray(d["center"], dtype=float), float(d["radius"]))
    if variant == "point":
        return Point(np.asarray(d["center"], dtype=float))
    if variant == "hull_product":
        return HullOfDisksProduct(
            tuple(d["plane_modes"]), Disk2.from_dict(d["disk1"]),
            Disk2.from_dict(d["disk2"]), float(d["complement_radius"]))
    raise ValueError(f"unknown target variant: {variant!r}")


def project(Q: TargetSet, z: np.ndarray) -> np.ndarray:
    """Euclidean projection onto Q."""
    return Q.project(np.asarray(z, dtype=float))


def distance(Q: TargetSet, z: np.ndarray) -> float:
    z = np.asarray(z, dtype=float)
    return float(np.linalg.norm(z - Q.project(z)))


def contains(Q: TargetSet, z: np.ndarray, tol: float) -> bool:
    """dist(z, Q) <= tol, computed through the projection oracle."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    return distance(Q, z) <= tol


# ---------------------------------------------------------------------------
# tangent-disk construction on the curve x2 = x1^alpha
# ---------------------------------------------------------------------------

def _curve_clearance(alpha: float, center: np.ndarray, radius: float,
                     n_samples: int = 10_000) -> float:
    """Min distance from the sampled curve to the disk center.

    Only abscissas within the disk's horizontal reach can violate
    containment, so sampling concentrates there (plus a pad)."""
    pad = 0.5 * max(1.0, radius)
    lo = max(1e-9, center[0] - radius - pad)
    hi = max(lo + 1e-9, center[0] + radius + pad)
    xs = np.linspace(lo, hi, n_samples)
    pts = curve_point(alpha, xs)
    return float(np.linalg.norm(pts - center, axis=1).min())


def tangent_disk(h_exponent: float, tangent_abscissa: float,
                 radius_fraction: float) -> Disk2:
    """Disk tangent to x2 = x1^alpha from inside the epigraph.

    Radius is radius_fraction / curvature at the tangency point; when curve
    sampling detects the disk crossing the curve the fraction is halved, up
    to 20 times.
    """
    alpha, a, theta = float(h_exponent), float(tangent_abscissa), float(radius_fraction)
    if alpha < 2:
        raise ValueError(f"curve exponent must be >= 2, got {alpha}")
    if a <= 0:
        raise ValueError(f"tangent abscissa must be > 0, got {a}")
    if not (0 < theta < 1):
        raise ValueError(f"radius fraction must be in (0, 1), got {theta}")
    p = curve_point(alpha, a)
    hp = alpha * a ** (alpha - 1)
    kappa = curve_curvature(alpha, a)
    n = np.array([-hp, 1.0]) / np.hypot(hp, 1.0)
    for _ in range(21):
        r = theta / kappa
        center = p + r * n
        if _curve_clearance(alpha, center, r) >= r - 1e-9:
            disk = Disk2(center, r)
            tangency_residual = abs(float(np.linalg.norm(p - center)) - r)
            if tangency_residual > 1e-10 * max(1.0, r):
                raise GeometryError(f"tangency residual {tangency_residual} too large")
            return disk
        theta /= 2.0
    raise GeometryError(
        f"no contained tangent disk at abscissa {a} (exponent {alpha}) after 20 halvings")


def _nearest_curve_abscissa(alpha: float, disk: Disk2, x_lo: float, x_hi: float) -> float:
    """Abscissa of the curve point nearest to the disk center (grid + refine)."""
    xs = np.linspace(x_lo, x_hi, 4001)
    d = np.linalg.norm(curve_point(alpha, xs) - disk.center, axis=1)
    i = int(d.argmin())
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
    for _ in range(80):
        m1 = lo + (hi - lo) / 3
        m2 = hi - (hi - lo) / 3
        d1 = np.linalg.norm(curve_point(alpha, m1) - disk.center)
        d2 = np.linalg.norm(curve_point(alpha, m2) - disk.center)
        if d1 <= d2:
            hi = m2
        else:
            lo = m1
    return 0.5 * (lo + hi)


def hull_curve_intersection_check(disk1: Disk2, disk2: Disk2, alpha: float,
                                  tol: float = 1e-6,
                                  n_samples: int = 10_000) -> bool:
    """Verify conv(disk1 u disk2) meets the curve only at the tangency points.

    Samples the curve over the hull's horizontal extent; every sample outside
    small exclusion neighborhoods of the tangency points must have distance
    to the hull greater than tol.  Exclusion radii come from the local
    curvature gap between disk and curve, with a safety factor.
    """
    hull = _Hull2(disk1, disk2)
    x_lo = max(1e-9, min(disk1.center[0] - disk1.radius, disk2.center[0] - disk2.radius) - 0.1)
    x_hi = max(disk1.center[0] + disk1.radius, disk2.center[0] + disk2.radius) + 0.1
    xs = np.linspace(x_lo, x_hi, n_samples)
    pts = curve_point(alpha, xs)
    dist_hull = np.linalg.norm(pts - hull.project(pts), axis=1)

    exempt = np.zeros(n_samples, dtype=bool)
    for disk in (disk1, disk2):
        x_star = _nearest_curve_abscissa(alpha, disk, x_lo, x_hi)
        p_star = curve_point(alpha, x_star)
        d_star = abs(float(np.linalg.norm(p_star - disk.center)) - disk.radius)
        if d_star > tol or disk.radius <= 0:
            continue   # disk does not actually touch the curve
        gap = max(1.0 / disk.radius - curve_curvature(alpha, x_star), 1e-12)
        excl = 3.0 * np.sqrt(2.0 * tol / gap)
        exempt |= np.linalg.norm(pts - p_star, axis=1) <= excl
    return bool(np.all(dist_hull[~exempt] > tol))
