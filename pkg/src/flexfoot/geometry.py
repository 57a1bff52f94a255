"""Planar geometry helpers: convex hulls and signed containment margins.

Used by the stability analysis to relate the center of pressure to the
support polygon spanned by active ground contacts. Degenerate hulls
(single point, collinear segment) are handled explicitly because a foot
in early or late stance often touches the ground at one or two points.
"""

from __future__ import annotations

import numpy as np


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Convex hull of a 2D point set via the monotone chain algorithm.

    Returns hull vertices in counter-clockwise order without repeating the
    first vertex. Collinear input collapses to the two extreme points and a
    single point stays a single point.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("expected an (n, 2) array of points")
    if len(pts) == 0:
        raise ValueError("empty point set has no hull")

    # lexicographic sort, drop exact duplicates
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(np.diff(pts, axis=0) != 0.0, axis=1)
    pts = pts[keep]

    if len(pts) == 1:
        return pts.copy()
    if len(pts) == 2:
        return pts.copy()

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)

    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) == 2 and np.allclose(hull[0], hull[1]):
        return hull[:1]
    return hull


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.hypot(*(p - a)))
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    closest = a + t * ab
    return float(np.hypot(*(p - closest)))


def point_in_hull(point: np.ndarray, hull: np.ndarray, tol: float = 0.0) -> bool:
    """True if `point` lies inside or on a CCW hull (within `tol` outward)."""
    p = np.asarray(point, dtype=float)
    hull = np.asarray(hull, dtype=float)
    if len(hull) == 1:
        return bool(np.hypot(*(p - hull[0])) <= tol)
    if len(hull) == 2:
        return _point_segment_distance(p, hull[0], hull[1]) <= tol
    for k in range(len(hull)):
        a = hull[k]
        b = hull[(k + 1) % len(hull)]
        edge = b - a
        # inward normal for a CCW polygon is (-edge_y, edge_x)
        side = -edge[1] * (p[0] - a[0]) + edge[0] * (p[1] - a[1])
        if side < -tol * float(np.hypot(*edge)):
            return False
    return True


def signed_margin(point: np.ndarray, hull: np.ndarray) -> float:
    """Signed distance from `point` to the hull boundary.

    Positive inside, negative outside, zero on the boundary. Degenerate
    hulls (point or segment) have no interior, so the margin there is
    `-distance` (zero when the point lies on them).
    """
    p = np.asarray(point, dtype=float)
    hull = np.asarray(hull, dtype=float)
    if len(hull) == 0:
        raise ValueError("empty hull")
    if len(hull) == 1:
        return -float(np.hypot(*(p - hull[0])))
    if len(hull) == 2:
        return -_point_segment_distance(p, hull[0], hull[1])

    boundary = min(
        _point_segment_distance(p, hull[k], hull[(k + 1) % len(hull)])
        for k in range(len(hull))
    )
    return boundary if point_in_hull(p, hull) else -boundary
