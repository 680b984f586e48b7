"""Cuboid corners, convex hulls, exact convex-convex intersection and SO(3) projection.

Polytopes are kept in face form: every face is a planar convex polygon whose
vertices run counter-clockwise around the outward normal. Intersections are
computed by clipping one polytope against every facet plane of the other.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateInput, SingularInput
from .types import PoseSize

# corner k has sign pattern (bx, by, bz) = binary digits of k, 0 -> -1, 1 -> +1
CORNER_SIGNS = np.array(
    [[2 * b - 1 for b in bits] for bits in itertools.product((0, 1), repeat=3)], dtype=float
)

# faces of the unit box as corner indices; ordering is recomputed from normals
_BOX_FACES = [
    (np.array([-1.0, 0, 0]), [0, 1, 2, 3]),
    (np.array([1.0, 0, 0]), [4, 5, 6, 7]),
    (np.array([0, -1.0, 0]), [0, 1, 4, 5]),
    (np.array([0, 1.0, 0]), [2, 3, 6, 7]),
    (np.array([0, 0, -1.0]), [0, 2, 4, 6]),
    (np.array([0, 0, 1.0]), [1, 3, 5, 7]),
]

CLIP_EPS = 1e-12
RANK_TOL = 1e-9
INFLATE_EPS = 1e-6


def cuboid_corners(pose: PoseSize) -> np.ndarray:
    """Return the (8, 3) corners ``center + R @ (sign * size / 2)``.

    Corner ``k`` uses the sign pattern given by the binary digits of ``k``
    over (x, y, z), so corner 0 is (-,-,-) and corner 7 is (+,+,+).
    """
    local = CORNER_SIGNS * (pose.size / 2.0)
    return local @ pose.rotation.T + pose.center


def _order_polygon(points: np.ndarray, normal: np.ndarray) -> np.ndarray:
    centroid = points.mean(axis=0)
    rel = points - centroid
    k = int(np.argmax(np.linalg.norm(rel, axis=1)))
    u = rel[k] / np.linalg.norm(rel[k])
    v = np.cross(normal, u)
    angles = np.arctan2(rel @ v, rel @ u)
    return points[np.argsort(angles, kind="stable")]


def _dedupe(points: np.ndarray, tol: float) -> np.ndarray:
    """Drop points within ``tol`` (max-norm) of an earlier point."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) < 2:
        return points
    close = np.max(np.abs(points[:, None, :] - points[None, :, :]), axis=2) <= tol
    dup = np.tril(close, k=-1).any(axis=1)
    return points[~dup]


@dataclass(frozen=True, eq=False)
class ConvexPolytope:
    """Convex polytope as a list of ``(unit normal, offset, polygon)`` faces.

    A point ``x`` is inside when ``normal @ x <= offset`` for every face.
    An empty ``faces`` tuple denotes the empty set.
    """

    faces: tuple

    @cached_property
    def vertices(self) -> np.ndarray:
        if not self.faces:
            return np.zeros((0, 3))
        pts = np.concatenate([poly for _, _, poly in self.faces])
        scale = max(1.0, float(np.abs(pts).max()))
        return _dedupe(pts, 1e-10 * scale)

    @cached_property
    def normals(self) -> np.ndarray:
        return np.array([n for n, _, _ in self.faces]).reshape(-1, 3)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.array([h for _, h, _ in self.faces], dtype=float)

    @property
    def facets(self) -> list[tuple[np.ndarray, float]]:
        return [(n, h) for n, h, _ in self.faces]

    @cached_property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        v = self.vertices
        if len(v) == 0:
            return np.full(3, np.inf), np.full(3, -np.inf)
        return v.min(axis=0), v.max(axis=0)

    @cached_property
    def volume(self) -> float:
        if not self.faces:
            return 0.0
        ref = np.concatenate([poly for _, _, poly in self.faces]).mean(axis=0)
        total = 0.0
        for _, _, poly in self.faces:
            p = poly - ref
            a = p[0]
            b, c = p[1:-1], p[2:]
            total += float(np.sum(np.einsum("ij,ij->i", np.cross(b, c), np.broadcast_to(a, b.shape))))
        return max(total / 6.0, 0.0)

    def contains(self, points: np.ndarray, tol: float = 1e-7) -> np.ndarray:
        points = np.atleast_2d(points)
        if not self.faces:
            return np.zeros(len(points), dtype=bool)
        return np.all(points @ self.normals.T - self.offsets <= tol, axis=1)

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> "ConvexPolytope":
        faces = []
        for n, h, poly in self.faces:
            n2 = rotation @ n
            faces.append((n2, float(h + n2 @ translation), poly @ rotation.T + translation))
        return ConvexPolytope(tuple(faces))


def box_polytope(pose: PoseSize) -> ConvexPolytope:
    """Exact polytope of an oriented box without going through a hull solver."""
    corners = cuboid_corners(pose)
    faces = []
    for local_n, idx in _BOX_FACES:
        n = pose.rotation @ local_n
        poly = _order_polygon(corners[idx], n)
        faces.append((n, float(n @ poly[0]), poly))
    return ConvexPolytope(tuple(faces))


def affine_rank(points: np.ndarray, tol: float = RANK_TOL) -> tuple[int, np.ndarray, np.ndarray]:
    """Affine rank of a point set plus its singular values and directions."""
    rel = points - points.mean(axis=0)
    _, s, vt = np.linalg.svd(rel, full_matrices=True)
    s = np.concatenate([s, np.zeros(3 - len(s))])
    scale = max(float(s[0]), 1.0)
    rank = int(np.sum(s > tol * scale))
    return rank, s, vt


def convex_hull(points) -> ConvexPolytope:
    """Convex hull with coplanar triangles merged into polygonal faces.

    Raises:
        DegenerateInput: fewer than 4 points, or the points do not span 3D.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) < 4:
        raise DegenerateInput("convex hull needs at least 4 points")
    rank, _, _ = affine_rank(points)
    if rank < 3:
        raise DegenerateInput(f"points span only {rank} dimensions")
    try:
        hull = ConvexHull(points)
    except QhullError as exc:
        raise DegenerateInput(str(exc)) from exc

    scale = max(1.0, float(np.abs(points).max()))
    groups: list[tuple[np.ndarray, float, set]] = []
    for simplex, eq in zip(hull.simplices, hull.equations):
        n, d = eq[:3], -eq[3]
        for gn, gd, members in groups:
            if np.max(np.abs(gn - n)) < 1e-8 and abs(gd - d) < 1e-8 * scale:
                members.update(simplex.tolist())
                break
        else:
            groups.append((n, d, set(simplex.tolist())))

    faces = []
    for n, d, members in groups:
        n = n / np.linalg.norm(n)
        poly = _order_polygon(points[sorted(members)], n)
        faces.append((n, float(d), poly))
    return ConvexPolytope(tuple(faces))


def inflated_hull(points, eps: float = INFLATE_EPS) -> ConvexPolytope:
    """Hull of ``points``; rank-deficient sets are thickened by ``eps`` first."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    rank, _, vt = affine_rank(points)
    if rank == 3 and len(points) >= 4:
        return convex_hull(points)
    thick = [points]
    for direction in vt[rank:]:
        thick = [p + sgn * eps * direction for p in thick for sgn in (-1.0, 1.0)]
    return convex_hull(np.concatenate(thick))


def _clip(faces: list, s: np.ndarray, normal: np.ndarray, offset: float, eps: float) -> list:
    """Keep the part of the polytope with ``normal @ x <= offset``.

    ``s`` holds the signed plane distances of the concatenated face vertices.
    """
    sizes = [len(poly) for _, _, poly in faces]
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    fmax = np.maximum.reduceat(s, starts)
    fmin = np.minimum.reduceat(s, starts)
    out = []
    cap = [np.concatenate([poly for _, _, poly in faces])[np.abs(s) <= eps]]
    for k, (fn, fh, poly) in enumerate(faces):
        if fmax[k] <= eps:
            out.append((fn, fh, poly))
            continue
        if fmin[k] >= -eps:
            continue
        # Sutherland-Hodgman step on one straddling polygon
        sk = s[starts[k] : starts[k] + sizes[k]].tolist()
        pts = poly.tolist()
        m = len(pts)
        kept, cut = [], []
        for i in range(m):
            j = (i + 1) % m
            si, sj = sk[i], sk[j]
            if si <= eps:
                kept.append(pts[i])
            if (si < -eps and sj > eps) or (si > eps and sj < -eps):
                t = si / (si - sj)
                pi, pj = pts[i], pts[j]
                x = [pi[0] + t * (pj[0] - pi[0]), pi[1] + t * (pj[1] - pi[1]), pi[2] + t * (pj[2] - pi[2])]
                kept.append(x)
                cut.append(x)
        if cut:
            cap.append(np.array(cut))
        if len(kept) >= 3:
            out.append((fn, fh, np.array(kept)))
    if out:
        pts = np.concatenate(cap)
        if len(pts) >= 3:
            scale = max(1.0, float(np.abs(pts).max()))
            pts = _dedupe(pts, 1e-10 * scale)
            if len(pts) >= 3:
                out.append((normal, float(offset), _order_polygon(pts, normal)))
    return out


def intersect(a: ConvexPolytope, b: ConvexPolytope) -> ConvexPolytope:
    """Polytope ``a ∩ b`` obtained by clipping ``a`` with every facet of ``b``."""
    if not a.faces or not b.faces:
        return ConvexPolytope(())
    lo_a, hi_a = a.bounds
    lo_b, hi_b = b.bounds
    if np.any(hi_a < lo_b) or np.any(hi_b < lo_a):
        return ConvexPolytope(())
    scale = max(1.0, float(np.abs(np.concatenate([hi_a, lo_a])).max()))
    eps = CLIP_EPS * scale
    faces = list(a.faces)
    for n, h, _ in b.faces:
        s = np.concatenate([poly for _, _, poly in faces]) @ n - h
        if s.max() <= eps:
            continue
        if s.min() >= -eps:
            return ConvexPolytope(())
        faces = _clip(faces, s, n, h, eps)
        if not faces:
            return ConvexPolytope(())
    return ConvexPolytope(tuple(faces))


def intersection_volume(a: ConvexPolytope, b: ConvexPolytope) -> float:
    return intersect(a, b).volume


def iou(a: ConvexPolytope, b: ConvexPolytope) -> float:
    inter = intersection_volume(a, b)
    union = a.volume + b.volume - inter
    if union <= 0:
        return 0.0
    return float(min(max(inter / union, 0.0), 1.0))


def box_iou(a: PoseSize, b: PoseSize) -> float:
    return iou(box_polytope(a), box_polytope(b))


def project_to_so3(m) -> np.ndarray:
    """Closest rotation to ``m`` in Frobenius norm.

    Raises:
        SingularInput: two or more singular values below 1e-9, where the
            projection is not unique.
    """
    m = np.asarray(m, dtype=float).reshape(3, 3)
    if not np.all(np.isfinite(m)):
        raise SingularInput("matrix has non-finite entries")
    u, s, vt = np.linalg.svd(m)
    if np.sum(s < 1e-9) >= 2:
        raise SingularInput(f"singular values {s} leave the projection undetermined")
    d = np.ones(3)
    if np.linalg.det(u @ vt) < 0:
        d[2] = -1.0
    return (u * d) @ vt


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit ``axis`` and ``angle`` in radians."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    k = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)
