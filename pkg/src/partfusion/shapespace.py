"""Per-part normalized shape space, analytic shapes and occupancy sampling.

A part's normalized frame maps its box onto ``[-0.5, 0.5]^3`` through
``x = (R S)^-1 (p - c)`` with ``S = diag(size)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import SingularScale
from .losses import PROB_CLAMP, OccupancySample
from .types import PoseSize

MIN_SCALE = 1e-9
NORMALIZED_HALF = 0.5
# slack on the inclusive boundary so a part's own corners survive round-off
RETAIN_TOL = 1e-12


def isosurface_threshold() -> float:
    """Occupancy level of the surface: logistic(-0.5) ≈ 0.3775."""
    return float(1.0 / (1.0 + np.exp(0.5)))


def normalize_points(points, pose: PoseSize) -> tuple[np.ndarray, np.ndarray]:
    """Map world points into the part's normalized frame.

    Returns:
        ``(retained, mask)``: normalized coordinates of the points whose
        largest absolute coordinate is at most 0.5 (plus ``RETAIN_TOL``),
        and the boolean mask
        selecting them from the input.

    Raises:
        SingularScale: a size component below 1e-9.
    """
    if np.any(pose.size < MIN_SCALE):
        raise SingularScale(f"size {pose.size} too small to invert")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    local = ((pts - pose.center) @ pose.rotation) / pose.size
    mask = np.max(np.abs(local), axis=1) <= NORMALIZED_HALF + RETAIN_TOL
    return local[mask], mask


def to_normalized(points, pose: PoseSize) -> np.ndarray:
    """Unfiltered normalized coordinates (used for occupancy queries)."""
    if np.any(pose.size < MIN_SCALE):
        raise SingularScale(f"size {pose.size} too small to invert")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return ((pts - pose.center) @ pose.rotation) / pose.size


def denormalize_point(x, pose: PoseSize) -> np.ndarray:
    """Inverse map ``x -> R S x + c``; accepts one point or an (N, 3) array."""
    x = np.asarray(x, dtype=float)
    return (x * pose.size) @ pose.rotation.T + pose.center


# --- analytic shapes in normalized coordinates -------------------------------


@dataclass(frozen=True)
class BoxShape:
    """Axis-aligned box ``[lo, hi]`` inside the normalized cube."""

    lo: tuple = (-0.5, -0.5, -0.5)
    hi: tuple = (0.5, 0.5, 0.5)
    name: str = "box"

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        inside = np.all((x >= np.array(self.lo)) & (x <= np.array(self.hi)), axis=1)
        return inside.astype(float)

    def area_weights(self) -> np.ndarray:
        e = np.array(self.hi) - np.array(self.lo)
        face = np.array([e[1] * e[2], e[0] * e[2], e[0] * e[1]])
        return np.repeat(face, 2)

    def sample_surface(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Area-uniform surface points and outward normals."""
        lo, hi = np.array(self.lo), np.array(self.hi)
        w = self.area_weights()
        face = rng.choice(6, size=n, p=w / w.sum())
        pts = rng.uniform(lo, hi, size=(n, 3))
        axis = face // 2
        upper = face % 2 == 1
        pts[np.arange(n), axis] = np.where(upper, hi[axis], lo[axis])
        normals = np.zeros((n, 3))
        normals[np.arange(n), axis] = np.where(upper, 1.0, -1.0)
        return pts, normals


@dataclass(frozen=True)
class UnionShape:
    """Union of boxes, e.g. an L-shape; surface points on shared walls are rejected."""

    boxes: tuple
    name: str = "union"

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.max([b(x) for b in self.boxes], axis=0)

    def _strictly_inside(self, x, box: BoxShape) -> np.ndarray:
        lo, hi = np.array(box.lo), np.array(box.hi)
        return np.all((x > lo + 1e-12) & (x < hi - 1e-12), axis=1)

    def sample_surface(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        pts_out, nrm_out = [], []
        count = 0
        while count < n:
            for k, box in enumerate(self.boxes):
                pts, nrm = box.sample_surface(n, rng)
                keep = np.ones(len(pts), dtype=bool)
                for j, other in enumerate(self.boxes):
                    if j != k:
                        # probe just outside the wall: inside another box means an interior wall
                        keep &= other(pts + 1e-9 * nrm) == 0
                        keep &= ~self._strictly_inside(pts, other)
                pts_out.append(pts[keep])
                nrm_out.append(nrm[keep])
                count += int(keep.sum())
        pts, nrm = np.concatenate(pts_out), np.concatenate(nrm_out)
        idx = rng.permutation(len(pts))[:n]
        return pts[idx], nrm[idx]


@dataclass(frozen=True)
class EmptyShape:
    name: str = "empty"

    def __call__(self, x) -> np.ndarray:
        return np.zeros(len(np.atleast_2d(x)))

    def sample_surface(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros((0, 3)), np.zeros((0, 3))


def l_shape() -> UnionShape:
    return UnionShape(
        (BoxShape((-0.5, -0.5, -0.5), (0.5, 0.5, 0.0)), BoxShape((-0.5, -0.5, 0.0), (0.0, 0.5, 0.5))),
        name="lshape",
    )


SHAPES: dict[str, Callable[[], object]] = {
    "box": BoxShape,
    "lshape": l_shape,
    "empty": EmptyShape,
    "halfbox": lambda: BoxShape((-0.5, -0.5, -0.5), (0.0, 0.5, 0.5), name="halfbox"),
}


def shape_by_name(name: Optional[str]):
    if name is None:
        return None
    try:
        return SHAPES[name]()
    except KeyError:
        raise ValueError(f"unknown shape {name!r}") from None


def world_occupancy(shape, pose: PoseSize) -> Callable[[np.ndarray], np.ndarray]:
    """Occupancy of ``shape`` placed at ``pose``, queried with world points."""
    def query(points):
        return shape(to_normalized(points, pose))
    return query


def world_surface(shape, pose: PoseSize, n: int, rng: np.random.Generator) -> np.ndarray:
    pts, _ = shape.sample_surface(n, rng)
    return denormalize_point(pts, pose) if len(pts) else pts


def sample_occupancy_points(shape, rng: np.random.Generator, count: int = 128,
                            predict: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> list[OccupancySample]:
    """Occupancy training samples in normalized space.

    Half the points are uniform in the unit cube, a quarter are surface
    points offset along the normal with sigma 0.1 and a quarter with sigma
    0.01. Labels come from ``shape``; predictions come from ``predict``
    (defaults to the labels), clamped into the open interval (0, 1).
    Shapes without surface fall back to uniform points.
    """
    n_uniform = count // 2
    n_coarse = count // 4
    n_fine = count - n_uniform - n_coarse
    parts = [rng.uniform(-0.5, 0.5, size=(n_uniform, 3))]
    for n, sigma in ((n_coarse, 0.1), (n_fine, 0.01)):
        surf, normals = shape.sample_surface(n, rng)
        if len(surf) == 0:
            parts.append(rng.uniform(-0.5, 0.5, size=(n, 3)))
        else:
            parts.append(surf + normals * rng.normal(0.0, sigma, size=(n, 1)))
    pts = np.concatenate(parts)
    truth = (shape(pts) > 0.5).astype(int)
    pred = truth.astype(float) if predict is None else np.asarray(predict(pts), dtype=float)
    pred = np.clip(pred, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return [OccupancySample(p, float(q), int(t)) for p, q, t in zip(pts, pred, truth)]
