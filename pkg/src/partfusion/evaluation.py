"""Shape metrics, detection mAP and joint-parameter errors.

Shape metrics compare world-space point sets (F-score, Chamfer) or
occupancy fields on a regular grid (volumetric IoU). Detection AP uses
greedy confidence-ordered matching and all-point interpolation.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyInput
from .geometry import cuboid_corners
from .losses import point_line_distance
from .shapespace import denormalize_point, isosurface_threshold, world_occupancy
from .types import JointParams, JointType, PartProposal, PoseSize, TruthPart

DEFAULT_CORNER_THRESHOLDS = (0.1, 0.25, 0.5)
DEFAULT_SHAPE_THRESHOLDS = {"fscore": (80.0, 90.0), "chamfer": (5.0, 1.0), "iou": (25.0, 50.0)}
FSCORE_TOL_RATIO = 0.01
SURFACE_SAMPLES = 2048
SURFACE_SEED = 0


def _nn_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from every point in ``a`` to its nearest neighbour in ``b``."""
    return cKDTree(b).query(a, k=1)[0]


def _check_points(*sets):
    out = []
    for pts in sets:
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            raise EmptyInput("point set is empty")
        out.append(pts)
    return out


def fscore(pred_points, gt_points, dist_tol: float) -> float:
    """F-score in [0, 100] at distance tolerance ``dist_tol`` (inclusive)."""
    pred, gt = _check_points(pred_points, gt_points)
    precision = float(np.mean(_nn_distances(pred, gt) <= dist_tol))
    recall = float(np.mean(_nn_distances(gt, pred) <= dist_tol))
    if precision + recall == 0:
        return 0.0
    return 100.0 * 2.0 * precision * recall / (precision + recall)


def chamfer(pred_points, gt_points) -> float:
    """Average of the two directed mean nearest-neighbour L2 distances."""
    pred, gt = _check_points(pred_points, gt_points)
    return 0.5 * float(_nn_distances(pred, gt).mean() + _nn_distances(gt, pred).mean())


def volumetric_iou(pred_occupancy: Callable, gt_occupancy: Callable, bounds, grid: int = 64) -> float:
    """IoU of two occupancy fields sampled at cell centres of a ``grid^3`` lattice.

    Prediction cells count as inside above the isosurface threshold, truth
    cells above 0.5. An empty union gives 0.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in bounds)
    axes = [lo[k] + (np.arange(grid) + 0.5) * (hi[k] - lo[k]) / grid for k in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    pred = np.asarray(pred_occupancy(pts)) > isosurface_threshold()
    gt = np.asarray(gt_occupancy(pts)) > 0.5
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return 0.0
    return np.count_nonzero(pred & gt) / union


def corner_distance(pred: PoseSize, gt: PoseSize) -> float:
    """Mean corresponding-corner L2 distance divided by the truth box diagonal."""
    d = np.linalg.norm(cuboid_corners(pred) - cuboid_corners(gt), axis=1).mean()
    return float(d / np.linalg.norm(gt.size))


# --- matchers -----------------------------------------------------------------


@dataclass(frozen=True)
class CornerDistanceMatcher:
    threshold: float

    higher_is_better = False

    @property
    def name(self) -> str:
        return f"corner@{self.threshold:g}"

    def score(self, pred: PartProposal, truth: TruthPart) -> float:
        return corner_distance(pred.pose, truth.pose)

    def passes(self, score: float) -> bool:
        return score <= self.threshold


class _SurfaceCache:
    """Surface samples per (shape, pose); a fixed seed makes equal shapes give equal points."""

    def __init__(self, n: int = SURFACE_SAMPLES, seed: int = SURFACE_SEED):
        self.n, self.seed = n, seed
        self._normalized: dict[str, np.ndarray] = {}

    def world(self, shape, pose: PoseSize) -> np.ndarray:
        key = getattr(shape, "name", repr(shape))
        if key not in self._normalized:
            pts, _ = shape.sample_surface(self.n, np.random.default_rng(self.seed))
            self._normalized[key] = pts
        pts = self._normalized[key]
        return denormalize_point(pts, pose) if len(pts) else pts


@dataclass
class ShapeMatcher:
    """Shape-metric matcher. Thresholds are percentages: F-score >= t,
    normalized Chamfer <= t/100, volumetric IoU >= t/100."""

    metric: str
    threshold: float
    grid: int = 64
    cache: _SurfaceCache = field(default_factory=_SurfaceCache, repr=False)

    def __post_init__(self):
        if self.metric not in ("fscore", "chamfer", "iou"):
            raise ValueError(f"unknown shape metric {self.metric!r}")

    @property
    def higher_is_better(self) -> bool:
        return self.metric != "chamfer"

    @property
    def name(self) -> str:
        return f"{self.metric}@{self.threshold:g}"

    def score(self, pred: PartProposal, truth: TruthPart) -> float:
        worst = 0.0 if self.higher_is_better else np.inf
        if pred.shape_handle is None or truth.shape is None:
            return worst
        diag = float(np.linalg.norm(truth.pose.size))
        if self.metric == "iou":
            c_pred, c_gt = cuboid_corners(pred.pose), cuboid_corners(truth.pose)
            lo_p, hi_p, lo_g, hi_g = c_pred.min(0), c_pred.max(0), c_gt.min(0), c_gt.max(0)
            if np.any(hi_p < lo_g) or np.any(hi_g < lo_p):
                return 0.0
            bounds = (np.minimum(lo_p, lo_g), np.maximum(hi_p, hi_g))
            return volumetric_iou(world_occupancy(pred.shape_handle, pred.pose),
                                  world_occupancy(truth.shape, truth.pose), bounds, self.grid)
        p = self.cache.world(pred.shape_handle, pred.pose)
        g = self.cache.world(truth.shape, truth.pose)
        if len(p) == 0 or len(g) == 0:
            return worst
        if self.metric == "fscore":
            return fscore(p, g, FSCORE_TOL_RATIO * diag)
        return chamfer(p, g) / diag

    def passes(self, score: float) -> bool:
        if self.metric == "fscore":
            return score >= self.threshold
        if self.metric == "chamfer":
            return score <= self.threshold / 100.0
        return score >= self.threshold / 100.0


# --- detection AP -------------------------------------------------------------


@dataclass
class DetectionResult:
    ap: float
    precision: float
    precision_defined: bool
    tp: int
    fp: int
    fn: int
    matches: list = field(default_factory=list)  # (scene index, pred index, truth index)


def average_precision(tp_flags: Sequence[bool], n_gt: int) -> float:
    """All-point interpolated area under the precision-recall curve.

    ``tp_flags`` must already be ordered by descending confidence.
    """
    if n_gt == 0 or len(tp_flags) == 0:
        return 0.0
    tp = np.cumsum(np.asarray(tp_flags, dtype=float))
    fp = np.cumsum(1.0 - np.asarray(tp_flags, dtype=float))
    recall = tp / n_gt
    precision = tp / (tp + fp)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def detection_map(preds_per_scene: Sequence[Sequence[PartProposal]],
                  truths_per_scene: Sequence[Sequence[TruthPart]], matcher) -> DetectionResult:
    """Greedy matching in descending objectness; each truth is matched at most once.

    A prediction takes the best-scoring still-unmatched truth of its scene
    among those passing the matcher criterion, otherwise it is a false
    positive.
    """
    if len(preds_per_scene) != len(truths_per_scene):
        raise ValueError("predictions and truths must cover the same scenes")
    order = sorted(
        ((s, i) for s, preds in enumerate(preds_per_scene) for i in range(len(preds))),
        key=lambda si: -preds_per_scene[si[0]][si[1]].objectness,
    )
    matched = [np.zeros(len(t), dtype=bool) for t in truths_per_scene]
    flags, matches = [], []
    for s, i in order:
        pred = preds_per_scene[s][i]
        best, best_score = -1, None
        for g, truth in enumerate(truths_per_scene[s]):
            if matched[s][g]:
                continue
            score = matcher.score(pred, truth)
            if not matcher.passes(score):
                continue
            better = best_score is None or (score > best_score if matcher.higher_is_better else score < best_score)
            if better:
                best, best_score = g, score
        if best >= 0:
            matched[s][best] = True
            matches.append((s, i, best))
        flags.append(best >= 0)
    n_gt = sum(len(t) for t in truths_per_scene)
    tp = int(sum(flags))
    fp = len(flags) - tp
    defined = len(flags) > 0
    return DetectionResult(
        ap=average_precision(flags, n_gt),
        precision=tp / len(flags) if defined else 0.0,
        precision_defined=defined,
        tp=tp, fp=fp, fn=n_gt - tp, matches=matches,
    )


# --- joint errors -------------------------------------------------------------


def line_distance(p1, d1, p2, d2) -> float:
    """Minimum distance between two infinite lines."""
    d1 = np.asarray(d1, dtype=float) / np.linalg.norm(d1)
    d2 = np.asarray(d2, dtype=float) / np.linalg.norm(d2)
    cross = np.cross(d1, d2)
    norm = np.linalg.norm(cross)
    rel = np.asarray(p2, dtype=float) - np.asarray(p1, dtype=float)
    if norm < 1e-12:
        return point_line_distance(p2, p1, d1)
    return float(abs(rel @ cross) / norm)


def joint_error(pred: JointParams, gt: JointParams, fold_axis: bool = False) -> tuple[float, float, float]:
    """``(State, OE, MD)`` for one matched pair.

    State is in degrees for revolute and centimeters for prismatic joints,
    OE in degrees, MD in centimeters (revolute only, else 0). Fixed joints
    give zeros for State.
    """
    if gt.joint_type == JointType.REVOLUTE:
        state = abs(np.degrees(pred.state_current - gt.state_current))
    elif gt.joint_type == JointType.PRISMATIC:
        state = abs(pred.state_current - gt.state_current) * 100.0
    else:
        state = 0.0
    cos = float(np.clip(pred.axis @ gt.axis / (np.linalg.norm(pred.axis) * np.linalg.norm(gt.axis)), -1.0, 1.0))
    oe = float(np.degrees(np.arccos(cos)))
    if fold_axis:
        oe = min(oe, 180.0 - oe)
    md = 0.0
    if gt.joint_type == JointType.REVOLUTE:
        md = 100.0 * line_distance(pred.origin, pred.axis, gt.origin, gt.axis)
    return float(state), oe, md


@dataclass
class JointErrorStats:
    count: int = 0
    state: float = 0.0
    oe: float = 0.0
    md: float = 0.0


def joint_errors(pairs: Sequence[tuple[JointParams, JointParams]], fold_axis: bool = False) -> dict[str, JointErrorStats]:
    """Mean (State, OE, MD) per ground-truth joint type over matched pairs."""
    sums: dict[str, list] = {}
    for pred, gt in pairs:
        if gt.joint_type == JointType.FIXED:
            continue
        key = gt.joint_type.name.lower()
        sums.setdefault(key, []).append(joint_error(pred, gt, fold_axis))
    out = {}
    for key, rows in sorted(sums.items()):
        arr = np.array(rows)
        out[key] = JointErrorStats(len(rows), *(float(x) for x in arr.mean(axis=0)))
    return out


# --- report -------------------------------------------------------------------


@dataclass
class EvalReport:
    ap: dict = field(default_factory=dict)
    precision: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    joints: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ap": self.ap,
            "precision": self.precision,
            "counts": self.counts,
            "joints": {k: vars(v) for k, v in self.joints.items()},
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def detection_csv(self) -> str:
        """One row per metric@threshold: AP, precision and counts (percent scale)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "ap", "precision", "tp", "fp", "fn"])
        for key in sorted(self.ap):
            c = self.counts.get(key, {})
            writer.writerow([key, f"{100 * self.ap[key]:.4f}", f"{100 * self.precision[key]:.4f}",
                             c.get("tp", 0), c.get("fp", 0), c.get("fn", 0)])
        return buf.getvalue()

    def kinematics_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["joint_type", "count", "state", "oe_deg", "md_cm"])
        for key in sorted(self.joints):
            s = self.joints[key]
            writer.writerow([key, s.count, f"{s.state:.6f}", f"{s.oe:.6f}", f"{s.md:.6f}"])
        return buf.getvalue()


def evaluate(preds_per_scene, truths_per_scene, corner_thresholds=DEFAULT_CORNER_THRESHOLDS,
             shape_thresholds: Optional[dict] = None, kinematic_threshold: float = 0.7,
             fold_axis: bool = False, grid: int = 64) -> EvalReport:
    """Full metric suite over a set of scenes.

    ``shape_thresholds`` maps metric name to percentage thresholds; pass an
    empty dict to skip shape metrics. Joint errors use the pairs matched at
    corner distance ``kinematic_threshold``.
    """
    shape_thresholds = DEFAULT_SHAPE_THRESHOLDS if shape_thresholds is None else shape_thresholds
    report = EvalReport(metadata={
        "corner_thresholds": list(corner_thresholds),
        "shape_thresholds": {k: list(v) for k, v in shape_thresholds.items()},
        "fscore_tol": f"{FSCORE_TOL_RATIO} x truth part box diagonal",
        "chamfer_normalization": "truth part box diagonal",
        "volumetric_grid": grid,
        "kinematic_threshold": kinematic_threshold,
        "fold_axis": fold_axis,
        "ap_interpolation": "all-point",
        "n_scenes": len(truths_per_scene),
    })
    matchers = [CornerDistanceMatcher(t) for t in corner_thresholds]
    cache = _SurfaceCache()
    for metric, thresholds in shape_thresholds.items():
        matchers.extend(ShapeMatcher(metric, t, grid, cache) for t in thresholds)
    for m in matchers:
        res = detection_map(preds_per_scene, truths_per_scene, m)
        report.ap[m.name] = res.ap
        report.precision[m.name] = res.precision
        report.counts[m.name] = {"tp": res.tp, "fp": res.fp, "fn": res.fn,
                                 "precision_defined": res.precision_defined}
    kin = detection_map(preds_per_scene, truths_per_scene, CornerDistanceMatcher(kinematic_threshold))
    pairs = [(preds_per_scene[s][i].joint, truths_per_scene[s][g].joint) for s, i, g in kin.matches]
    report.joints = joint_errors(pairs, fold_axis)
    return report
