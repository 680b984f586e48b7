"""Non-maximum suppression, part fusion and the kinematics-aware fusion driver.

The driver consumes proposals from several independent inference runs,
suppresses duplicates inside each run, then repeatedly clusters the pooled
proposals by swept-hull overlap and replaces every cluster with its
objectness-weighted average.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, fields
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import AllZeroWeights
from .geometry import ConvexPolytope, box_polytope, iou, project_to_so3
from .kinematics import swept_hull
from .types import BACKGROUND, JointParams, JointType, PartProposal, PoseSize

log = logging.getLogger(__name__)

SAME_TOL = 1e-9


@dataclass(frozen=True)
class KpfConfig:
    tau_iou: float = 0.25
    tau_obj: float = 0.25
    tau_obj_final: float = 0.25
    tau_kiou: float = 0.5
    tau_scaled: float = 0.1
    tau_count: int = 3
    n_q: int = 10

    def __post_init__(self):
        for name in ("tau_iou", "tau_obj", "tau_obj_final", "tau_kiou", "tau_scaled"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if self.tau_count < 1 or self.n_q < 1:
            raise ValueError("tau_count and n_q must be >= 1")

    @classmethod
    def from_mapping(cls, values: Mapping) -> "KpfConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown KpfConfig keys: {sorted(unknown)}")
        return cls(**values)


class Overlap(enum.Enum):
    BOX_IOU = "box"
    KIOU = "kiou"


class _HullCache:
    """Polytopes per proposal object, valid while the proposals are alive."""

    def __init__(self, overlap: Overlap):
        self.overlap = overlap
        self._store: dict[int, tuple[PartProposal, ConvexPolytope]] = {}

    def __call__(self, p: PartProposal) -> ConvexPolytope:
        hit = self._store.get(id(p))
        if hit is not None and hit[0] is p:
            return hit[1]
        if self.overlap is Overlap.KIOU:
            poly = swept_hull(p.pose, p.joint).hull
        else:
            poly = box_polytope(p.pose)
        self._store[id(p)] = (p, poly)
        return poly

    def overlap_of(self, a: PartProposal, b: PartProposal) -> float:
        return iou(self(a), self(b))


def _by_objectness(proposals: Iterable[PartProposal]) -> list[PartProposal]:
    return sorted(proposals, key=lambda p: -p.objectness)


def nms(proposals: Sequence[PartProposal], threshold: float, overlap: Overlap = Overlap.BOX_IOU,
        cache: _HullCache | None = None) -> list[PartProposal]:
    """Greedy suppression in descending objectness.

    A proposal is kept iff its overlap with every already-kept proposal is
    below ``threshold``. Ties in objectness keep input order.
    """
    cache = cache or _HullCache(overlap)
    kept: list[PartProposal] = []
    for p in _by_objectness(proposals):
        if all(cache.overlap_of(p, k) < threshold for k in kept):
            kept.append(p)
    return kept


def weighted_average(members: Sequence[PartProposal]) -> PartProposal:
    """Objectness-weighted mean of every proposal field.

    Rotations are averaged as 3x3 matrices and projected back onto SO(3);
    the axis is renormalized and probability vectors are renormalized to
    sum to one. The fused joint type is the most probable foreground class
    of the averaged joint-type distribution.

    Raises:
        AllZeroWeights: every member has zero objectness.
    """
    if not members:
        raise ValueError("weighted_average needs at least one member")
    w = np.array([max(m.objectness, 0.0) for m in members])
    if w.sum() <= 0:
        raise AllZeroWeights("all members have zero objectness")
    w = w / w.sum()
    if len(members) == 1:
        return members[0]

    def mean(get):
        return np.tensordot(w, np.array([get(m) for m in members]), axes=1)

    rotation = project_to_so3(mean(lambda m: m.pose.rotation))
    pose = PoseSize(rotation, mean(lambda m: m.pose.center), mean(lambda m: m.pose.size))

    jt_probs = mean(lambda m: m.joint_type_probs)
    jt_probs = jt_probs / jt_probs.sum()
    cat_probs = mean(lambda m: m.category_probs)
    cat_probs = cat_probs / cat_probs.sum()

    axis = mean(lambda m: m.joint.axis)
    norm = np.linalg.norm(axis)
    axis = axis / norm if norm > 1e-12 else members[int(np.argmax(w))].joint.axis
    state_max = float(mean(lambda m: m.joint.state_max))
    state_current = float(np.clip(mean(lambda m: m.joint.state_current), 0.0, max(state_max, 0.0)))
    joint = JointParams(
        JointType(int(np.argmax(jt_probs[:BACKGROUND]))),
        axis,
        mean(lambda m: m.joint.origin),
        state_current,
        state_max,
    )
    lead = members[int(np.argmax(w))]
    return PartProposal(pose, joint, jt_probs, cat_probs, mean(lambda m: m.embedding), lead.shape_handle)


@dataclass
class FusionCluster:
    members: list = field(default_factory=list)
    representative: PartProposal | None = None
    scaled_objectness: float = 0.0


def pf_clusters(proposals: Sequence[PartProposal], t: int, cfg: KpfConfig,
                overlap: Overlap = Overlap.KIOU, cache: _HullCache | None = None) -> list[FusionCluster]:
    """Clustering step of part fusion; representatives are not yet rescaled."""
    if t < 1:
        raise ValueError("t must be >= 1")
    cache = cache or _HullCache(overlap)
    clusters: list[FusionCluster] = []
    for x in _by_objectness(proposals):
        for cluster in clusters:
            # first match wins, as in a break-on-match scan
            if cache.overlap_of(x, cluster.representative) > cfg.tau_kiou:
                cluster.members.append(x)
                cluster.representative = weighted_average(cluster.members)
                break
        else:
            clusters.append(FusionCluster([x], x))
    for cluster in clusters:
        scaled = cluster.representative.objectness * len(cluster.members) / t
        cluster.scaled_objectness = min(scaled, 1.0)
    return clusters


def pf_kiou(proposals: Sequence[PartProposal], t: int, cfg: KpfConfig,
            overlap: Overlap = Overlap.KIOU, cache: _HullCache | None = None) -> list[PartProposal]:
    """One part-fusion pass: cluster, average, rescale objectness by ``|C| / t``, filter."""
    out = []
    for cluster in pf_clusters(proposals, t, cfg, overlap, cache):
        if cluster.scaled_objectness > cfg.tau_scaled:
            out.append(cluster.representative.with_objectness(cluster.scaled_objectness))
    return out


def _field_vector(p: PartProposal) -> np.ndarray:
    j = p.joint
    return np.concatenate([
        p.pose.rotation.ravel(), p.pose.center, p.pose.size,
        [float(j.joint_type), j.state_current, j.state_max], j.axis, j.origin,
        p.joint_type_probs, p.category_probs, p.embedding,
    ])


def same_proposals(a: Sequence[PartProposal], b: Sequence[PartProposal], tol: float = SAME_TOL) -> bool:
    """Set equality up to ``tol`` per field, after sorting by objectness."""
    if len(a) != len(b):
        return False
    for p, q in zip(_by_objectness(a), _by_objectness(b)):
        u, v = _field_vector(p), _field_vector(q)
        if u.shape != v.shape or np.max(np.abs(u - v)) > tol:
            return False
    return True


def preprocess_run(run: Sequence[PartProposal], cfg: KpfConfig, overlap: Overlap = Overlap.KIOU) -> list[PartProposal]:
    """Per-run box NMS, objectness filter, then NMS under ``overlap``."""
    kept = nms(run, cfg.tau_iou, Overlap.BOX_IOU)
    kept = [p for p in kept if p.objectness > cfg.tau_obj]
    if overlap is Overlap.KIOU:
        kept = nms(kept, cfg.tau_iou, Overlap.KIOU)
    return kept


def kpf(runs: Sequence[Sequence[PartProposal]], cfg: KpfConfig = KpfConfig(),
        overlap: Overlap = Overlap.KIOU, fuse: bool = True) -> list[PartProposal]:
    """Fuse proposals pooled from ``cfg.n_q`` independent runs.

    ``overlap=Overlap.BOX_IOU`` replaces every swept-hull overlap with plain
    box IoU; ``fuse=False`` skips part fusion and only pools the per-run
    survivors. Both exist for ablations.
    """
    if not runs:
        return []
    if len(runs) != cfg.n_q:
        raise ValueError(f"expected {cfg.n_q} runs, got {len(runs)}")
    pooled: list[PartProposal] = []
    for run in runs:
        pooled.extend(preprocess_run(run, cfg, overlap))
    if fuse:
        cache = _HullCache(overlap)
        t = cfg.n_q
        for count in range(1, cfg.tau_count + 1):
            fused = pf_kiou(pooled, t, cfg, overlap, cache)
            done = same_proposals(fused, pooled)
            pooled = fused
            t = 1
            if done:
                log.debug("fusion converged after %d passes", count)
                break
    return [p for p in _by_objectness(pooled) if p.objectness > cfg.tau_obj_final]


def nms_baseline(run: Sequence[PartProposal], cfg: KpfConfig = KpfConfig()) -> list[PartProposal]:
    """Single-run pipeline without oversampling or fusion: box NMS and objectness filter."""
    kept = nms(run, cfg.tau_iou, Overlap.BOX_IOU)
    return [p for p in kept if p.objectness > cfg.tau_obj]
