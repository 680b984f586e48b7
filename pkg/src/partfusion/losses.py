"""Reference values of the per-part, instance and total training losses.

Everything here is value-only numerics (no gradients). Probabilities, not
logits, are the inputs; logarithms clamp their arguments to
``[PROB_CLAMP, 1 - PROB_CLAMP]``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateInput, ShapeError
from .geometry import cuboid_corners
from .types import JointType, PartProposal, PoseSize, TruthPart

PROB_CLAMP = 1e-7
LAMBDA_INTRA = 0.1


@dataclass(frozen=True)
class OccupancySample:
    point: np.ndarray
    predicted: float
    truth: int


@dataclass(frozen=True)
class PartLoss:
    corners: float = 0.0
    rotation: float = 0.0
    occupancy: float = 0.0
    state_max: float = 0.0
    state_current: float = 0.0
    axis: float = 0.0
    origin: float = 0.0
    joint_type: float = 0.0
    category: float = 0.0

    @property
    def total(self) -> float:
        return float(sum(asdict(self).values()))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["total"] = self.total
        return d


def _clamped_log(p: float) -> float:
    return float(np.log(np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)))


def bce(predicted, truth) -> float:
    """Mean binary cross-entropy of predicted occupancies against 0/1 labels."""
    p = np.clip(np.asarray(predicted, dtype=float), PROB_CLAMP, 1.0 - PROB_CLAMP)
    t = np.asarray(truth, dtype=float)
    if p.size == 0:
        return 0.0
    return float(np.mean(-(t * np.log(p) + (1.0 - t) * np.log1p(-p))))


def disentangled_corner_l1(pred: PoseSize, truth: PoseSize) -> float:
    """Corner L1 (summed over corners and coordinates), once per predicted component."""
    gt = cuboid_corners(truth)
    variants = (
        PoseSize(pred.rotation, truth.center, truth.size),
        PoseSize(truth.rotation, pred.center, truth.size),
        PoseSize(truth.rotation, truth.center, pred.size),
    )
    return float(sum(np.abs(cuboid_corners(v) - gt).sum() for v in variants))


def point_line_distance(point, line_point, line_dir) -> float:
    d = np.asarray(line_dir, dtype=float)
    d = d / np.linalg.norm(d)
    rel = np.asarray(point, dtype=float) - np.asarray(line_point, dtype=float)
    return float(np.linalg.norm(rel - (rel @ d) * d))


def part_loss(pred: PartProposal, truth: TruthPart, occ: Sequence[OccupancySample] = (),
              unrefined: bool = False) -> PartLoss:
    """Per-term loss of one matched (prediction, truth) pair, equal weights.

    With ``unrefined=True`` the occupancy, joint-type and category terms are
    left out, which is the variant applied to pre-refinement predictions.
    """
    tp, tj = truth.pose, truth.joint
    corners = disentangled_corner_l1(pred.pose, tp)
    rotation = float(np.sum((np.eye(3) - pred.pose.rotation.T @ tp.rotation) ** 2))
    state_max = state_current = origin = 0.0
    if tj.joint_type != JointType.FIXED:
        state_max = abs(pred.joint.state_max - tj.state_max)
        state_current = abs(pred.joint.state_current - tj.state_current)
    if tj.joint_type == JointType.REVOLUTE:
        origin = point_line_distance(pred.joint.origin, tj.origin, tj.axis)
    axis = -float(pred.joint.axis @ tj.axis)
    if unrefined:
        return PartLoss(corners, rotation, 0.0, state_max, state_current, axis, origin)
    occupancy = bce([s.predicted for s in occ], [s.truth for s in occ])
    joint_type = -_clamped_log(pred.joint_type_probs[int(tj.joint_type)])
    category = -_clamped_log(pred.category_probs[truth.category])
    return PartLoss(corners, rotation, occupancy, state_max, state_current, axis, origin, joint_type, category)


def tau_z(tau_z_prime: float) -> float:
    """Inference-time grouping threshold, midway between the intra and inter margins."""
    if tau_z_prime <= 0:
        raise ValueError("tau_z_prime must be positive")
    return 2.0 * tau_z_prime


def instance_loss(embeddings, instance_ids, tau_z_prime: float, lambda_intra: float = LAMBDA_INTRA,
                  soft: bool = True) -> float:
    """Intra-instance hinge plus the inter-instance margin term.

    ``soft=True`` uses LogSumExp for the largest intra distance and
    ``-LogSumExp(-x)`` for the smallest inter distance; ``soft=False`` uses
    the hard max/min. For a part alone in its instance the largest intra
    distance is taken as 0 (its distance to itself). Parts with no other
    instance present contribute nothing to the margin term.

    Raises:
        DegenerateInput: fewer than two parts.
    """
    z = np.asarray(embeddings, dtype=float)
    ids = np.asarray(instance_ids)
    n = len(z)
    if n < 2:
        raise DegenerateInput("instance loss needs at least two parts")
    if len(ids) != n:
        raise ShapeError("one instance id per embedding required")
    eta = np.linalg.norm(z[:, None, :] - z[None, :, :], axis=2)
    same = ids[:, None] == ids[None, :]
    off_diag = ~np.eye(n, dtype=bool)

    intra = 0.0
    margin = 0.0
    for i in range(n):
        mates = same[i] & off_diag[i]
        group_size = int(same[i].sum())
        intra += np.maximum(eta[i, mates] - tau_z_prime, 0.0).sum() / group_size
        others = ~same[i]
        if not others.any():
            continue
        if mates.any():
            upper = logsumexp(eta[i, mates]) if soft else eta[i, mates].max()
        else:
            upper = 0.0
        lower = -logsumexp(-eta[i, others]) if soft else eta[i, others].min()
        margin += max(upper - lower + 3.0 * tau_z_prime, 0.0)
    return float(lambda_intra * intra + margin / n)


def total_loss(part_losses: Sequence, unrefined_losses: Sequence, instance_losses: Sequence) -> float:
    """Sum over decoder layers of refined, unrefined and instance losses.

    Entries may be floats or :class:`PartLoss` objects.

    Raises:
        ShapeError: the three per-layer lists differ in length.
    """
    if not len(part_losses) == len(unrefined_losses) == len(instance_losses):
        raise ShapeError("per-layer loss lists must be aligned")

    def value(x):
        return x.total if isinstance(x, PartLoss) else float(x)

    return float(sum(value(a) + value(b) + value(c) for a, b, c in zip(part_losses, unrefined_losses, instance_losses)))
