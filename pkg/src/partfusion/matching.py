"""Prediction-to-truth matching cost and an exact rectangular assignment solver."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .geometry import cuboid_corners
from .types import BACKGROUND, PartProposal, TruthPart


@dataclass(frozen=True)
class MatchCostWeights:
    lambda1: float = 8.0
    lambda2: float = 10.0
    lambda3: float = 1.0
    lambda4: float = 5.0

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3, self.lambda4) < 0:
            raise ValueError("matching weights must be non-negative")


def corner_l1(a, b) -> float:
    """Mean over the 8 ordered corners of the per-corner L1 distance."""
    return float(np.abs(cuboid_corners(a) - cuboid_corners(b)).sum(axis=1).mean())


def match_cost(pred: PartProposal, truth: TruthPart, w: MatchCostWeights = MatchCostWeights()) -> float:
    corners = corner_l1(pred.pose, truth.pose)
    center = float(np.abs(pred.pose.center - truth.pose.center).sum())
    p_type = float(pred.joint_type_probs[int(truth.joint.joint_type)])
    foreground = 1.0 - float(pred.joint_type_probs[BACKGROUND])
    return w.lambda1 * corners + w.lambda2 * center - w.lambda3 * p_type + w.lambda4 * foreground


def cost_matrix(preds, truths, w: MatchCostWeights = MatchCostWeights()) -> np.ndarray:
    """``(N_pred, N_gt)`` matrix of matching costs."""
    return np.array([[match_cost(p, t, w) for t in truths] for p in preds]).reshape(len(preds), len(truths))


def hungarian_match(costs) -> np.ndarray:
    """Minimum-cost assignment of every ground-truth column to a distinct prediction row.

    Shortest-augmenting-path Hungarian method with dual potentials, O(n^2 m).
    Candidate columns are scanned in ascending index with strict comparisons,
    so among equal reduced costs the lowest prediction index wins and the
    result is bit-deterministic.

    Returns:
        Integer array of length ``N_gt``; entry ``g`` is the prediction row
        assigned to ground truth ``g``.

    Raises:
        ShapeError: fewer predictions than ground-truth parts.
    """
    costs = np.asarray(costs, dtype=float)
    if costs.ndim != 2:
        raise ShapeError("cost matrix must be 2-D")
    n_pred, n_gt = costs.shape
    if n_pred < n_gt:
        raise ShapeError(f"{n_pred} predictions cannot cover {n_gt} ground-truth parts")
    if n_gt == 0:
        return np.zeros(0, dtype=int)
    if not np.all(np.isfinite(costs)):
        raise ValueError("costs must be finite")

    # rows = ground truth (n), columns = predictions (m), 1-based with a virtual column 0
    a = costs.T
    n, m = n_gt, n_pred
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    owner = np.zeros(m + 1, dtype=int)  # owner[j]: row matched to column j (0 = free)
    way = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            cur = a[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1  # argmin returns the first minimum
            delta = cand[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1

    assignment = np.full(n, -1, dtype=int)
    for j in range(1, m + 1):
        if owner[j]:
            assignment[owner[j] - 1] = j - 1
    return assignment


def assignment_cost(costs, assignment) -> float:
    costs = np.asarray(costs, dtype=float)
    return float(sum(costs[p, g] for g, p in enumerate(assignment)))
