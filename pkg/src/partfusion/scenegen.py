"""Synthetic articulated scenes and simulated multi-run detector output.

Each instance is a fixed base block at the rear of a cabinet envelope with
doors (revolute, hinged on a front edge) and drawers (prismatic, sliding out
of the front face) stacked in rows in front of it. Part embeddings are placed so that parts of one
instance are closer than ``tau_z_prime`` and parts of different instances
are farther apart than ``3 * tau_z_prime`` plus a LogSumExp slack.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Mapping, Optional

import numpy as np

from .geometry import rotation_about_axis
from .kinematics import pose_at_state
from .shapespace import BoxShape, l_shape
from .types import (BACKGROUND, EMBED_DIM, JointParams, JointType, PartProposal, PoseSize, SceneTruth,
                    TruthPart)

DOOR_THICKNESS = 0.02
NEAR_MISS_ANGLE = math.radians(10.0)
THIN = 0.05

CATEGORIES = ("cabinet", "refrigerator", "drawer_unit", "oven")


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    n_instances: Optional[int] = None  # None: uniform in [1, 4]
    parts_min: int = 1
    parts_max: int = 3
    p_revolute: float = 0.5
    n_categories: int = len(CATEGORIES)
    embed_dim: int = EMBED_DIM
    tau_z_prime: float = 1.0
    # proposal noise
    center_sigma: float = 0.01
    rotation_sigma: float = 0.02
    size_sigma: float = 0.02
    state_sigma: float = 0.02
    axis_sigma: float = 0.02
    origin_sigma: float = 0.01
    embedding_sigma: float = 0.05
    objectness_sigma: float = 0.1
    category_sigma: float = 0.1
    # simulated query oversampling
    n_runs: int = 10
    fn_rate: float = 0.3
    fp_rate: float = 0.2
    dup_rate: float = 0.3

    def __post_init__(self):
        for name in ("fn_rate", "fp_rate", "dup_rate", "p_revolute"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for f in fields(self):
            if f.name.endswith("_sigma") and getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be non-negative")
        if self.n_instances is not None and not 1 <= self.n_instances <= 4:
            raise ValueError("n_instances must lie in [1, 4]")
        if not 1 <= self.parts_min <= self.parts_max <= 6:
            raise ValueError("need 1 <= parts_min <= parts_max <= 6")
        if self.n_runs < 1 or self.tau_z_prime <= 0:
            raise ValueError("n_runs must be >= 1 and tau_z_prime > 0")

    @classmethod
    def from_mapping(cls, values: Mapping) -> "GenConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown GenConfig keys: {sorted(unknown)}")
        return cls(**values)

    def noiseless(self) -> "GenConfig":
        zeros = {f.name: 0.0 for f in fields(self) if f.name.endswith("_sigma")}
        return GenConfig(**{**asdict(self), **zeros, "fn_rate": 0.0, "fp_rate": 0.0, "dup_rate": 0.0})


def _place(local: PoseSize, rot: np.ndarray, trans: np.ndarray) -> PoseSize:
    return PoseSize(rot @ local.rotation, rot @ local.center + trans, local.size)


def _instance_parts(rng: np.random.Generator, cfg: GenConfig):
    """Local-frame (closed pose, joint at state 0, shape) triples plus category id."""
    sx, sy, sz = rng.uniform(0.4, 0.8), rng.uniform(0.5, 1.2), rng.uniform(0.5, 1.5)
    # the base is the rear block of the cabinet envelope; closed drawers fill the front
    parts = [(PoseSize(np.eye(3), (-0.3 * sx, 0.0, 0.0), (0.4 * sx, sy, sz)), JointParams.fixed(), BoxShape())]
    k = int(rng.integers(cfg.parts_min, cfg.parts_max + 1))
    h = sz / k
    kinds = ["door" if rng.random() < cfg.p_revolute else "drawer" for _ in range(k)]
    bottom_hinged = k == 1 and kinds[0] == "door" and rng.random() < 0.5
    for i, kind in enumerate(kinds):
        zc = -sz / 2 + (i + 0.5) * h
        if kind == "door":
            size = (DOOR_THICKNESS, 0.96 * sy, 0.96 * h)
            center = np.array([sx / 2 + DOOR_THICKNESS / 2, 0.0, zc])
            if bottom_hinged:
                axis, origin = (0.0, 1.0, 0.0), (sx / 2, 0.0, zc - 0.48 * h)
                dmax = rng.uniform(math.pi / 3, math.pi / 2)
            else:
                axis, origin = (0.0, 0.0, -1.0), (sx / 2, -0.48 * sy, zc)
                dmax = rng.uniform(math.pi / 2, 0.75 * math.pi)
            joint = JointParams(JointType.REVOLUTE, axis, origin, 0.0, dmax)
            shape = BoxShape()
        else:
            size = (0.55 * sx, 0.96 * sy, 0.96 * h)
            center = np.array([sx / 2 - 0.275 * sx, 0.0, zc])
            joint = JointParams(JointType.PRISMATIC, (1.0, 0.0, 0.0), center, 0.0, 0.8 * size[0])
            shape = l_shape() if rng.random() < 0.3 else BoxShape()
        parts.append((PoseSize(np.eye(3), center, size), joint, shape))
    if bottom_hinged:
        category = 3
    elif all(kd == "door" for kd in kinds):
        category = 1
    elif all(kd == "drawer" for kd in kinds):
        category = 2
    else:
        category = 0
    return parts, category % cfg.n_categories


def _embedding_centers(rng: np.random.Generator, cfg: GenConfig, n_instances: int, n_parts: int) -> np.ndarray:
    # pairwise center distance D keeps inter distances above 3 tau' even after
    # the LogSumExp slack of log(#parts) on both sides of the margin term
    t = cfg.tau_z_prime
    spacing = 5.0 * t + 2.0 * math.log(max(n_parts, 2)) + 1.0
    q, _ = np.linalg.qr(rng.normal(size=(cfg.embed_dim, cfg.embed_dim)))
    return (spacing / math.sqrt(2.0)) * q[:, :n_instances].T


def generate_scene(cfg: GenConfig = GenConfig()) -> SceneTruth:
    """Ground-truth scene, deterministic in ``cfg.seed``."""
    rng = np.random.default_rng([cfg.seed, 0])
    n_inst = cfg.n_instances or int(rng.integers(1, 5))
    layouts = [_instance_parts(rng, cfg) for _ in range(n_inst)]
    n_parts = sum(len(parts) for parts, _ in layouts)
    centers = _embedding_centers(rng, cfg, n_inst, n_parts)
    radius = 0.45 * cfg.tau_z_prime

    truth_parts = []
    instances = []
    for inst, (parts, category) in enumerate(layouts):
        yaw = rng.uniform(-math.pi, math.pi)
        rot = rotation_about_axis((0.0, 0.0, 1.0), yaw)
        base_height = parts[0][0].size[2]
        trans = np.array([3.0 * inst + rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), base_height / 2])
        instances.append((inst, category))
        for local, joint, shape in parts:
            closed = _place(local, rot, trans)
            if joint.joint_type == JointType.FIXED:
                world_joint, pose = joint, closed
            else:
                axis = rot @ joint.axis
                origin = rot @ joint.origin + trans
                canonical = JointParams(joint.joint_type, axis, origin, 0.0, joint.state_max)
                d = float(rng.uniform(0.0, joint.state_max))
                pose = pose_at_state(closed, canonical, d)
                world_joint = JointParams(joint.joint_type, axis, origin, d, joint.state_max)
            direction = rng.normal(size=cfg.embed_dim)
            direction /= np.linalg.norm(direction)
            embedding = centers[inst] + direction * rng.uniform(0.0, radius)
            truth_parts.append(TruthPart(pose, world_joint, category, inst, shape, embedding))
    return SceneTruth(truth_parts, instances, cfg.seed)


def _one_hot(n: int, k: int, spread: float) -> np.ndarray:
    p = np.full(n, spread / n)
    p[k] += 1.0 - spread
    return p


def truth_as_proposal(part: TruthPart, cfg: GenConfig, objectness: float = 1.0) -> PartProposal:
    probs = np.zeros(4)
    probs[int(part.joint.joint_type)] = objectness
    probs[BACKGROUND] = 1.0 - objectness
    emb = part.embedding if part.embedding is not None else np.zeros(cfg.embed_dim)
    return PartProposal(part.pose, part.joint, probs, _one_hot(cfg.n_categories, part.category, 0.0), emb, part.shape)


def _perturb(part: TruthPart, cfg: GenConfig, rng: np.random.Generator) -> PartProposal:
    pose, joint = part.pose, part.joint
    angle = rng.normal(0.0, cfg.rotation_sigma)
    rot = rotation_about_axis(rng.normal(size=3) + 1e-12, angle) @ pose.rotation
    center = pose.center + rng.normal(0.0, cfg.center_sigma, size=3)
    size = np.maximum(pose.size * (1.0 + rng.normal(0.0, cfg.size_sigma, size=3)), 1e-3)
    if joint.joint_type == JointType.FIXED:
        new_joint = joint
    else:
        axis = joint.axis + rng.normal(0.0, cfg.axis_sigma, size=3)
        state_max = max(joint.state_max + rng.normal(0.0, cfg.state_sigma), 0.0)
        state = float(np.clip(joint.state_current + rng.normal(0.0, cfg.state_sigma), 0.0, state_max))
        new_joint = JointParams(joint.joint_type, axis / np.linalg.norm(axis),
                                joint.origin + rng.normal(0.0, cfg.origin_sigma, size=3), state, state_max)
    objectness = float(np.clip(1.0 - abs(rng.normal(0.0, cfg.objectness_sigma)), 0.3, 1.0))
    probs = np.zeros(4)
    probs[int(joint.joint_type)] = objectness
    probs[BACKGROUND] = 1.0 - objectness
    spread = min(abs(rng.normal(0.0, cfg.category_sigma)), 0.9)
    emb = part.embedding if part.embedding is not None else np.zeros(cfg.embed_dim)
    emb = emb + rng.normal(0.0, cfg.embedding_sigma, size=len(emb))
    return PartProposal(PoseSize(rot, center, size), new_joint, probs,
                        _one_hot(cfg.n_categories, part.category, spread), emb, part.shape)


def _near_miss(p: PartProposal, rng: np.random.Generator) -> Optional[PartProposal]:
    """Same door, swung 10 degrees away: tiny box IoU, nearly identical swept hull."""
    j = p.joint
    if j.joint_type != JointType.REVOLUTE:
        return None
    d = j.state_current + NEAR_MISS_ANGLE
    if d > j.state_max:
        d = j.state_current - NEAR_MISS_ANGLE
    if d < 0:
        return None
    pose = pose_at_state(p.pose, j, d)
    joint = JointParams(j.joint_type, j.axis, j.origin, d, j.state_max)
    return PartProposal(pose, joint, p.joint_type_probs, p.category_probs, p.embedding,
                        p.shape_handle).with_objectness(0.9 * p.objectness)


def _spurious(truth: SceneTruth, cfg: GenConfig, rng: np.random.Generator) -> PartProposal:
    anchor = truth.parts[int(rng.integers(len(truth.parts)))].pose.center
    center = anchor + rng.uniform(-0.5, 0.5, size=3)
    size = rng.uniform(0.05, 0.5, size=3)
    rot = rotation_about_axis((0.0, 0.0, 1.0), rng.uniform(-math.pi, math.pi))
    jt = JointType(int(rng.integers(0, 3)))
    if jt == JointType.FIXED:
        joint = JointParams.fixed()
    else:
        axis = rng.normal(size=3)
        state_max = rng.uniform(0.1, 1.5)
        joint = JointParams(jt, axis / np.linalg.norm(axis), center + rng.uniform(-0.2, 0.2, size=3),
                            rng.uniform(0.0, state_max), state_max)
    objectness = rng.uniform(0.25, 0.6)
    fg = rng.dirichlet(np.ones(3)) * objectness
    probs = np.append(fg, 1.0 - objectness)
    cats = rng.dirichlet(np.ones(cfg.n_categories))
    emb = rng.normal(0.0, cfg.tau_z_prime, size=cfg.embed_dim)
    return PartProposal(PoseSize(rot, center, size), joint, probs, cats, emb, BoxShape())


def perturb_to_runs(truth: SceneTruth, cfg: GenConfig = GenConfig()) -> list[list[PartProposal]]:
    """Simulate ``cfg.n_runs`` independent detector runs on one scene.

    Every true part survives a run with probability ``1 - fn_rate`` and is
    perturbed by the noise model. Thin revolute parts get a 10-degree
    near-miss duplicate with probability ``dup_rate``; each true part spawns
    a spurious low-objectness proposal with probability ``fp_rate``.
    """
    rng = np.random.default_rng([cfg.seed, 1])
    runs = []
    for _ in range(cfg.n_runs):
        run: list[PartProposal] = []
        extras: list[PartProposal] = []
        for part in truth.parts:
            if rng.random() < cfg.fn_rate:
                continue
            p = _perturb(part, cfg, rng)
            run.append(p)
            if min(part.pose.size) < THIN and rng.random() < cfg.dup_rate:
                dup = _near_miss(p, rng)
                if dup is not None:
                    extras.append(dup)
        for _ in truth.parts:
            if rng.random() < cfg.fp_rate:
                extras.append(_spurious(truth, cfg, rng))
        runs.append(run + extras)
    return runs
