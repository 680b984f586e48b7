"""Value types shared by every module: poses, joints, part proposals, scenes."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional, Sequence

import numpy as np

ORTHO_TOL = 1e-6
UNIT_TOL = 1e-9
PROB_TOL = 1e-6
EMBED_DIM = 32

# joint_type_probs layout
FIXED, REVOLUTE, PRISMATIC, BACKGROUND = 0, 1, 2, 3


class JointType(enum.IntEnum):
    FIXED = FIXED
    REVOLUTE = REVOLUTE
    PRISMATIC = PRISMATIC

    @classmethod
    def parse(cls, value) -> "JointType":
        if isinstance(value, JointType):
            return value
        if isinstance(value, str):
            return cls[value.upper()]
        return cls(int(value))


def _frozen(a, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class PoseSize:
    """Oriented box: ``rotation`` (3x3), ``center`` and full side lengths ``size``."""

    rotation: np.ndarray
    center: np.ndarray
    size: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "center", _frozen(self.center, (3,)))
        object.__setattr__(self, "size", _frozen(self.size, (3,)))

    @classmethod
    def identity(cls, size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> "PoseSize":
        return cls(np.eye(3), center, size)

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))

    def violations(self) -> list[str]:
        out = []
        R = self.rotation
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(self.center)) or not np.all(
            np.isfinite(self.size)
        ):
            out.append("non-finite pose value")
            return out
        if np.linalg.norm(R.T @ R - np.eye(3)) > ORTHO_TOL or abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            out.append("rotation not in SO(3)")
        if np.any(self.size <= 0):
            out.append("size component ≤ 0")
        return out


@dataclass(frozen=True, eq=False)
class JointParams:
    """Joint type, axis, revolute origin and 1D states (radians or meters)."""

    joint_type: JointType = JointType.FIXED
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    state_current: float = 0.0
    state_max: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "joint_type", JointType.parse(self.joint_type))
        object.__setattr__(self, "axis", _frozen(self.axis, (3,)))
        object.__setattr__(self, "origin", _frozen(self.origin, (3,)))
        object.__setattr__(self, "state_current", float(self.state_current))
        object.__setattr__(self, "state_max", float(self.state_max))

    @classmethod
    def fixed(cls) -> "JointParams":
        return cls()

    def violations(self) -> list[str]:
        out = []
        values = np.concatenate([self.axis, self.origin, [self.state_current, self.state_max]])
        if not np.all(np.isfinite(values)):
            return ["non-finite joint value"]
        if abs(np.linalg.norm(self.axis) - 1.0) > UNIT_TOL:
            out.append("axis not unit")
        if self.joint_type != JointType.FIXED:
            if self.state_max < 0:
                out.append("state_max < 0")
            if not 0.0 <= self.state_current <= self.state_max:
                out.append("state_current outside [0, state_max]")
        return out


@dataclass(frozen=True, eq=False)
class PartProposal:
    """One detected part.

    ``joint_type_probs`` is ordered (fixed, revolute, prismatic, background).
    ``shape_handle`` maps normalized-space points to occupancy in [0, 1]; it is
    optional and never serialized except through its ``name`` attribute.
    """

    pose: PoseSize
    joint: JointParams
    joint_type_probs: np.ndarray
    category_probs: np.ndarray
    embedding: np.ndarray = field(default_factory=lambda: np.zeros(EMBED_DIM))
    shape_handle: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        object.__setattr__(self, "joint_type_probs", _frozen(self.joint_type_probs, (4,)))
        object.__setattr__(self, "category_probs", _frozen(self.category_probs).ravel())
        object.__setattr__(self, "embedding", _frozen(self.embedding).ravel())

    @property
    def objectness(self) -> float:
        return float(1.0 - self.joint_type_probs[BACKGROUND])

    def with_objectness(self, value: float) -> "PartProposal":
        """Rescale foreground probabilities so that objectness equals ``value``."""
        probs = np.array(self.joint_type_probs)
        fg = probs[:BACKGROUND]
        total = fg.sum()
        if total > 0:
            fg = fg * (value / total)
        else:
            fg = np.full(3, value / 3.0)
        probs[:BACKGROUND] = fg
        probs[BACKGROUND] = 1.0 - value
        return replace(self, joint_type_probs=probs)


@dataclass(frozen=True, eq=False)
class TruthPart:
    pose: PoseSize
    joint: JointParams
    category: int
    instance: int
    shape: Any = None  # Shape from partfusion.shapespace; provides surface sampling
    embedding: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class SceneTruth:
    parts: tuple
    instances: tuple  # (instance id, category id) pairs
    scene: int = 0

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "instances", tuple((int(i), int(c)) for i, c in self.instances))

    def violations(self) -> list[str]:
        out = []
        ids = [i for i, _ in self.instances]
        if len(set(ids)) != len(ids):
            out.append("duplicate instance id")
        known = set(ids)
        for k, part in enumerate(self.parts):
            if part.instance not in known:
                out.append(f"part {k} references unknown instance {part.instance}")
            out.extend(f"part {k}: {v}" for v in part.pose.violations() + part.joint.violations())
        return out

    def instance_members(self) -> dict[int, list[int]]:
        groups: dict[int, list[int]] = {i: [] for i, _ in self.instances}
        for k, part in enumerate(self.parts):
            groups.setdefault(part.instance, []).append(k)
        return groups


def validate(proposal: PartProposal) -> list[str]:
    """Return descriptions of every violated invariant; empty when valid."""
    out = proposal.pose.violations() + proposal.joint.violations()
    for name in ("joint_type_probs", "category_probs"):
        p = getattr(proposal, name)
        if not np.all(np.isfinite(p)):
            out.append(f"{name} non-finite")
        elif np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL:
            out.append(f"{name} not a probability vector")
    if not np.all(np.isfinite(proposal.embedding)):
        out.append("embedding non-finite")
    return out


def rotation_from_6d(r6: Sequence[float]) -> np.ndarray:
    """Gram-Schmidt the two stacked 3-vectors into the columns of a rotation."""
    r6 = np.asarray(r6, dtype=float)
    a1, a2 = r6[:3], r6[3:]
    b1 = a1 / np.linalg.norm(a1)
    b2 = a2 - b1 * (b1 @ a2)
    b2 = b2 / np.linalg.norm(b2)
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=1)
