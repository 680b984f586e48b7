"""JSONL records for proposals and ground-truth parts.

One JSON object per line. Rotations are row-major 9-vectors; joint states
carry an explicit ``state_unit``: ``"deg"`` for revolute joints (converted
to radians on load), ``"m"`` for prismatic and ``"none"`` for fixed.

Proposal record keys::

    scene, run, center, size, rotation, joint_type, axis, origin,
    state_current, state_max, state_unit, joint_type_probs,
    category_probs, embedding, shape

Truth records replace the probability fields with ``category`` and
``instance`` and keep ``shape`` and ``embedding``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import ValidationFailure
from .shapespace import shape_by_name
from .types import JointParams, JointType, PartProposal, PoseSize, SceneTruth, TruthPart, validate

UNITS = {JointType.REVOLUTE: "deg", JointType.PRISMATIC: "m", JointType.FIXED: "none"}


def _floats(a) -> list:
    return [float(x) for x in np.asarray(a, dtype=float).ravel()]


def _encode_geometry(pose: PoseSize, joint: JointParams) -> dict:
    to_io = np.degrees if joint.joint_type == JointType.REVOLUTE else float
    return {
        "center": _floats(pose.center),
        "size": _floats(pose.size),
        "rotation": _floats(pose.rotation),
        "joint_type": joint.joint_type.name.lower(),
        "axis": _floats(joint.axis),
        "origin": _floats(joint.origin),
        "state_current": float(to_io(joint.state_current)),
        "state_max": float(to_io(joint.state_max)),
        "state_unit": UNITS[joint.joint_type],
    }


def _decode_geometry(rec: dict) -> tuple[PoseSize, JointParams]:
    try:
        pose = PoseSize(np.reshape(rec["rotation"], (3, 3)), rec["center"], rec["size"])
        jt = JointType.parse(rec["joint_type"])
        unit = rec.get("state_unit", UNITS[jt])
        conv = np.radians if unit == "deg" else float
        joint = JointParams(jt, rec["axis"], rec["origin"], float(conv(rec["state_current"])),
                            float(conv(rec["state_max"])))
    except (KeyError, ValueError, TypeError) as exc:
        raise ValidationFailure(f"malformed part record: {exc}") from exc
    return pose, joint


def encode_proposal(p: PartProposal, scene: int = 0, run: int | None = None) -> dict:
    rec: dict = {"scene": int(scene)}
    if run is not None:
        rec["run"] = int(run)
    rec.update(_encode_geometry(p.pose, p.joint))
    rec["joint_type_probs"] = _floats(p.joint_type_probs)
    rec["category_probs"] = _floats(p.category_probs)
    rec["embedding"] = _floats(p.embedding)
    rec["shape"] = getattr(p.shape_handle, "name", None)
    return rec


def decode_proposal(rec: dict, check: bool = True) -> PartProposal:
    pose, joint = _decode_geometry(rec)
    try:
        p = PartProposal(pose, joint, rec["joint_type_probs"], rec["category_probs"],
                         rec.get("embedding", []), shape_by_name(rec.get("shape")))
    except (KeyError, ValueError, TypeError) as exc:
        raise ValidationFailure(f"malformed proposal record: {exc}") from exc
    if check:
        problems = validate(p)
        if problems:
            raise ValidationFailure("; ".join(problems))
    return p


def encode_truth(t: TruthPart, scene: int = 0) -> dict:
    rec: dict = {"scene": int(scene)}
    rec.update(_encode_geometry(t.pose, t.joint))
    rec["category"] = int(t.category)
    rec["instance"] = int(t.instance)
    rec["shape"] = getattr(t.shape, "name", None)
    if t.embedding is not None:
        rec["embedding"] = _floats(t.embedding)
    return rec


def decode_truth(rec: dict, check: bool = True) -> TruthPart:
    pose, joint = _decode_geometry(rec)
    try:
        emb = rec.get("embedding")
        t = TruthPart(pose, joint, int(rec["category"]), int(rec["instance"]), shape_by_name(rec.get("shape")),
                      None if emb is None else np.asarray(emb, dtype=float))
    except (KeyError, ValueError, TypeError) as exc:
        raise ValidationFailure(f"malformed truth record: {exc}") from exc
    if check:
        problems = pose.violations() + joint.violations()
        if problems:
            raise ValidationFailure("; ".join(problems))
    return t


def scene_from_parts(parts: list[TruthPart], scene: int = 0) -> SceneTruth:
    instances: dict[int, int] = {}
    for p in parts:
        instances.setdefault(p.instance, p.category)
    return SceneTruth(parts, list(instances.items()), scene)


def dumps(rec: dict) -> str:
    return json.dumps(rec, separators=(",", ":"))


def write_jsonl(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps(rec) + "\n")


def read_jsonl(path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationFailure(f"{path}:{lineno}: {exc}") from exc


def read_proposals(path) -> dict[int, dict[int, list[PartProposal]]]:
    """Proposals grouped by scene, then run (records without ``run`` go to run 0)."""
    out: dict[int, dict[int, list[PartProposal]]] = {}
    for rec in read_jsonl(path):
        out.setdefault(int(rec.get("scene", 0)), {}).setdefault(int(rec.get("run", 0)), []).append(
            decode_proposal(rec))
    return out


def read_truth(path) -> dict[int, SceneTruth]:
    parts: dict[int, list[TruthPart]] = {}
    for rec in read_jsonl(path):
        parts.setdefault(int(rec.get("scene", 0)), []).append(decode_truth(rec))
    return {s: scene_from_parts(p, s) for s, p in parts.items()}


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
