"""Group parts into instances by embedding distance and vote instance categories."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .types import PartProposal


def _distances(embeddings) -> np.ndarray:
    z = np.asarray(embeddings, dtype=float)
    return np.linalg.norm(z[:, None, :] - z[None, :, :], axis=2)


def group_embeddings(embeddings, tau_z: float) -> list[list[int]]:
    """Connected components of the graph linking pairs closer than ``tau_z``.

    Groups are sorted by their smallest member index; members ascend.
    """
    if tau_z <= 0:
        raise ValueError("tau_z must be positive")
    z = np.asarray(embeddings, dtype=float)
    if len(z) == 0:
        return []
    adjacency = csr_matrix(_distances(z) < tau_z)
    _, labels = connected_components(adjacency, directed=False)
    groups: dict[int, list[int]] = {}
    for idx, label in enumerate(labels):
        groups.setdefault(int(label), []).append(idx)
    return sorted(groups.values(), key=lambda g: g[0])


def group_parts(parts: Sequence[PartProposal], tau_z: float) -> list[list[int]]:
    return group_embeddings([p.embedding for p in parts], tau_z)


def clique_flags(embeddings, groups: Sequence[Sequence[int]], tau_z: float) -> list[bool]:
    """For each group, whether every member pair is closer than ``tau_z``.

    Single-linkage groups can chain together parts that are farther apart
    than ``tau_z``; a False flag reports such a group.
    """
    d = _distances(embeddings) if len(groups) else np.zeros((0, 0))
    flags = []
    for g in groups:
        sub = d[np.ix_(g, g)]
        off = ~np.eye(len(g), dtype=bool)
        flags.append(bool(np.all(sub[off] < tau_z)))
    return flags


def instance_category(members: Sequence[PartProposal]) -> tuple[int, float]:
    """Category of the single most confident category prediction among members.

    Ties go to the lowest member index, then the lowest category index.
    """
    if not members:
        raise ValueError("instance_category needs at least one part")
    best_part, best_prob = 0, -np.inf
    for k, part in enumerate(members):
        top = float(np.max(part.category_probs))
        if top > best_prob:
            best_part, best_prob = k, top
    probs = members[best_part].category_probs
    return int(np.argmax(probs)), float(best_prob)
